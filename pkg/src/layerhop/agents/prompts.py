"""Prompt template assets and their rendering helpers.

Templates live under prompt_assets/ as Python format strings: literal JSON
braces are doubled, input slots are single-braced named placeholders.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

from ..memory import Memory, serialize_memory

TEMPLATE_NAMES = (
    "orchestrator",
    "doc_traverser",
    "comp_traverser",
    "planner",
    "evaluator",
    "reranker",
)


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    if name not in TEMPLATE_NAMES:
        raise KeyError(f"unknown prompt template {name!r}")
    return (
        resources.files("layerhop.agents")
        .joinpath(f"prompt_assets/{name}.txt")
        .read_text(encoding="utf-8")
    )


def render_subtask_ledger(memory: Memory) -> str:
    if not memory.subqueries:
        return "(none yet)"
    lines = []
    for entry in memory.subqueries:
        line = f"{entry.index}. [{entry.status.value}] {entry.text}"
        if entry.answer is not None:
            line += f" — answer: {entry.answer}"
        lines.append(line)
    return "\n".join(lines)


def render_neighbor_docs(titles: list[str]) -> str:
    if not titles:
        return "(none)"
    return "\n".join(f"- {t}" for t in titles)


def render_candidate_lines(records: list[dict]) -> str:
    return "\n".join(
        f"  {i}: {json.dumps(rec, ensure_ascii=False)}" for i, rec in enumerate(records)
    )


def orchestrator_prompt(
    memory: Memory, neighbor_doc_titles: list[str], memory_budget: int = 8000
) -> str:
    return load_template("orchestrator").format(
        query=memory.original_query,
        serialized_subtasks=render_subtask_ledger(memory),
        serialized_memory=serialize_memory(memory, budget=memory_budget),
        neighbor_docs=render_neighbor_docs(neighbor_doc_titles),
    )


def doc_traverser_prompt(
    original_query: str,
    subtask_query: str,
    vector_granularity: str,
    candidates: list[dict],
    max_results: int,
) -> str:
    return load_template("doc_traverser").format(
        original_query=original_query,
        subtask_query=subtask_query,
        vector_granularity=vector_granularity,
        candidates=render_candidate_lines(candidates),
        max_results=max_results,
    )


def comp_traverser_prompt(
    original_query: str,
    subtask_query: str,
    vector_granularity: str,
    candidates: list[dict],
    max_results: int,
) -> str:
    return load_template("comp_traverser").format(
        original_query=original_query,
        subtask_query=subtask_query,
        vector_granularity=vector_granularity,
        candidates=render_candidate_lines(candidates),
        max_results=max_results,
    )


def planner_prompt(original_query: str, memory_text: str) -> str:
    return load_template("planner").format(
        original_query=original_query, memory=memory_text
    )


def evaluator_prompt(
    original_query: str, subtask_query: str, candidates: list[dict], subtasks: str
) -> str:
    return load_template("evaluator").format(
        original_query=original_query,
        subtask_query=subtask_query,
        candidates=render_candidate_lines(candidates),
        subtasks=subtasks,
    )


def reranker_prompt(query: str, candidates: list[dict], top_k: int) -> str:
    return load_template("reranker").format(
        query=query,
        candidates=render_candidate_lines(candidates),
        top_k=top_k,
    )
