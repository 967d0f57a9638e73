"""Planner, traversal evaluator and final reranker agent calls."""

from __future__ import annotations

from dataclasses import dataclass

from ..actions import SubtaskUpdate
from ..memory import Memory
from ..timing import CostTracker
from . import prompts
from .structured import request_structured

_PLANNER_SYSTEM = "You are a retrieval-plan revision assistant."
_EVALUATOR_SYSTEM = "You are a retrieval evaluation assistant."
_RERANKER_SYSTEM = "You are a reranking assistant for retrieval."


@dataclass(frozen=True)
class CandidateComponent:
    """One component as presented to an LLM stage."""

    doc_id: str
    component_id: str
    content: str

    def record(self) -> dict:
        return {
            "filename": self.doc_id,
            "component_id": self.component_id,
            "content": self.content,
        }


@dataclass(frozen=True)
class EvalResult:
    status: str  # "answerable" | "not_answerable"
    updates: tuple[SubtaskUpdate, ...] = ()
    notes: str = ""


def plan_subqueries(
    llm,
    original_query: str,
    memory_text: str,
    *,
    max_retries: int = 2,
    tracker: CostTracker | None = None,
) -> list[str]:
    """Ask the planner for 1-2 retrieval tasks."""

    def validate(value: object) -> list[str]:
        if not isinstance(value, dict) or "tasks" not in value:
            raise ValueError("expected object with 'tasks'")
        tasks = value["tasks"]
        if not isinstance(tasks, list) or not all(
            isinstance(t, str) and t.strip() for t in tasks
        ):
            raise ValueError("'tasks' must be a list of non-empty strings")
        if not 1 <= len(tasks) <= 2:
            raise ValueError(f"expected 1-2 tasks, got {len(tasks)}")
        return list(tasks)

    user = prompts.planner_prompt(original_query, memory_text)
    return request_structured(
        llm,
        tag="planner",
        system=_PLANNER_SYSTEM,
        user=user,
        validator=validate,
        max_retries=max_retries,
        tracker=tracker,
    )


def evaluate_traversal(
    llm,
    original_query: str,
    subtask_query: str,
    components: list[CandidateComponent],
    memory: Memory,
    *,
    max_retries: int = 2,
    tracker: CostTracker | None = None,
) -> EvalResult:
    """Judge whether the retrieved components answer the subtask and which
    ledger entries they resolve. Empty retrievals short-circuit to
    not_answerable without an LLM call."""
    if not components:
        return EvalResult(status="not_answerable", notes="empty retrieval")

    n_subtasks = len(memory.subqueries)
    warnings: list[str] = []

    def validate(value: object) -> EvalResult:
        if not isinstance(value, dict):
            raise ValueError("expected object")
        status_raw = value.get("status")
        if status_raw not in ("answerable", "not answerable", "not_answerable"):
            raise ValueError(f"bad status {status_raw!r}")
        status = "answerable" if status_raw == "answerable" else "not_answerable"
        raw_updates = value.get("updated_subtasks", [])
        if not isinstance(raw_updates, list):
            raise ValueError("updated_subtasks must be a list")
        updates: list[SubtaskUpdate] = []
        for item in raw_updates:
            if not isinstance(item, dict) or not isinstance(item.get("index"), int):
                raise ValueError("updated_subtasks entries need an integer index")
            index = item["index"]
            answer = item.get("answer")
            if not isinstance(answer, str) or not answer.strip():
                raise ValueError("subtask update needs a non-empty answer")
            if not 1 <= index <= n_subtasks:
                warnings.append(f"dropped update for unknown subtask index {index}")
                continue
            updates.append(
                SubtaskUpdate(index=index, status="answerable", answer=answer)
            )
        return EvalResult(
            status=status, updates=tuple(updates), notes="; ".join(warnings)
        )

    user = prompts.evaluator_prompt(
        original_query,
        subtask_query,
        [c.record() for c in components],
        prompts.render_subtask_ledger(memory),
    )
    return request_structured(
        llm,
        tag="evaluator",
        system=_EVALUATOR_SYSTEM,
        user=user,
        validator=validate,
        max_retries=max_retries,
        tracker=tracker,
    )


def rerank_final(
    llm,
    query: str,
    candidates: list[CandidateComponent],
    top_k: int,
    *,
    max_retries: int = 2,
    tracker: CostTracker | None = None,
) -> list[tuple[CandidateComponent, float]]:
    """Rank the gathered components; unselected candidates pad the tail in
    first-retrieved order with score 0 so top-k metrics stay well-defined.

    Candidates must already be deduplicated by (doc_id, component_id) in
    first-retrieved order.
    """

    def validate(value: object) -> list[tuple[int, float]]:
        if not isinstance(value, dict) or not isinstance(value.get("ranking"), list):
            raise ValueError("expected object with 'ranking' list")
        picked: list[tuple[int, float]] = []
        seen: set[int] = set()
        for item in value["ranking"]:
            if not isinstance(item, dict) or not isinstance(item.get("index"), int):
                raise ValueError("ranking entries need an integer index")
            index = item["index"]
            if not 0 <= index < len(candidates) or index in seen:
                continue  # invalid or duplicate selections are dropped
            cand = candidates[index]
            if "filename" in item and item["filename"] != cand.doc_id:
                continue
            if "component_id" in item and item["component_id"] != cand.component_id:
                continue
            score = item.get("score", 0.0)
            if not isinstance(score, (int, float)):
                raise ValueError("score must be a number")
            seen.add(index)
            picked.append((index, float(score)))
        return picked

    user = prompts.reranker_prompt(query, [c.record() for c in candidates], top_k)
    picked = request_structured(
        llm,
        tag="reranker",
        system=_RERANKER_SYSTEM,
        user=user,
        validator=validate,
        max_retries=max_retries,
        tracker=tracker,
    )
    picked.sort(key=lambda pair: -pair[1])
    picked = picked[:top_k]
    chosen = {index for index, _ in picked}
    result = [(candidates[index], score) for index, score in picked]
    for i, cand in enumerate(candidates):
        if len(result) >= top_k:
            break
        if i not in chosen:
            result.append((cand, 0.0))
    return result
