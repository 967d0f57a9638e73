"""Per-run retrieval memory: subquery ledger plus append-only action history.

The memory is the policy's whole world: which subqueries exist and their
status, what every past hop tried (strategy, anchor), what came back, and
whether the evaluator judged it a success. Serialization renders it into the
prompt context; failure_stats digests it for the deterministic policy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum

from .actions import (
    ActionDecision,
    ActionKind,
    Observation,
    ObservationKind,
    RouteSignature,
    route_signature,
)
from .errors import EmptyQuery, KindMismatch

MIN_SERIALIZE_BUDGET = 256
PREVIEW_CHARS = 240


class SubqueryStatus(str, Enum):
    UNKNOWN = "unknown"
    ANSWERABLE = "answerable"
    NOT_ANSWERABLE = "not_answerable"


class SubqueryOrigin(str, Enum):
    INITIAL_PLAN = "initial_plan"
    REPLAN = "replan"


@dataclass(frozen=True)
class SubqueryEntry:
    index: int  # 1-based
    text: str
    status: SubqueryStatus = SubqueryStatus.UNKNOWN
    answer: str | None = None
    origin: SubqueryOrigin = SubqueryOrigin.INITIAL_PLAN

    def __post_init__(self):
        if (self.answer is not None) != (self.status is SubqueryStatus.ANSWERABLE):
            raise ValueError("answer present iff status is answerable")


@dataclass(frozen=True)
class ActionRecord:
    step: int
    action: ActionDecision
    observation: Observation
    wall_time_ms: float = 0.0
    llm_calls: int = 0
    token_usage: tuple[int, int] = (0, 0)


@dataclass(frozen=True)
class Memory:
    original_query: str
    subqueries: tuple[SubqueryEntry, ...] = ()
    history: tuple[ActionRecord, ...] = ()
    step_counter: int = 0


def init_memory(original_query: str, initial_subqueries: list[str] | tuple[str, ...] = ()) -> Memory:
    if not original_query or not original_query.strip():
        raise EmptyQuery("original query must be non-empty")
    entries = tuple(
        SubqueryEntry(index=i + 1, text=text, origin=SubqueryOrigin.INITIAL_PLAN)
        for i, text in enumerate(initial_subqueries)
    )
    return Memory(original_query=original_query, subqueries=entries)


_KIND_MATCH = {
    ActionKind.TRAVERSE: ObservationKind.TRAVERSE_OUTCOME,
    ActionKind.PLAN: ObservationKind.PLAN_OUTCOME,
    ActionKind.STOP: ObservationKind.STOP,
}


def apply_transition(
    memory: Memory,
    action: ActionDecision,
    observation: Observation,
    *,
    wall_time_ms: float = 0.0,
    llm_calls: int = 0,
    token_usage: tuple[int, int] = (0, 0),
) -> Memory:
    """Append one (action, observation) record and fold in its effects.

    Plan observations append their new subqueries; traverse observations
    apply evaluator subtask updates. Answerable entries never change again;
    out-of-range updates are ignored (callers warn at parse time).
    """
    if _KIND_MATCH[action.kind] is not observation.kind:
        raise KindMismatch(
            f"action {action.kind.value} got observation {observation.kind.value}"
        )
    record = ActionRecord(
        step=memory.step_counter,
        action=action,
        observation=observation,
        wall_time_ms=wall_time_ms,
        llm_calls=llm_calls,
        token_usage=token_usage,
    )

    subqueries = list(memory.subqueries)
    if observation.kind is ObservationKind.PLAN_OUTCOME:
        for text in observation.new_subqueries:
            subqueries.append(
                SubqueryEntry(
                    index=len(subqueries) + 1,
                    text=text,
                    origin=SubqueryOrigin.REPLAN,
                )
            )
    elif observation.kind is ObservationKind.TRAVERSE_OUTCOME:
        for update in observation.subtask_updates:
            pos = update.index - 1
            if pos < 0 or pos >= len(subqueries):
                continue
            entry = subqueries[pos]
            if entry.status is SubqueryStatus.ANSWERABLE:
                continue
            if update.status == SubqueryStatus.ANSWERABLE.value and update.answer:
                subqueries[pos] = replace(
                    entry, status=SubqueryStatus.ANSWERABLE, answer=update.answer
                )
            elif update.status == SubqueryStatus.NOT_ANSWERABLE.value:
                subqueries[pos] = replace(
                    entry, status=SubqueryStatus.NOT_ANSWERABLE, answer=None
                )

    return Memory(
        original_query=memory.original_query,
        subqueries=tuple(subqueries),
        history=memory.history + (record,),
        step_counter=memory.step_counter + 1,
    )


@dataclass
class FailureStats:
    """Digest of the history used by backtracking and escalation rules."""

    consecutive_failures: dict[str, int]
    last_success_step: int | None
    attempted_routes: set[RouteSignature]
    failed_routes: set[RouteSignature]
    failed_doc_titles: dict[str, list[str]]
    failed_anchors: dict[str, set]
    last_attempt_route: dict[str, RouteSignature]


def failure_stats(memory: Memory) -> FailureStats:
    consecutive: dict[str, int] = {}
    last_success: int | None = None
    attempted: set[RouteSignature] = set()
    failed: set[RouteSignature] = set()
    titles: dict[str, list[str]] = {}
    anchors: dict[str, set] = {}
    last_route: dict[str, RouteSignature] = {}

    for record in memory.history:
        if record.action.kind is not ActionKind.TRAVERSE:
            continue
        obs = record.observation
        if obs.kind is not ObservationKind.TRAVERSE_OUTCOME:
            continue
        text = record.action.subquery or ""
        tau = record.action.strategy
        sig = route_signature(text, tau)
        attempted.add(sig)
        last_route[text] = sig
        if obs.success:
            last_success = record.step
            consecutive[text] = 0
        else:
            failed.add(sig)
            consecutive[text] = consecutive.get(text, 0) + 1
            anchors.setdefault(text, set()).add(tau.anchor)
            seen = titles.setdefault(text, [])
            # newest failure's titles first, keeping their rank order
            for doc in reversed(obs.docs):
                if doc.title in seen:
                    seen.remove(doc.title)
                seen.insert(0, doc.title)

    return FailureStats(
        consecutive_failures=consecutive,
        last_success_step=last_success,
        attempted_routes=attempted,
        failed_routes=failed,
        failed_doc_titles=titles,
        failed_anchors=anchors,
        last_attempt_route=last_route,
    )


def _truncate(text: str, limit: int) -> str:
    text = " ".join(text.split())
    return text if len(text) <= limit else text[: limit - 1] + "…"


def _format_step(record: ActionRecord, preview_chars: int) -> str:
    action = record.action
    obs = record.observation
    lines: list[str] = []
    if action.kind is ActionKind.TRAVERSE:
        tau = action.strategy
        flag = "Success" if obs.success else "Failure"
        lines.append(
            f"Step {record.step}: Traverse subtask={action.subtask_index} "
            f'q="{action.subquery}" doc_mode={tau.document_mode.value} '
            f"comp_mode={tau.component_mode.value} granularity={tau.granularity} "
            f"anchor={tau.anchor} -> {flag}"
        )
        if obs.docs:
            rendered = "; ".join(
                f"{d.title} ({d.node}, {d.score:.4f})" for d in obs.docs
            )
            lines.append(f"  docs: {rendered}")
        if obs.components:
            rendered = "; ".join(
                f'{c.node} ({c.score:.4f}) "{_truncate(c.preview, preview_chars)}"'
                for c in obs.components
            )
            lines.append(f"  components: {rendered}")
        if obs.evaluator_notes:
            lines.append(f"  notes: {_truncate(obs.evaluator_notes, preview_chars)}")
    elif action.kind is ActionKind.PLAN:
        added = ", ".join(f'"{t}"' for t in obs.new_subqueries) or "none"
        lines.append(f"Step {record.step}: Plan -> added {added}")
    else:
        lines.append(f"Step {record.step}: Stop")
    return "\n".join(lines)


def serialize_memory(
    memory: Memory, budget: int = 8000, *, preview_chars: int = PREVIEW_CHARS
) -> str:
    """Deterministic textual rendering of the memory for prompt contexts.

    Over budget, whole step blocks are elided oldest-first and replaced with
    a single marker line; the subquery ledger is never elided.
    """
    if budget < MIN_SERIALIZE_BUDGET:
        raise ValueError(f"budget must be >= {MIN_SERIALIZE_BUDGET}")

    header_lines = [f"Original query: {memory.original_query}", "Subqueries:"]
    if memory.subqueries:
        for entry in memory.subqueries:
            line = f"  {entry.index}. [{entry.status.value}] {entry.text}"
            if entry.answer is not None:
                line += f" — answer: {entry.answer}"
            header_lines.append(line)
    else:
        header_lines.append("  (none yet)")
    header_lines.append("History:")
    header = "\n".join(header_lines)

    blocks = [_format_step(r, preview_chars) for r in memory.history]
    if not blocks:
        return header + "\n  (no steps yet)"

    for elided in range(len(blocks) + 1):
        kept = blocks[elided:]
        parts = [header]
        if elided:
            parts.append(f"[... {elided} earlier step(s) elided ...]")
        parts.extend(kept)
        text = "\n".join(parts)
        if len(text) <= budget or not kept:
            return text
    return text  # pragma: no cover


def memory_trace(memory: Memory) -> list[dict]:
    """Structured per-step trace for files and cost accounting."""
    records = []
    for record in memory.history:
        action = record.action
        entry: dict = {
            "step": record.step,
            "action": action.kind.value,
            "rationale": action.rationale,
            "wall_time_ms": record.wall_time_ms,
            "llm_calls": record.llm_calls,
            "token_usage": {
                "input": record.token_usage[0],
                "output": record.token_usage[1],
            },
        }
        if action.kind is ActionKind.TRAVERSE:
            tau = action.strategy
            entry["subquery"] = action.subquery
            entry["subtask_index"] = action.subtask_index
            entry["strategy"] = {
                "document_mode": tau.document_mode.value,
                "component_mode": tau.component_mode.value,
                "granularity": tau.granularity,
                "anchor": tau.anchor,
            }
            entry["success"] = record.observation.success
            entry["docs"] = [
                {"node": str(d.node), "title": d.title, "score": d.score}
                for d in record.observation.docs
            ]
            entry["components"] = [
                {"node": str(c.node), "score": c.score}
                for c in record.observation.components
            ]
        elif action.kind is ActionKind.PLAN:
            entry["new_subqueries"] = list(record.observation.new_subqueries)
        records.append(entry)
    return records


def dumps_trace(memory: Memory) -> str:
    return "\n".join(
        json.dumps(rec, ensure_ascii=False, sort_keys=True) for rec in memory_trace(memory)
    ) + ("\n" if memory.history else "")
