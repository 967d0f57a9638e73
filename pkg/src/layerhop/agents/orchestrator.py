"""Action policies: the LLM-backed orchestrator and the deterministic rules.

The deterministic policy implements the prompt's decision procedure as code.
Every decision carries a rationale tag naming the rule that produced it:

  (a) stop: all subqueries answerable, or the step budget is exhausted
  (b) subtask selection: advance past subtasks whose latest attempt
      succeeded or whose ladder is exhausted (internal; never emitted alone)
  (c) escalation ladder: cheapest-first strategy for the current subtask
  (d) backtracking: re-anchor to the most recent success, rewrite the
      subquery to exclude failed documents, restart the ladder
  (e) replan: backtracking across >=2 distinct anchors failed, or no fresh
      route exists at the backtrack target
  (f) collision: the computed route already failed, so the level was bumped
"""

from __future__ import annotations

from ..actions import (
    ActionDecision,
    ActionKind,
    ComponentMode,
    DocumentMode,
    StrategyTuple,
    route_signature,
)
from ..config import Ablations, EngineConfig
from ..memory import ActionRecord, Memory, SubqueryEntry, SubqueryStatus, failure_stats
from ..timing import CostTracker
from .prompts import orchestrator_prompt
from .structured import request_structured

# escalation ladder, cheapest first: (document mode, component mode, granularity)
LADDER: tuple[tuple[DocumentMode, ComponentMode, int], ...] = (
    (DocumentMode.NEIGHBORS, ComponentMode.VECTOR_SEARCH, 0),
    (DocumentMode.VECTOR_SEARCH, ComponentMode.VECTOR_SEARCH, 0),
    (DocumentMode.VECTOR_SEARCH, ComponentMode.VECTOR_SEARCH, 1),
    (DocumentMode.VECTOR_SEARCH, ComponentMode.LLM_REASONING, 1),
    (DocumentMode.LLM_REASONING, ComponentMode.LLM_REASONING, 1),
)

MAX_EXCLUDED_TITLES = 3

_ORCHESTRATOR_SYSTEM = "You are a retrieval action-decision assistant."


def effective_ladder(
    ablations: Ablations, neighbors_exist: bool
) -> list[tuple[DocumentMode, ComponentMode, int]]:
    """The ladder with ablation clamps applied and duplicates collapsed."""
    rungs: list[tuple[DocumentMode, ComponentMode, int]] = []
    for doc_mode, comp_mode, g in LADDER:
        if ablations.no_llm_traversal_reasoning:
            if doc_mode is DocumentMode.LLM_REASONING:
                doc_mode = DocumentMode.VECTOR_SEARCH
            if comp_mode is ComponentMode.LLM_REASONING:
                comp_mode = ComponentMode.VECTOR_SEARCH
        if ablations.no_vector_granularity:
            g = 0
        if ablations.no_global_hop and neighbors_exist and doc_mode is not DocumentMode.NEIGHBORS:
            doc_mode = DocumentMode.NEIGHBORS
        rung = (doc_mode, comp_mode, g)
        if rung not in rungs:
            rungs.append(rung)
    return rungs


def rewrite_subquery(base_text: str, failed_titles: list[str]) -> str:
    """Deterministic dead-end negation appended to the subquery."""
    titles = failed_titles[:MAX_EXCLUDED_TITLES]
    if not titles:
        return base_text
    return f"{base_text}; exclude: {', '.join(titles)}"


def _rung_index(ladder, tau: StrategyTuple) -> int | None:
    key = (tau.document_mode, tau.component_mode, tau.granularity)
    try:
        return ladder.index(key)
    except ValueError:
        return None


def _subtask_attempts(memory: Memory, subtask_index: int) -> list[ActionRecord]:
    return [
        r
        for r in memory.history
        if r.action.kind is ActionKind.TRAVERSE
        and r.action.subtask_index == subtask_index
    ]


def _exhausted(attempts: list[ActionRecord], ladder) -> bool:
    """A subtask is set aside when its latest attempt succeeded or the
    terminal rung failed."""
    if not attempts:
        return False
    last = attempts[-1]
    if last.observation.success:
        return True
    return _rung_index(ladder, last.action.strategy) == len(ladder) - 1


def _streak(attempts: list[ActionRecord]) -> int:
    """Trailing consecutive failures sharing the last attempt's
    (subquery text, anchor)."""
    if not attempts:
        return 0
    last = attempts[-1]
    key = (last.action.subquery, last.action.strategy.anchor)
    count = 0
    for record in reversed(attempts):
        if record.observation.success:
            break
        if (record.action.subquery, record.action.strategy.anchor) != key:
            break
        count += 1
    return count


def _failed_titles(attempts: list[ActionRecord]) -> list[str]:
    """Distinct document titles from failed attempts, most recent failure
    first, preserving within-step rank order."""
    titles: list[str] = []
    for record in attempts:
        if record.observation.success:
            continue
        for doc in reversed(record.observation.docs):
            if doc.title in titles:
                titles.remove(doc.title)
            titles.insert(0, doc.title)
    return titles


def _start_index(ladder, neighbors_exist: bool) -> int:
    if neighbors_exist:
        return 0
    for i, (doc_mode, _, _) in enumerate(ladder):
        if doc_mode is not DocumentMode.NEIGHBORS:
            return i
    return 0


def _first_fresh_rung(
    ladder, start: int, subquery: str, anchor: int | None, failed_routes
) -> tuple[int | None, bool]:
    """First rung at or above `start` whose signature has not failed.
    Returns (index or None, whether collisions bumped the level)."""
    level = start
    bumped = False
    while level < len(ladder):
        doc_mode, comp_mode, g = ladder[level]
        tau = StrategyTuple(
            document_mode=doc_mode, component_mode=comp_mode, granularity=g, anchor=anchor
        )
        if route_signature(subquery, tau) not in failed_routes:
            return level, bumped
        level += 1
        bumped = True
    return None, bumped


def _traverse_decision(
    ladder, level: int, subquery: str, anchor: int | None, subtask_index: int, tag: str
) -> ActionDecision:
    doc_mode, comp_mode, g = ladder[level]
    return ActionDecision(
        kind=ActionKind.TRAVERSE,
        subquery=subquery,
        strategy=StrategyTuple(
            document_mode=doc_mode,
            component_mode=comp_mode,
            granularity=g,
            anchor=anchor,
        ),
        subtask_index=subtask_index,
        rationale=tag,
    )


def _backtrack_or_replan(
    memory: Memory,
    entry: SubqueryEntry,
    attempts: list[ActionRecord],
    ladder,
    neighbors_exist: bool,
) -> ActionDecision:
    """Rule (d) with its (e) escape hatches."""
    prior_backtracks = sum(
        1 for r in attempts if r.action.rationale.startswith("(d)")
    )
    failed_anchors = {
        r.action.strategy.anchor for r in attempts if not r.observation.success
    }
    if prior_backtracks >= 1 and len(failed_anchors) >= 2:
        return ActionDecision(kind=ActionKind.PLAN, rationale="(e)")

    anchor = failure_stats(memory).last_success_step
    subquery = rewrite_subquery(entry.text, _failed_titles(attempts))
    if anchor is not None and memory.history[anchor].observation.docs:
        start = 0  # anchored docs give the neighbors rung something to chew on
    else:
        start = _start_index(ladder, neighbors_exist)
    failed_routes = failure_stats(memory).failed_routes
    level, _ = _first_fresh_rung(ladder, start, subquery, anchor, failed_routes)
    if level is None:
        return ActionDecision(kind=ActionKind.PLAN, rationale="(e)")
    return _traverse_decision(ladder, level, subquery, anchor, entry.index, "(d)")


def decide_action_heuristic(
    memory: Memory, neighbor_doc_titles: list[str], config: EngineConfig
) -> ActionDecision:
    """Deterministic policy: stop / escalate / backtrack / replan by rule."""
    ablations = config.ablations
    neighbors_exist = bool(neighbor_doc_titles)
    ladder = effective_ladder(ablations, neighbors_exist)

    # (a) stop conditions
    if memory.subqueries and all(
        e.status is SubqueryStatus.ANSWERABLE for e in memory.subqueries
    ):
        return ActionDecision(kind=ActionKind.STOP, rationale="(a)")
    if memory.step_counter >= config.max_steps:
        return ActionDecision(kind=ActionKind.STOP, rationale="(a)")
    if not memory.subqueries:
        return ActionDecision(kind=ActionKind.PLAN, rationale="(e)")

    # (b) current subtask: earliest unresolved with headroom, else revisit
    unresolved = [
        e for e in memory.subqueries if e.status is not SubqueryStatus.ANSWERABLE
    ]
    current = None
    forced = False
    for entry in unresolved:
        if not _exhausted(_subtask_attempts(memory, entry.index), ladder):
            current = entry
            break
    if current is None:
        current = unresolved[-1]
        forced = True

    attempts = _subtask_attempts(memory, current.index)
    stats = failure_stats(memory)

    if not attempts:
        # (c) fresh subtask, (f) if its cheap rungs already failed elsewhere
        start = _start_index(ladder, neighbors_exist)
        level, bumped = _first_fresh_rung(
            ladder, start, current.text, None, stats.failed_routes
        )
        if level is None:
            if ablations.no_backtracking:
                return ActionDecision(kind=ActionKind.PLAN, rationale="(e)")
            return _backtrack_or_replan(memory, current, attempts, ladder, neighbors_exist)
        return _traverse_decision(
            ladder, level, current.text, None, current.index, "(f)" if bumped else "(c)"
        )

    last = attempts[-1]
    last_tau = last.action.strategy
    last_level = _rung_index(ladder, last_tau)

    trigger = forced
    if not ablations.no_backtracking:
        if _streak(attempts) >= 2:
            trigger = True
        if not last.observation.success and last_level == len(ladder) - 1:
            trigger = True
        if (
            not last.observation.success
            and last_tau.document_mode is DocumentMode.NEIGHBORS
            and not last.observation.docs
        ):
            trigger = True

    if trigger:
        if ablations.no_backtracking:
            return ActionDecision(kind=ActionKind.PLAN, rationale="(e)")
        return _backtrack_or_replan(memory, current, attempts, ladder, neighbors_exist)

    # (c)/(f) plain escalation on the same (subquery, anchor)
    subquery = last.action.subquery
    anchor = last_tau.anchor
    next_level = (last_level + 1) if last_level is not None else _start_index(
        ladder, neighbors_exist
    )
    if next_level >= len(ladder):
        if ablations.no_backtracking:
            return ActionDecision(kind=ActionKind.PLAN, rationale="(e)")
        return _backtrack_or_replan(memory, current, attempts, ladder, neighbors_exist)
    level, bumped = _first_fresh_rung(
        ladder, next_level, subquery, anchor, stats.failed_routes
    )
    if level is None:
        if ablations.no_backtracking:
            return ActionDecision(kind=ActionKind.PLAN, rationale="(e)")
        return _backtrack_or_replan(memory, current, attempts, ladder, neighbors_exist)
    return _traverse_decision(
        ladder, level, subquery, anchor, current.index, "(f)" if bumped else "(c)"
    )


_DOC_MODES = {
    "neighbors": DocumentMode.NEIGHBORS,
    "vector search": DocumentMode.VECTOR_SEARCH,
    "vector_search": DocumentMode.VECTOR_SEARCH,
    "llm reasoning": DocumentMode.LLM_REASONING,
    "llm_reasoning": DocumentMode.LLM_REASONING,
}
_COMP_MODES = {
    "vector search": ComponentMode.VECTOR_SEARCH,
    "vector_search": ComponentMode.VECTOR_SEARCH,
    "llm reasoning": ComponentMode.LLM_REASONING,
    "llm_reasoning": ComponentMode.LLM_REASONING,
}
_GRANULARITY = {"document": 0, "component": 1, "subcomponent": 2}


def decide_action_llm(
    llm,
    memory: Memory,
    neighbor_doc_titles: list[str],
    config: EngineConfig,
    *,
    tracker: CostTracker | None = None,
) -> ActionDecision:
    """One orchestrator-prompt round trip mapped onto an ActionDecision."""

    def validate(value: object) -> ActionDecision:
        if not isinstance(value, dict) or not isinstance(value.get("action"), dict):
            raise ValueError("expected object with 'action'")
        action = value["action"]
        next_action = action.get("next_action")
        if next_action == "stop":
            return ActionDecision(kind=ActionKind.STOP, rationale="orchestrator")
        if next_action == "replan":
            return ActionDecision(kind=ActionKind.PLAN, rationale="orchestrator")
        if next_action != "search":
            raise ValueError(f"bad next_action {next_action!r}")
        subquery = action.get("next_retrieval_subtask")
        if not isinstance(subquery, str) or not subquery.strip():
            raise ValueError("search needs a non-empty next_retrieval_subtask")
        doc_raw = action.get("document_search_mode")
        comp_raw = action.get("component_search_mode")
        if doc_raw not in _DOC_MODES:
            raise ValueError(f"bad document_search_mode {doc_raw!r}")
        if comp_raw not in _COMP_MODES:
            raise ValueError(f"bad component_search_mode {comp_raw!r}")
        g_raw = action.get("vector_granularity")
        if g_raw is None:
            granularity = 0  # the strict schema omits the field; default document
        elif g_raw in _GRANULARITY:
            granularity = _GRANULARITY[g_raw]
        else:
            raise ValueError(f"bad vector_granularity {g_raw!r}")
        anchor = action.get("anchor")
        if not isinstance(anchor, int) or not (
            0 <= anchor < len(memory.history)
            and memory.history[anchor].action.kind is ActionKind.TRAVERSE
        ):
            anchor = None  # invalid anchors are nulled, decision kept
        subtask_index = next(
            (e.index for e in memory.subqueries if e.text == subquery), None
        )
        return ActionDecision(
            kind=ActionKind.TRAVERSE,
            subquery=subquery,
            strategy=StrategyTuple(
                document_mode=_DOC_MODES[doc_raw],
                component_mode=_COMP_MODES[comp_raw],
                granularity=granularity,
                anchor=anchor,
            ),
            subtask_index=subtask_index,
            rationale="orchestrator",
        )

    user = orchestrator_prompt(memory, neighbor_doc_titles, config.memory_budget)
    return request_structured(
        llm,
        tag="orchestrator",
        system=_ORCHESTRATOR_SYSTEM,
        user=user,
        validator=validate,
        max_retries=config.max_llm_retries,
        tracker=tracker,
    )
