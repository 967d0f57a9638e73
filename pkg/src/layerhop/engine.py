"""The finite-horizon retrieval loop.

run_query seeds the subquery ledger, then repeatedly asks the configured
policy for an action, executes it, and folds the observation into memory.
On Stop (or at the step budget) every component gathered along the way is
deduplicated and reranked into the final top-k list, with exact cost
accounting for the whole run.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from .actions import (
    ActionDecision,
    ActionKind,
    ComponentMode,
    DocumentMode,
    Observation,
    ObservationKind,
    RetrievedComponent,
    StrategyTuple,
)
from .agents import (
    decide_action_heuristic,
    decide_action_llm,
    evaluate_traversal,
    plan_subqueries,
    rerank_final,
)
from .agents.roles import CandidateComponent
from .config import Ablations, EngineConfig
from .errors import BadAnchor, EmptyPool, FingerprintMismatch, MissingProvider
from .graph import LayeredGraph, nav_neighbors
from .index import VectorIndex
from .memory import Memory, apply_transition, init_memory, memory_trace, serialize_memory
from .timing import SPAN_KINDS, CostTracker
from .traverser import resolve_anchor_docs, traverse

TERMINAL_STOPPED = "stopped"
TERMINAL_BUDGET = "budget_exhausted"


@dataclass(frozen=True)
class CostReport:
    """Wall time, span breakdown and token accounting for one run."""

    total_ms: float
    breakdown_ms: dict[str, float]  # llm / vector_search / embedding
    llm_calls: int
    input_tokens: int
    output_tokens: int
    estimated_cost: float

    def to_dict(self) -> dict:
        return {
            "total_ms": self.total_ms,
            "breakdown_ms": dict(self.breakdown_ms),
            "llm_calls": self.llm_calls,
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "estimated_cost": self.estimated_cost,
        }


@dataclass(frozen=True)
class RetrievalResult:
    """Final ranked components plus the full run record."""

    components: tuple[RetrievedComponent, ...]
    terminal: str  # stopped | budget_exhausted
    memory: Memory
    cost: CostReport

    def to_dict(self, include_trace: bool = True) -> dict:
        data = {
            "query": self.memory.original_query,
            "terminal": self.terminal,
            "components": [
                {
                    "doc_id": c.node.doc_id,
                    "component_id": c.node.component_id,
                    "node": str(c.node),
                    "score": c.score,
                    "preview": c.preview,
                }
                for c in self.components
            ],
            "subqueries": [
                {
                    "index": e.index,
                    "text": e.text,
                    "status": e.status.value,
                    "answer": e.answer,
                    "origin": e.origin.value,
                }
                for e in self.memory.subqueries
            ],
            "cost": self.cost.to_dict(),
        }
        if include_trace:
            data["trace"] = memory_trace(self.memory)
        return data


@dataclass
class EngineState:
    """Mutable state threaded through the decision loop."""

    graph: LayeredGraph
    index: VectorIndex
    embedder: object
    llm: object | None
    config: EngineConfig
    memory: Memory
    tracker: CostTracker
    clock: object
    terminal: str | None = None


def neighbor_doc_titles(graph: LayeredGraph, memory: Memory) -> list[str]:
    """Titles of documents one navigational hop from the most recent
    traverse step's documents, in node order."""
    anchors = resolve_anchor_docs(memory, None)
    if not anchors:
        return []
    return [graph.doc_title(n.doc_id) for n in sorted(nav_neighbors(graph, anchors))]


def clamp_decision(
    decision: ActionDecision,
    ablations: Ablations,
    neighbors_exist: bool,
    llm_present: bool,
) -> ActionDecision:
    """Apply ablation constraints to a traverse decision before execution."""
    if decision.kind is not ActionKind.TRAVERSE:
        return decision
    tau = decision.strategy
    doc_mode, comp_mode = tau.document_mode, tau.component_mode
    granularity, anchor = tau.granularity, tau.anchor

    if ablations.no_llm_traversal_reasoning or not llm_present:
        if doc_mode is DocumentMode.LLM_REASONING:
            doc_mode = DocumentMode.VECTOR_SEARCH
        if comp_mode is ComponentMode.LLM_REASONING:
            comp_mode = ComponentMode.VECTOR_SEARCH
    if ablations.no_vector_granularity:
        granularity = 0
    if ablations.no_global_hop and neighbors_exist and doc_mode is not DocumentMode.NEIGHBORS:
        doc_mode = DocumentMode.NEIGHBORS
    if ablations.no_backtracking:
        anchor = None

    clamped = StrategyTuple(
        document_mode=doc_mode,
        component_mode=comp_mode,
        granularity=granularity,
        anchor=anchor,
    )
    if clamped == tau:
        return decision
    return ActionDecision(
        kind=decision.kind,
        subquery=decision.subquery,
        strategy=clamped,
        subtask_index=decision.subtask_index,
        rationale=decision.rationale + " [ablation-clamped]",
    )


def _execute_plan(state: EngineState) -> Observation:
    if state.llm is None:
        return Observation(
            kind=ObservationKind.PLAN_OUTCOME,
            new_subqueries=(),
            evaluator_notes="planner unavailable without a provider",
        )
    memory_text = serialize_memory(
        state.memory, state.config.memory_budget, preview_chars=state.config.preview_chars
    )
    tasks = plan_subqueries(
        state.llm,
        state.memory.original_query,
        memory_text,
        max_retries=state.config.max_llm_retries,
        tracker=state.tracker,
    )
    return Observation(
        kind=ObservationKind.PLAN_OUTCOME, new_subqueries=tuple(tasks)
    )


def _execute_traverse(state: EngineState, decision: ActionDecision) -> Observation:
    try:
        outcome = traverse(
            state.graph,
            state.index,
            state.memory,
            decision.subquery,
            decision.strategy,
            state.config,
            state.llm,
            embedder=state.embedder,
            tracker=state.tracker,
        )
    except (EmptyPool, BadAnchor) as exc:
        return Observation(
            kind=ObservationKind.TRAVERSE_OUTCOME,
            success=False,
            evaluator_notes=f"hop failed: {exc}",
        )

    if state.llm is None:
        return Observation(
            kind=ObservationKind.TRAVERSE_OUTCOME,
            success=bool(outcome.components),
            docs=outcome.candidate_docs,
            components=outcome.components,
            evaluator_notes="vector-only judgement: success iff components retrieved",
        )

    candidates = [
        CandidateComponent(c.node.doc_id, c.node.component_id, c.preview)
        for c in outcome.components
    ]
    result = evaluate_traversal(
        state.llm,
        state.memory.original_query,
        decision.subquery,
        candidates,
        state.memory,
        max_retries=state.config.max_llm_retries,
        tracker=state.tracker,
    )
    return Observation(
        kind=ObservationKind.TRAVERSE_OUTCOME,
        success=result.status == "answerable",
        docs=outcome.candidate_docs,
        components=outcome.components,
        evaluator_notes=result.notes,
        subtask_updates=result.updates,
    )


def step(state: EngineState) -> EngineState:
    """One decision → execution → memory transition."""
    config = state.config
    titles = neighbor_doc_titles(state.graph, state.memory)

    wall_start = state.clock()
    calls_before = state.llm.calls if state.llm is not None else 0
    usage_before = (
        (state.llm.usage.input_tokens, state.llm.usage.output_tokens)
        if state.llm is not None
        else (0, 0)
    )

    if config.policy == "llm":
        decision = decide_action_llm(
            state.llm, state.memory, titles, config, tracker=state.tracker
        )
    else:
        policy_config = config
        if state.llm is None and not config.ablations.no_llm_traversal_reasoning:
            policy_config = config.with_ablation("no_llm_traversal_reasoning")
        decision = decide_action_heuristic(state.memory, titles, policy_config)
    decision = clamp_decision(
        decision, config.ablations, bool(titles), state.llm is not None
    )

    if decision.kind is ActionKind.STOP:
        observation = Observation(kind=ObservationKind.STOP)
        state.terminal = TERMINAL_STOPPED
    elif decision.kind is ActionKind.PLAN:
        observation = _execute_plan(state)
    else:
        observation = _execute_traverse(state, decision)

    wall_ms = (state.clock() - wall_start) * 1000.0
    calls = (state.llm.calls if state.llm is not None else 0) - calls_before
    usage_after = (
        (state.llm.usage.input_tokens, state.llm.usage.output_tokens)
        if state.llm is not None
        else (0, 0)
    )
    state.memory = apply_transition(
        state.memory,
        decision,
        observation,
        wall_time_ms=wall_ms,
        llm_calls=calls,
        token_usage=(
            usage_after[0] - usage_before[0],
            usage_after[1] - usage_before[1],
        ),
    )
    return state


def _final_ranking(state: EngineState) -> tuple[RetrievedComponent, ...]:
    """Deduplicate every component seen across hops (first-retrieved order,
    best score kept) and rerank to top_k_final."""
    entries: dict[tuple[str, str], RetrievedComponent] = {}
    order: list[tuple[str, str]] = []
    for record in state.memory.history:
        if record.action.kind is not ActionKind.TRAVERSE:
            continue
        for comp in record.observation.components:
            key = (comp.node.doc_id, comp.node.component_id)
            if key not in entries:
                entries[key] = comp
                order.append(key)
            elif comp.score > entries[key].score:
                entries[key] = RetrievedComponent(
                    node=comp.node, preview=entries[key].preview, score=comp.score
                )
    candidates = [entries[key] for key in order]
    if not candidates:
        return ()

    if state.llm is None:
        ranked = sorted(candidates, key=lambda c: (-c.score, c.node))
        return tuple(ranked[: state.config.top_k_final])

    cand_objs = [
        CandidateComponent(c.node.doc_id, c.node.component_id, c.preview)
        for c in candidates
    ]
    by_key = {
        (c.node.doc_id, c.node.component_id): c for c in candidates
    }
    ranked = rerank_final(
        state.llm,
        state.memory.original_query,
        cand_objs,
        state.config.top_k_final,
        max_retries=state.config.max_llm_retries,
        tracker=state.tracker,
    )
    return tuple(
        RetrievedComponent(
            node=by_key[(cand.doc_id, cand.component_id)].node,
            preview=cand.content,
            score=score,
        )
        for cand, score in ranked
    )


def run_query(
    graph: LayeredGraph,
    index: VectorIndex,
    embedder,
    query: str,
    config: EngineConfig | None = None,
    llm=None,
    *,
    clock=None,
) -> RetrievalResult:
    """Plan, hop until Stop or the step budget, then rerank what was found."""
    config = config or EngineConfig()
    if config.policy == "llm" and llm is None:
        raise MissingProvider("policy 'llm' needs a chat provider")
    if index.fingerprint != embedder.fingerprint:
        raise FingerprintMismatch(
            f"index built with {index.fingerprint!r}, embedder is {embedder.fingerprint!r}"
        )
    clock = clock or time.perf_counter
    tracker = CostTracker(clock=clock)
    run_start = clock()

    seed_memory = init_memory(query)
    if config.ablations.no_planner or llm is None:
        tasks = [query]
    else:
        tasks = plan_subqueries(
            llm,
            query,
            serialize_memory(seed_memory, config.memory_budget),
            max_retries=config.max_llm_retries,
            tracker=tracker,
        )
    state = EngineState(
        graph=graph,
        index=index,
        embedder=embedder,
        llm=llm,
        config=config,
        memory=init_memory(query, tasks),
        tracker=tracker,
        clock=clock,
    )

    while state.terminal is None and state.memory.step_counter < config.max_steps:
        step(state)
    terminal = state.terminal or TERMINAL_BUDGET

    components = _final_ranking(state)
    total_ms = (clock() - run_start) * 1000.0
    usage = tracker.usage
    cost = CostReport(
        total_ms=total_ms,
        breakdown_ms={kind: tracker.seconds[kind] * 1000.0 for kind in SPAN_KINDS},
        llm_calls=tracker.llm_calls,
        input_tokens=usage.input_tokens,
        output_tokens=usage.output_tokens,
        estimated_cost=(
            usage.input_tokens * config.price_per_mtok_input
            + usage.output_tokens * config.price_per_mtok_output
        )
        / 1_000_000.0,
    )
    return RetrievalResult(
        components=components, terminal=terminal, memory=state.memory, cost=cost
    )
