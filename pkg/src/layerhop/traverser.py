"""One retrieval hop in two stages: pick candidate documents, then pick
components inside them.

Each stage builds a candidate pool, ranks it by descendant-max vector score,
and — in llm_reasoning mode — lets the LLM choose a subset of the pre-filtered
pool. Stage outputs are always subsets of the stage pool no matter what the
LLM returns; violations are dropped with a trace warning.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .actions import (
    ActionKind,
    ComponentMode,
    DocumentMode,
    RetrievedComponent,
    RetrievedDoc,
    StrategyTuple,
)
from .agents.prompts import comp_traverser_prompt, doc_traverser_prompt
from .agents.structured import request_structured
from .config import EngineConfig
from .errors import BadAnchor, EmptyPool, MissingProvider
from .graph import (
    DOC_LAYER,
    LayeredGraph,
    NodeId,
    nav_neighbors,
    node_text,
)
from .index import VectorIndex, embed_query, topk_nodes
from .memory import ActionRecord, Memory
from .timing import CostTracker

GRANULARITY_WORDS = ("document", "component", "subcomponent")

_DOC_SELECTOR_SYSTEM = "You are a retrieval selection assistant."
_COMP_SELECTOR_SYSTEM = "You are a retrieval selection assistant."


@dataclass(frozen=True)
class StageTrace:
    """Audit record for one traversal stage."""

    stage: str  # "documents" | "components"
    mode: str
    pool: tuple[tuple[str, float], ...]  # (node, vector score), ranked
    selected: tuple[str, ...]
    prompt: str = ""
    raw_responses: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()
    llm_calls: int = 0


@dataclass(frozen=True)
class TraversalOutcome:
    """Ranked documents and components produced by one hop."""

    candidate_docs: tuple[RetrievedDoc, ...]
    components: tuple[RetrievedComponent, ...]
    stage_traces: tuple[StageTrace, ...]
    llm_calls: int = 0
    token_usage: tuple[int, int] = (0, 0)


def make_preview(text: str, limit: int) -> str:
    """Whitespace-collapsed prefix used wherever component text is shown."""
    text = " ".join(text.split())
    return text if len(text) <= limit else text[: limit - 1] + "…"


def _llm_subset(
    llm,
    *,
    tag: str,
    system: str,
    prompt_text: str,
    pool_keys: list[tuple[str, str | None]],  # (filename, component_id or None)
    max_results: int,
    max_retries: int,
    tracker: CostTracker | None,
    warnings: list[str],
    raw_out: list[str],
) -> list[int]:
    """Run a selection prompt and return validated pool indices in the
    LLM's order. Out-of-range/duplicate/mismatched entries are dropped."""

    def validate(value: object) -> list[int]:
        if not isinstance(value, dict) or not isinstance(value.get("selection"), list):
            raise ValueError("expected object with 'selection' list")
        picks: list[int] = []
        seen: set[int] = set()
        for item in value["selection"]:
            if not isinstance(item, dict) or not isinstance(item.get("index"), int):
                raise ValueError("selection entries need an integer index")
            index = item["index"]
            if not 0 <= index < len(pool_keys):
                warnings.append(f"dropped out-of-range selection index {index}")
                continue
            if index in seen:
                warnings.append(f"dropped duplicate selection index {index}")
                continue
            filename, component_id = pool_keys[index]
            if "filename" in item and item["filename"] != filename:
                warnings.append(
                    f"dropped selection {index}: filename does not match pool"
                )
                continue
            if (
                component_id is not None
                and "component_id" in item
                and item["component_id"] != component_id
            ):
                warnings.append(
                    f"dropped selection {index}: component_id does not match pool"
                )
                continue
            seen.add(index)
            picks.append(index)
        return picks

    picks = request_structured(
        llm,
        tag=tag,
        system=system,
        user=prompt_text,
        validator=validate,
        max_retries=max_retries,
        tracker=tracker,
        raw_out=raw_out,
    )
    if len(picks) > max_results:
        warnings.append(
            f"selection of {len(picks)} truncated to max_results={max_results}"
        )
        picks = picks[:max_results]
    return picks


def select_documents(
    graph: LayeredGraph,
    index: VectorIndex,
    q_vec: np.ndarray,
    tau: StrategyTuple,
    anchors: set[NodeId],
    k: int,
    llm=None,
    *,
    original_query: str = "",
    subtask_query: str = "",
    max_results: int = 5,
    max_retries: int = 2,
    tracker: CostTracker | None = None,
) -> tuple[list[RetrievedDoc], StageTrace]:
    """Document stage: local neighbors, global vector search, or LLM
    selection over the vector-prefiltered shortlist."""
    if k < 1:
        raise ValueError("shortlist size k must be >= 1")
    warnings: list[str] = []

    if tau.document_mode is DocumentMode.NEIGHBORS:
        if not anchors:
            raise EmptyPool("neighbors mode has no anchor documents")
        pool_nodes = sorted(nav_neighbors(graph, set(anchors)))
        if not pool_nodes:
            raise EmptyPool("anchor documents have no navigational neighbors")
    else:
        pool_nodes = list(graph.layer_nodes(DOC_LAYER))
        if not pool_nodes:
            raise EmptyPool("graph has no documents")

    skipped: list[NodeId] = []
    ranked = topk_nodes(
        index, graph, q_vec, pool_nodes, tau.granularity, k,
        tracker=tracker, skipped=skipped,
    )
    warnings.extend(f"skipped unscorable node {n}" for n in skipped)
    pool_docs = [
        RetrievedDoc(node=n, title=graph.doc_title(n.doc_id), score=s)
        for n, s in ranked
    ]

    prompt_text = ""
    raw_responses: list[str] = []
    llm_calls = 0
    if tau.document_mode is DocumentMode.LLM_REASONING:
        if llm is None:
            raise MissingProvider("document-stage llm_reasoning needs a provider")
        records = [
            {
                "filename": d.node.doc_id,
                "title": d.title,
                "summary": node_text(graph, d.node),
                "score": round(d.score, 4),
            }
            for d in pool_docs
        ]
        prompt_text = doc_traverser_prompt(
            original_query,
            subtask_query,
            GRANULARITY_WORDS[tau.granularity],
            records,
            max_results,
        )
        before = llm.calls
        picks = _llm_subset(
            llm,
            tag="doc_traverser",
            system=_DOC_SELECTOR_SYSTEM,
            prompt_text=prompt_text,
            pool_keys=[(d.node.doc_id, None) for d in pool_docs],
            max_results=max_results,
            max_retries=max_retries,
            tracker=tracker,
            warnings=warnings,
            raw_out=raw_responses,
        )
        llm_calls = llm.calls - before
        if picks:
            docs = [pool_docs[i] for i in picks]
        else:
            warnings.append(
                "empty document selection; falling back to vector top results"
            )
            docs = pool_docs[:max_results]
    else:
        docs = list(pool_docs)

    trace = StageTrace(
        stage="documents",
        mode=tau.document_mode.value,
        pool=tuple((str(d.node), d.score) for d in pool_docs),
        selected=tuple(str(d.node) for d in docs),
        prompt=prompt_text,
        raw_responses=tuple(raw_responses),
        warnings=tuple(warnings),
        llm_calls=llm_calls,
    )
    return docs, trace


def select_components(
    graph: LayeredGraph,
    index: VectorIndex,
    q_vec: np.ndarray,
    tau: StrategyTuple,
    docs: list[RetrievedDoc],
    k: int,
    llm=None,
    *,
    original_query: str = "",
    subtask_query: str = "",
    max_results: int = 8,
    max_retries: int = 2,
    preview_chars: int = 240,
    tracker: CostTracker | None = None,
) -> tuple[list[RetrievedComponent], StageTrace]:
    """Component stage: rank the selected documents' children, optionally
    filtered by the LLM. Scoring never happens above the component layer."""
    if k < 1:
        raise ValueError("shortlist size k must be >= 1")
    if not docs:
        raise ValueError("component stage needs a non-empty document list")
    warnings: list[str] = []

    pool_nodes: list[NodeId] = []
    for doc in docs:
        doc_index = graph.index_of(doc.node)
        pool_nodes.extend(graph.comp_ids[i] for i in graph.doc_children[doc_index])
    if not pool_nodes:
        raise EmptyPool("selected documents have no components")

    skipped: list[NodeId] = []
    ranked = topk_nodes(
        index, graph, q_vec, pool_nodes, tau.component_granularity, k,
        tracker=tracker, skipped=skipped,
    )
    warnings.extend(f"skipped unscorable node {n}" for n in skipped)
    pool_comps = [
        RetrievedComponent(
            node=n, preview=make_preview(node_text(graph, n), preview_chars), score=s
        )
        for n, s in ranked
    ]

    prompt_text = ""
    raw_responses: list[str] = []
    llm_calls = 0
    if tau.component_mode is ComponentMode.LLM_REASONING:
        if llm is None:
            raise MissingProvider("component-stage llm_reasoning needs a provider")
        records = [
            {
                "filename": c.node.doc_id,
                "component_id": c.node.component_id,
                "content": c.preview,
                "score": round(c.score, 4),
            }
            for c in pool_comps
        ]
        prompt_text = comp_traverser_prompt(
            original_query,
            subtask_query,
            GRANULARITY_WORDS[tau.component_granularity],
            records,
            max_results,
        )
        before = llm.calls
        picks = _llm_subset(
            llm,
            tag="comp_traverser",
            system=_COMP_SELECTOR_SYSTEM,
            prompt_text=prompt_text,
            pool_keys=[(c.node.doc_id, c.node.component_id) for c in pool_comps],
            max_results=max_results,
            max_retries=max_retries,
            tracker=tracker,
            warnings=warnings,
            raw_out=raw_responses,
        )
        llm_calls = llm.calls - before
        if picks:
            components = [pool_comps[i] for i in picks]
        else:
            warnings.append(
                "empty component selection; falling back to vector top results"
            )
            components = pool_comps[:max_results]
    else:
        components = list(pool_comps)

    trace = StageTrace(
        stage="components",
        mode=tau.component_mode.value,
        pool=tuple((str(c.node), c.score) for c in pool_comps),
        selected=tuple(str(c.node) for c in components),
        prompt=prompt_text,
        raw_responses=tuple(raw_responses),
        warnings=tuple(warnings),
        llm_calls=llm_calls,
    )
    return components, trace


def resolve_anchor_docs(memory: Memory, anchor: int | None) -> set[NodeId]:
    """Anchor documents for a hop: the anchored step's documents, or the most
    recent traverse step's documents when no anchor is set."""
    records: list[ActionRecord]
    if anchor is not None:
        if not 0 <= anchor < len(memory.history):
            raise BadAnchor(f"anchor {anchor} is outside the history")
        record = memory.history[anchor]
        if record.action.kind is not ActionKind.TRAVERSE:
            raise BadAnchor(f"anchor {anchor} is not a traverse step")
        records = [record]
    else:
        records = [
            r for r in memory.history if r.action.kind is ActionKind.TRAVERSE
        ][-1:]
    docs: set[NodeId] = set()
    for record in records:
        docs.update(d.node for d in record.observation.docs)
    return docs


def traverse(
    graph: LayeredGraph,
    index: VectorIndex,
    memory: Memory,
    q_t: str,
    tau: StrategyTuple,
    config: EngineConfig,
    llm=None,
    *,
    embedder,
    tracker: CostTracker | None = None,
) -> TraversalOutcome:
    """Execute one hop: document stage then component stage."""
    needs_llm = (
        tau.document_mode is DocumentMode.LLM_REASONING
        or tau.component_mode is ComponentMode.LLM_REASONING
    )
    if needs_llm and llm is None:
        raise MissingProvider("strategy uses llm_reasoning but no provider is set")

    anchors: set[NodeId] = set()
    if tau.document_mode is DocumentMode.NEIGHBORS or tau.anchor is not None:
        anchors = resolve_anchor_docs(memory, tau.anchor)

    usage_before = (0, 0)
    if llm is not None:
        usage_before = (llm.usage.input_tokens, llm.usage.output_tokens)

    q_vec = embed_query(embedder, q_t, tracker)
    docs, doc_trace = select_documents(
        graph,
        index,
        q_vec,
        tau,
        anchors,
        config.k_shortlist,
        llm,
        original_query=memory.original_query,
        subtask_query=q_t,
        max_results=config.max_doc_results,
        max_retries=config.max_llm_retries,
        tracker=tracker,
    )
    components, comp_trace = select_components(
        graph,
        index,
        q_vec,
        tau,
        docs,
        config.k_shortlist,
        llm,
        original_query=memory.original_query,
        subtask_query=q_t,
        max_results=config.max_component_results,
        max_retries=config.max_llm_retries,
        preview_chars=config.preview_chars,
        tracker=tracker,
    )

    usage = (0, 0)
    if llm is not None:
        usage = (
            llm.usage.input_tokens - usage_before[0],
            llm.usage.output_tokens - usage_before[1],
        )
    return TraversalOutcome(
        candidate_docs=tuple(docs),
        components=tuple(components),
        stage_traces=(doc_trace, comp_trace),
        llm_calls=doc_trace.llm_calls + comp_trace.llm_calls,
        token_usage=usage,
    )
