"""HTTP facade over the retrieval engine.

The service keeps one corpus graph and one vector index in process memory;
`/corpus` and `/index` replace them. Query and benchmark endpoints run
against that state. A chat provider is constructed per request from the
LAYERHOP_LLM_URL / LAYERHOP_LLM_TOKEN environment variables when present;
without one the engine runs in its deterministic vector-only mode.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..agents import HttpChatProvider
from ..config import EngineConfig, config_from_dict
from ..corpus import parse_corpus, validate_corpus
from ..engine import run_query
from ..errors import LayerhopError, MissingProvider
from ..graph import LayeredGraph, build_graph
from ..harness import parse_dataset, run_benchmark
from ..index import HashEmbedder, VectorIndex, build_index
from .schemas import (
    BenchRequest,
    BenchResponse,
    CorpusBody,
    HealthResponse,
    IndexRequest,
    IndexResponse,
    IngestResponse,
    QueryRequest,
    QueryResponse,
    ValidationResponse,
)


def default_llm_factory():
    if os.environ.get("LAYERHOP_LLM_URL"):
        return HttpChatProvider()
    return None


@dataclass
class ServiceState:
    graph: LayeredGraph | None = None
    index: VectorIndex | None = None
    embedder: object | None = None
    config: EngineConfig = field(default_factory=EngineConfig)
    llm_factory: object = default_llm_factory


def _validation_out(report) -> ValidationResponse:
    return ValidationResponse(
        clean=report.clean,
        dangling_links=report.dangling_links,
        duplicate_ids=report.duplicate_ids,
        empty_payloads=report.empty_payloads,
    )


def _merge_config(base: EngineConfig, overrides: dict | None) -> EngineConfig:
    if not overrides:
        return base
    merged = base.to_dict()
    ablations = merged.pop("ablations")
    ablations.update(overrides.pop("ablations", {}) or {})
    merged.update(overrides)
    merged["ablations"] = ablations
    return config_from_dict(merged)


def create_app(state: ServiceState | None = None) -> FastAPI:
    app = FastAPI(title="layerhop", version=__version__)
    app.state.retrieval = state or ServiceState()

    def current() -> ServiceState:
        return app.state.retrieval

    def require_ready() -> ServiceState:
        st = current()
        if st.graph is None:
            raise HTTPException(status_code=409, detail="no corpus ingested yet")
        if st.index is None or st.embedder is None:
            raise HTTPException(status_code=409, detail="no index built yet")
        return st

    @app.exception_handler(LayerhopError)
    async def _domain_error(request, exc: LayerhopError):
        from fastapi.responses import JSONResponse

        status = 409 if isinstance(exc, MissingProvider) else 400
        return JSONResponse(
            status_code=status, content={"detail": f"{type(exc).__name__}: {exc}"}
        )

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        st = current()
        return HealthResponse(
            status="ok",
            version=__version__,
            corpus_loaded=st.graph is not None,
            index_loaded=st.index is not None,
        )

    @app.post("/corpus/validate", response_model=ValidationResponse)
    def validate(body: CorpusBody) -> ValidationResponse:
        corpus = parse_corpus(io.StringIO(body.corpus_jsonl))
        return _validation_out(validate_corpus(corpus))

    @app.post("/corpus", response_model=IngestResponse)
    def ingest(body: CorpusBody) -> IngestResponse:
        st = current()
        corpus = parse_corpus(io.StringIO(body.corpus_jsonl))
        report = validate_corpus(corpus)
        st.graph = build_graph(corpus)
        st.index = None  # the old index no longer matches the graph
        st.embedder = None
        return IngestResponse(
            documents=len(st.graph.doc_ids),
            components=len(st.graph.comp_ids),
            subcomponents=len(st.graph.sub_ids),
            validation=_validation_out(report),
        )

    @app.post("/index", response_model=IndexResponse)
    def index(body: IndexRequest) -> IndexResponse:
        st = current()
        if st.graph is None:
            raise HTTPException(status_code=409, detail="no corpus ingested yet")
        embedder = HashEmbedder(dimension=body.dimension, seed=body.seed)
        st.index = build_index(st.graph, embedder)
        st.embedder = embedder
        return IndexResponse(
            nodes=len(st.index.vectors),
            dimension=st.index.dimension,
            fingerprint=st.index.fingerprint,
        )

    @app.post("/query", response_model=QueryResponse, response_model_exclude_none=True)
    def query(body: QueryRequest) -> QueryResponse:
        st = require_ready()
        overrides = dict(body.config or {})
        overrides["policy"] = body.policy
        config = _merge_config(st.config, overrides)
        llm = st.llm_factory()
        result = run_query(st.graph, st.index, st.embedder, body.question, config, llm)
        return QueryResponse(**result.to_dict(include_trace=body.include_trace))

    @app.post("/bench", response_model=BenchResponse)
    def bench(body: BenchRequest) -> BenchResponse:
        st = require_ready()
        dataset = parse_dataset(
            io.StringIO(body.dataset_jsonl), st.graph, source="request body"
        )
        config = _merge_config(st.config, body.config)
        try:
            report = run_benchmark(
                dataset,
                st.graph,
                st.index,
                st.embedder,
                config,
                llm_factory=st.llm_factory,
                recall_ks=tuple(body.recall_ks),
                mrr_k=body.mrr_k,
                parallel=body.parallel,
                variant=body.variant,
            )
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return BenchResponse(**report.to_dict())

    return app
