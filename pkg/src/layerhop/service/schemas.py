"""Request/response models for the HTTP retrieval service."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str
    corpus_loaded: bool
    index_loaded: bool


class CorpusBody(BaseModel):
    corpus_jsonl: str = Field(..., description="line-delimited document records")


class ValidationResponse(BaseModel):
    clean: bool
    dangling_links: list[tuple[str, str, str]]
    duplicate_ids: list[str]
    empty_payloads: list[str]


class IngestResponse(BaseModel):
    documents: int
    components: int
    subcomponents: int
    validation: ValidationResponse


class IndexRequest(BaseModel):
    dimension: int = Field(32, ge=2)
    seed: int = 0


class IndexResponse(BaseModel):
    nodes: int
    dimension: int
    fingerprint: str


class QueryRequest(BaseModel):
    question: str
    policy: Literal["heuristic", "llm"] = "heuristic"
    include_trace: bool = False
    config: dict | None = Field(
        None, description="engine settings overriding the service defaults"
    )


class ComponentOut(BaseModel):
    doc_id: str
    component_id: str
    node: str
    score: float
    preview: str


class CostOut(BaseModel):
    total_ms: float
    breakdown_ms: dict[str, float]
    llm_calls: int
    input_tokens: int
    output_tokens: int
    estimated_cost: float


class QueryResponse(BaseModel):
    query: str
    components: list[ComponentOut]
    terminal: str
    subqueries: list[dict]
    cost: CostOut
    trace: list[dict] | None = None


class BenchRequest(BaseModel):
    dataset_jsonl: str
    recall_ks: list[int] = Field(default_factory=lambda: [1, 2, 5, 10])
    mrr_k: int = 10
    parallel: int = Field(1, ge=1)
    variant: str | None = None
    config: dict | None = None


class BenchResponse(BaseModel):
    variant: str
    config: dict
    n_queries: int
    aggregates: dict[str, float]
    rows: list[dict]


class ErrorResponse(BaseModel):
    detail: str
