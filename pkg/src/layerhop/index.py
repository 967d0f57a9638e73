"""Embedding providers, similarity, descendant-max scoring and top-k search.

A node's score against a query at granularity g is the maximum similarity
between the query vector and any of the node's descendants at layer g (the
node itself when it already sits at that layer). Search is an exact linear
scan over the candidate set - corpora here are small enough that approximate
indexing would only add moving parts.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Iterable, Protocol

import numpy as np

from .corpus import ImagePayload, ModalPayload, payload_text
from .errors import (
    DimensionMismatch,
    EmbedderFailure,
    EmptyDescendants,
    EmptyPool,
    FingerprintMismatch,
    SnapshotError,
    UnknownNode,
)
from .graph import (
    COMPONENT_LAYER,
    DOC_LAYER,
    SUBCOMPONENT_LAYER,
    LayeredGraph,
    NodeId,
    descendants_at,
)
from .timing import CostTracker

INDEX_FORMAT_TAG = "layerhop-index/1"


def similarity(a: np.ndarray, b: np.ndarray, metric: str = "cosine") -> float:
    """Similarity between two vectors; zero vectors score 0 under cosine."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} vs {b.shape}")
    dot = float(np.dot(a, b))
    if metric == "dot":
        return dot
    if metric != "cosine":
        raise ValueError(f"unknown metric {metric!r}")
    norm = float(np.linalg.norm(a)) * float(np.linalg.norm(b))
    if norm == 0.0:
        return 0.0
    return dot / norm


class EmbedderProvider(Protocol):
    dimension: int
    fingerprint: str

    def embed_text(self, text: str) -> np.ndarray: ...

    def embed_payload(self, payload: ModalPayload) -> np.ndarray: ...


class HashEmbedder:
    """Deterministic stand-in embedder: content hash seeds a unit vector."""

    def __init__(self, dimension: int = 32, seed: int = 0):
        self.dimension = dimension
        self.seed = seed
        self.fingerprint = f"hash-embedder/d{dimension}/s{seed}"

    def embed_text(self, text: str) -> np.ndarray:
        digest = hashlib.sha256(f"{self.seed}:{text}".encode("utf-8")).digest()
        rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest[:8], "big")))
        vec = rng.standard_normal(self.dimension)
        norm = np.linalg.norm(vec)
        return vec / norm if norm else vec

    def embed_payload(self, payload: ModalPayload) -> np.ndarray:
        return self.embed_text(payload_text(payload))


class PlantedEmbedder:
    """Test embedder with exact, chosen similarities.

    Every distinct content string gets its own orthonormal axis. A planted
    query embeds as sum_u s_u * axis(u) plus a remainder along the query's
    own axis, so cosine(query, content u) equals exactly the planted s_u and
    0 for everything else.
    """

    def __init__(self, dimension: int = 512):
        self.dimension = dimension
        self.fingerprint = f"planted-embedder/d{dimension}"
        self._axes: dict[str, int] = {}
        self._planted: dict[str, dict[str, float]] = {}

    def _axis(self, text: str) -> int:
        if text not in self._axes:
            if len(self._axes) >= self.dimension:
                raise RuntimeError("planted embedder out of orthogonal axes")
            self._axes[text] = len(self._axes)
        return self._axes[text]

    def plant(self, query_text: str, sims: dict[str, float]) -> None:
        total = sum(s * s for s in sims.values())
        if total > 1.0 + 1e-12:
            raise ValueError("planted similarities exceed unit norm")
        self._planted[query_text] = dict(sims)
        for content in sims:
            self._axis(content)

    def embed_text(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension, dtype=np.float64)
        sims = self._planted.get(text)
        if sims is None:
            vec[self._axis(text)] = 1.0
            return vec
        total = 0.0
        for content, s in sims.items():
            vec[self._axis(content)] = s
            total += s * s
        remainder = 1.0 - total
        if remainder > 1e-15:
            vec[self._axis(f"\x00query:{text}")] = float(np.sqrt(remainder))
        return vec

    def embed_payload(self, payload: ModalPayload) -> np.ndarray:
        return self.embed_text(payload_text(payload))


class HttpEmbedder:
    """Embedder backed by an HTTP JSON endpoint.

    Wire contract: POST {"inputs": [text or {"media_ref", "caption"?}]} and
    read {"vectors": [[...], ...]}. URL/token default to the
    LAYERHOP_EMBEDDER_URL / LAYERHOP_EMBEDDER_TOKEN environment variables.
    """

    def __init__(
        self,
        url: str | None = None,
        token: str | None = None,
        dimension: int = 1024,
        model_tag: str = "default",
        client=None,
        timeout: float = 30.0,
    ):
        import httpx

        self.url = url or os.environ.get("LAYERHOP_EMBEDDER_URL", "")
        if not self.url:
            raise ValueError("embedder endpoint URL not configured")
        self.token = token or os.environ.get("LAYERHOP_EMBEDDER_TOKEN")
        self.dimension = dimension
        self.model_tag = model_tag
        self.fingerprint = f"http-embedder/{model_tag}/d{dimension}"
        self._client = client or httpx.Client(timeout=timeout)

    def _request(self, inputs: list) -> list[np.ndarray]:
        headers = {}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        response = self._client.post(self.url, json={"inputs": inputs}, headers=headers)
        response.raise_for_status()
        vectors = response.json()["vectors"]
        out = []
        for values in vectors:
            vec = np.asarray(values, dtype=np.float64)
            if vec.shape != (self.dimension,):
                raise DimensionMismatch(
                    f"endpoint returned dimension {vec.shape}, expected {self.dimension}"
                )
            out.append(vec)
        return out

    @staticmethod
    def _wire_input(payload: ModalPayload):
        if isinstance(payload, ImagePayload):
            record = {"media_ref": payload.media_ref}
            if payload.caption is not None:
                record["caption"] = payload.caption
            return record
        return payload

    def embed_text(self, text: str) -> np.ndarray:
        return self._request([text])[0]

    def embed_payload(self, payload: ModalPayload) -> np.ndarray:
        return self._request([self._wire_input(payload)])[0]


@dataclass
class VectorIndex:
    dimension: int
    fingerprint: str
    metric: str = "cosine"
    vectors: dict[NodeId, np.ndarray] = field(default_factory=dict)

    def vector(self, node: NodeId) -> np.ndarray:
        try:
            return self.vectors[node]
        except KeyError:
            raise UnknownNode(f"node {node} has no embedding")


def build_index(
    graph: LayeredGraph,
    embedder: EmbedderProvider,
    *,
    retries: int = 2,
    tracker: CostTracker | None = None,
    metric: str = "cosine",
) -> VectorIndex:
    """Embed every node of the graph. Transient embedder errors are retried;
    a node that keeps failing aborts the build, named in the error."""
    index = VectorIndex(
        dimension=embedder.dimension, fingerprint=embedder.fingerprint, metric=metric
    )
    payloads: list[tuple[NodeId, ModalPayload]] = []
    for i, node in enumerate(graph.doc_ids):
        payloads.append((node, graph.doc_text[i]))
    for i, node in enumerate(graph.comp_ids):
        payloads.append((node, graph.comp_payload[i]))
    for i, node in enumerate(graph.sub_ids):
        payloads.append((node, graph.sub_text[i]))

    tracker = tracker or CostTracker()
    with tracker.span("embedding"):
        for node, payload in payloads:
            last_error: Exception | None = None
            for _ in range(retries + 1):
                try:
                    vec = embedder.embed_payload(payload)
                    last_error = None
                    break
                except Exception as exc:
                    last_error = exc
            if last_error is not None:
                raise EmbedderFailure(node, last_error)
            if vec.shape != (index.dimension,):
                raise EmbedderFailure(
                    node, DimensionMismatch(f"got shape {vec.shape}")
                )
            index.vectors[node] = vec
    return index


def embed_query(
    embedder: EmbedderProvider, text: str, tracker: CostTracker | None = None
) -> np.ndarray:
    tracker = tracker or CostTracker()
    with tracker.span("embedding"):
        return embedder.embed_text(text)


def score_vec(
    index: VectorIndex, graph: LayeredGraph, q: np.ndarray, v: NodeId, g: int
) -> float:
    """Max similarity between q and any descendant of v at layer g."""
    descendants = descendants_at(graph, v, g)
    if not descendants:
        raise EmptyDescendants(f"{v} has no descendants at layer {g}")
    return max(similarity(q, index.vector(u), index.metric) for u in descendants)


def topk_nodes(
    index: VectorIndex,
    graph: LayeredGraph,
    q: np.ndarray,
    candidate_set: Iterable[NodeId],
    g: int,
    k: int,
    *,
    tracker: CostTracker | None = None,
    skipped: list[NodeId] | None = None,
) -> list[tuple[NodeId, float]]:
    """Top-k candidates by descendant-max score, descending; equal scores
    order by ascending NodeId. Candidates without descendants at g are
    skipped (optionally reported via `skipped`)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    candidates = list(candidate_set)
    if not candidates:
        raise EmptyPool("no candidates to search")
    tracker = tracker or CostTracker()
    scored: list[tuple[float, NodeId]] = []
    with tracker.span("vector_search"):
        for node in candidates:
            try:
                score = score_vec(index, graph, q, node, g)
            except EmptyDescendants:
                if skipped is not None:
                    skipped.append(node)
                continue
            scored.append((score, node))
        scored.sort(key=lambda pair: (-pair[0], pair[1]))
    return [(node, score) for score, node in scored[:k]]


def _node_record(node: NodeId, vector: np.ndarray) -> dict:
    record: dict = {"layer": node.layer, "doc_id": node.doc_id}
    if node.component_id is not None:
        record["component_id"] = node.component_id
    if node.sub_id is not None:
        record["sub_id"] = node.sub_id
    record["vector"] = [float(x) for x in vector]
    return record


def _record_node(record: dict) -> NodeId:
    return NodeId(
        layer=record["layer"],
        doc_id=record["doc_id"],
        component_id=record.get("component_id"),
        sub_id=record.get("sub_id"),
    )


def save_index(index: VectorIndex, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        header = {
            "format": INDEX_FORMAT_TAG,
            "dimension": index.dimension,
            "fingerprint": index.fingerprint,
            "metric": index.metric,
        }
        fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")))
        fh.write("\n")
        for node in sorted(index.vectors):
            fh.write(
                json.dumps(
                    _node_record(node, index.vectors[node]),
                    sort_keys=True,
                    separators=(",", ":"),
                )
            )
            fh.write("\n")


def load_index(path, expected_fingerprint: str | None = None) -> VectorIndex:
    """Load an index snapshot; refuse it when the stored fingerprint does not
    match the configured embedder's."""
    with open(path, "r", encoding="utf-8") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError:
            raise SnapshotError("index snapshot missing header line")
        if header.get("format") != INDEX_FORMAT_TAG:
            raise SnapshotError(
                f"unsupported index snapshot format {header.get('format')!r}"
            )
        if expected_fingerprint is not None and header["fingerprint"] != expected_fingerprint:
            raise FingerprintMismatch(
                f"index built with {header['fingerprint']!r}, "
                f"configured embedder is {expected_fingerprint!r}"
            )
        index = VectorIndex(
            dimension=header["dimension"],
            fingerprint=header["fingerprint"],
            metric=header.get("metric", "cosine"),
        )
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            vec = np.asarray(record["vector"], dtype=np.float64)
            if vec.shape != (index.dimension,):
                raise SnapshotError("vector record dimension mismatch")
            index.vectors[_record_node(record)] = vec
    return index
