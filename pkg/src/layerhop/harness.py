"""Benchmark harness: retrieval metrics, QA metrics, per-query cost rows
and aggregate reports over a line-delimited dataset."""

from __future__ import annotations

import csv
import io
import json
import string
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .config import ABLATION_NAMES, EngineConfig
from .engine import RetrievalResult, run_query
from .errors import DatasetError
from .graph import LayeredGraph, component_node
from .index import VectorIndex

ComponentKey = tuple[str, str]  # (doc_id, component_id)

DEFAULT_RECALL_KS = (1, 2, 5, 10)

GENERATOR_PROMPT = (
    "Answer the question using only the evidence. "
    "Question: {question} Evidence: {evidence}"
)

_ARTICLES = {"a", "an", "the"}
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def normalize_answer(text: str) -> str:
    """Extractive-QA normalization: lowercase, strip punctuation, drop
    articles, collapse whitespace."""
    text = text.lower().translate(_PUNCT_TABLE)
    tokens = [t for t in text.split() if t not in _ARTICLES]
    return " ".join(tokens)


def recall_at_k(ranked: list[ComponentKey], gold: set[ComponentKey], k: int) -> int:
    """1 iff any gold component appears in the top k, else 0."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return int(any(key in gold for key in ranked[:k]))


def mrr_at_k(ranked: list[ComponentKey], gold: set[ComponentKey], k: int = 10) -> float:
    """Reciprocal rank of the first gold component within the top k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    for position, key in enumerate(ranked[:k], start=1):
        if key in gold:
            return 1.0 / position
    return 0.0


def exact_match(pred: str, gold: str) -> int:
    return int(normalize_answer(pred) == normalize_answer(gold))


def token_f1(pred: str, gold: str) -> float:
    pred_tokens = normalize_answer(pred).split()
    gold_tokens = normalize_answer(gold).split()
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    overlap = sum((Counter(pred_tokens) & Counter(gold_tokens)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class BenchmarkItem:
    qid: str
    question: str
    gold_components: frozenset[ComponentKey]
    gold_answer: str = ""


def parse_dataset(
    lines, graph: LayeredGraph | None = None, source: str = "dataset"
) -> list[BenchmarkItem]:
    """Parse line-delimited benchmark records; when a graph is given, gold
    components must name existing component nodes."""
    items: list[BenchmarkItem] = []
    seen_qids: set[str] = set()
    for line_number, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"line {line_number}: not valid JSON ({exc.msg})")
        if not isinstance(raw, dict):
            raise DatasetError(f"line {line_number}: expected an object")
        qid = raw.get("qid")
        question = raw.get("question")
        if not isinstance(qid, str) or not qid:
            raise DatasetError(f"line {line_number}: missing qid")
        if qid in seen_qids:
            raise DatasetError(f"line {line_number}: duplicate qid {qid!r}")
        seen_qids.add(qid)
        if not isinstance(question, str) or not question.strip():
            raise DatasetError(f"line {line_number}: missing question")
        raw_gold = raw.get("gold_components")
        if not isinstance(raw_gold, list) or not raw_gold:
            raise DatasetError(f"line {line_number}: gold_components required")
        gold: set[ComponentKey] = set()
        for entry in raw_gold:
            if (
                not isinstance(entry, dict)
                or not isinstance(entry.get("doc_id"), str)
                or not isinstance(entry.get("component_id"), str)
            ):
                raise DatasetError(
                    f"line {line_number}: gold entries need doc_id and component_id"
                )
            key = (entry["doc_id"], entry["component_id"])
            if graph is not None and component_node(*key) not in graph:
                raise DatasetError(
                    f"line {line_number}: gold component {key[0]}/{key[1]} "
                    "is not in the graph"
                )
            gold.add(key)
        answer = raw.get("gold_answer", "")
        if not isinstance(answer, str):
            raise DatasetError(f"line {line_number}: gold_answer must be a string")
        items.append(
            BenchmarkItem(
                qid=qid,
                question=question,
                gold_components=frozenset(gold),
                gold_answer=answer,
            )
        )
    if not items:
        raise DatasetError(f"{source}: dataset is empty")
    return items


def load_dataset(path: str, graph: LayeredGraph | None = None) -> list[BenchmarkItem]:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_dataset(handle, graph, source=str(path))


@dataclass
class BenchmarkRow:
    qid: str
    metrics: dict[str, float] = field(default_factory=dict)
    cost: dict[str, float] = field(default_factory=dict)
    answer: str | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        data = {"qid": self.qid, "metrics": dict(self.metrics), "cost": dict(self.cost)}
        if self.answer is not None:
            data["answer"] = self.answer
        if self.error is not None:
            data["error"] = self.error
        return data


@dataclass
class BenchmarkReport:
    rows: list[BenchmarkRow]
    aggregates: dict[str, float]
    config: dict
    variant: str = "full"

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "config": dict(self.config),
            "n_queries": len(self.rows),
            "aggregates": dict(self.aggregates),
            "rows": [row.to_dict() for row in self.rows],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False, indent=2)

    def to_csv(self) -> str:
        """Flat per-query table (one row per query) for plotting."""
        columns: list[str] = ["qid"]
        seen = {"qid"}
        for row in self.rows:
            for name in list(row.metrics) + list(row.cost):
                if name not in seen:
                    seen.add(name)
                    columns.append(name)
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()
        for row in self.rows:
            record: dict = {"qid": row.qid}
            record.update(row.metrics)
            record.update(row.cost)
            writer.writerow(record)
        return buffer.getvalue()


def _answer_with_generator(generator, question: str, result: RetrievalResult) -> str:
    evidence = " | ".join(
        f"[{c.node.doc_id}/{c.node.component_id}] {c.preview}"
        for c in result.components
    )
    prompt = GENERATOR_PROMPT.format(question=question, evidence=evidence)
    return generator.complete(
        "You answer questions from retrieved evidence.", prompt, tag="generator"
    )


def _score_row(
    item: BenchmarkItem,
    result: RetrievalResult,
    recall_ks: tuple[int, ...],
    mrr_k: int,
    generator,
) -> BenchmarkRow:
    ranked = [(c.node.doc_id, c.node.component_id) for c in result.components]
    gold = set(item.gold_components)
    metrics: dict[str, float] = {}
    for k in recall_ks:
        metrics[f"recall_at_{k}"] = float(recall_at_k(ranked, gold, k))
    metrics[f"mrr_at_{mrr_k}"] = mrr_at_k(ranked, gold, mrr_k)
    answer = None
    if generator is not None:
        answer = _answer_with_generator(generator, item.question, result)
        metrics["em"] = float(exact_match(answer, item.gold_answer))
        metrics["f1"] = token_f1(answer, item.gold_answer)
    cost = {
        "total_ms": result.cost.total_ms,
        "llm_ms": result.cost.breakdown_ms["llm"],
        "vector_search_ms": result.cost.breakdown_ms["vector_search"],
        "embedding_ms": result.cost.breakdown_ms["embedding"],
        "llm_calls": float(result.cost.llm_calls),
        "input_tokens": float(result.cost.input_tokens),
        "output_tokens": float(result.cost.output_tokens),
        "estimated_cost": result.cost.estimated_cost,
    }
    return BenchmarkRow(qid=item.qid, metrics=metrics, cost=cost, answer=answer)


def run_benchmark(
    dataset: list[BenchmarkItem],
    graph: LayeredGraph,
    index: VectorIndex,
    embedder,
    config: EngineConfig | None = None,
    llm_factory=None,
    generator=None,
    *,
    recall_ks: tuple[int, ...] = DEFAULT_RECALL_KS,
    mrr_k: int = 10,
    parallel: int = 1,
    variant: str | None = None,
    clock_factory=None,
) -> BenchmarkReport:
    """Run every query, score it, and aggregate.

    llm_factory/clock_factory build a fresh provider/clock per query so that
    concurrent rows never share mutable usage counters. Per-row failures are
    recorded in the row, not raised.
    """
    config = config or EngineConfig()
    if variant:
        if variant != "full" and variant not in ABLATION_NAMES:
            raise ValueError(f"unknown variant {variant!r}")
        if variant != "full":
            config = config.with_ablation(variant)
    tag = variant or ("+".join(config.ablations.active()) or "full")

    def run_one(item: BenchmarkItem) -> BenchmarkRow:
        llm = llm_factory() if llm_factory is not None else None
        clock = clock_factory() if clock_factory is not None else None
        try:
            result = run_query(
                graph, index, embedder, item.question, config, llm, clock=clock
            )
            return _score_row(item, result, recall_ks, mrr_k, generator)
        except Exception as exc:  # recorded per row; the sweep continues
            return BenchmarkRow(qid=item.qid, error=f"{type(exc).__name__}: {exc}")

    if parallel > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            rows = list(pool.map(run_one, dataset))
    else:
        rows = [run_one(item) for item in dataset]
    rows.sort(key=lambda row: row.qid)

    scored = [row for row in rows if row.error is None]
    aggregates: dict[str, float] = {}
    if scored:
        for k in recall_ks:
            name = f"recall_at_{k}"
            aggregates[name] = (
                100.0 * sum(r.metrics[name] for r in scored) / len(scored)
            )
        mrr_name = f"mrr_at_{mrr_k}"
        aggregates[mrr_name] = sum(r.metrics[mrr_name] for r in scored) / len(scored)
        if generator is not None:
            aggregates["em"] = 100.0 * sum(r.metrics["em"] for r in scored) / len(scored)
            aggregates["f1"] = 100.0 * sum(r.metrics["f1"] for r in scored) / len(scored)
        for name in (
            "total_ms",
            "llm_ms",
            "vector_search_ms",
            "embedding_ms",
            "llm_calls",
            "input_tokens",
            "output_tokens",
            "estimated_cost",
        ):
            aggregates[f"sum_{name}"] = sum(r.cost[name] for r in scored)
            aggregates[f"avg_{name}"] = aggregates[f"sum_{name}"] / len(scored)
    aggregates["errors"] = float(len(rows) - len(scored))

    return BenchmarkReport(
        rows=rows, aggregates=aggregates, config=config.to_dict(), variant=tag
    )
