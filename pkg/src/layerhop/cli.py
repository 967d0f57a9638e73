"""Command-line entry points: corpus ingestion, index builds, single
queries, benchmark sweeps, ablation sweeps, and the HTTP server."""

from __future__ import annotations

import json
import os
import sys

import click

from .agents import HttpChatProvider
from .config import ABLATION_NAMES, EngineConfig, load_config
from .corpus import load_corpus, validate_corpus
from .engine import run_query
from .errors import LayerhopError
from .graph import build_graph, load_graph, save_graph
from .harness import load_dataset, run_benchmark
from .index import HashEmbedder, HttpEmbedder, build_index, load_index, save_index
from .timing import FakeClock


def _fail(exc: Exception) -> None:
    raise click.ClickException(f"{type(exc).__name__}: {exc}")


def _make_embedder(kind: str, dimension: int, seed: int):
    if kind == "http":
        try:
            return HttpEmbedder(dimension=dimension)
        except ValueError as exc:
            raise click.ClickException(str(exc))
    return HashEmbedder(dimension=dimension, seed=seed)


def _make_llm():
    """Chat provider from the environment; None means vector-only mode."""
    if os.environ.get("LAYERHOP_LLM_URL"):
        return HttpChatProvider(model=os.environ.get("LAYERHOP_LLM_MODEL", "default"))
    return None


def _load_engine_config(path: str | None, **overrides) -> EngineConfig:
    config = load_config(path) if path else EngineConfig()
    cleaned = {k: v for k, v in overrides.items() if v is not None}
    if cleaned:
        merged = config.to_dict()
        merged.update(cleaned)
        from .config import config_from_dict

        config = config_from_dict(merged)
    return config


embedder_options = [
    click.option(
        "--embedder",
        type=click.Choice(["hash", "http"]),
        default="hash",
        show_default=True,
        help="hash = local deterministic embedder; http = remote endpoint "
        "(LAYERHOP_EMBEDDER_URL / LAYERHOP_EMBEDDER_TOKEN)",
    ),
    click.option("--dim", type=int, default=32, show_default=True),
    click.option("--seed", type=int, default=0, show_default=True),
]


def with_embedder_options(command):
    for option in reversed(embedder_options):
        command = option(command)
    return command


@click.group()
def main() -> None:
    """Agentic retrieval over layered multimodal document graphs."""


@main.command()
@click.argument("corpus", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@click.option("--strict", is_flag=True, help="fail on any validation problem")
def ingest(corpus: str, output: str, strict: bool) -> None:
    """Parse CORPUS (line-delimited documents) into a graph snapshot."""
    try:
        parsed = load_corpus(corpus)
        report = validate_corpus(parsed)
        for doc_id, comp_id, target in report.dangling_links:
            click.echo(f"warning: {doc_id}/{comp_id} links to unknown {target!r}", err=True)
        for path in report.empty_payloads:
            click.echo(f"warning: empty payload at {path}", err=True)
        if strict and not report.clean:
            raise click.ClickException("corpus failed validation (--strict)")
        graph = build_graph(parsed)
        save_graph(graph, output)
    except LayerhopError as exc:
        _fail(exc)
    click.echo(
        f"wrote {output}: {len(graph.doc_ids)} documents, "
        f"{len(graph.comp_ids)} components, {len(graph.sub_ids)} subcomponents"
    )


@main.command()
@click.argument("snapshot", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@with_embedder_options
def index(snapshot: str, output: str, embedder: str, dim: int, seed: int) -> None:
    """Embed every node of a graph SNAPSHOT into a vector index file."""
    try:
        graph = load_graph(snapshot)
        built = build_index(graph, _make_embedder(embedder, dim, seed))
        save_index(built, output)
    except LayerhopError as exc:
        _fail(exc)
    click.echo(
        f"wrote {output}: {len(built.vectors)} vectors, dimension "
        f"{built.dimension}, fingerprint {built.fingerprint}"
    )


@main.command()
@click.argument("snapshot", type=click.Path(exists=True, dir_okay=False))
@click.argument("index_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--q", "question", required=True, help="query text")
@click.option(
    "--policy",
    type=click.Choice(["heuristic", "llm"]),
    default=None,
    help="action policy (default from config: heuristic)",
)
@click.option("--trace", "trace_out", type=click.Path(dir_okay=False),
              help="write the full run trace as JSON to this file")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--top-k", type=int, default=None, help="final result count")
@with_embedder_options
def query(
    snapshot: str,
    index_file: str,
    question: str,
    policy: str | None,
    trace_out: str | None,
    config_path: str | None,
    top_k: int | None,
    embedder: str,
    dim: int,
    seed: int,
) -> None:
    """Answer one query against SNAPSHOT + INDEX_FILE; prints ranked
    components as JSON."""
    try:
        config = _load_engine_config(config_path, policy=policy, top_k_final=top_k)
        graph = load_graph(snapshot)
        emb = _make_embedder(embedder, dim, seed)
        idx = load_index(index_file, expected_fingerprint=emb.fingerprint)
        result = run_query(graph, idx, emb, question, config, _make_llm())
    except LayerhopError as exc:
        _fail(exc)
    if trace_out:
        with open(trace_out, "w", encoding="utf-8") as handle:
            json.dump(result.to_dict(include_trace=True), handle, indent=2,
                      sort_keys=True, ensure_ascii=False)
        click.echo(f"trace written to {trace_out}", err=True)
    click.echo(
        json.dumps(result.to_dict(include_trace=False), indent=2, sort_keys=True,
                   ensure_ascii=False)
    )


def _parse_k_list(_ctx, _param, value: str) -> tuple[int, ...]:
    try:
        ks = tuple(int(part) for part in value.split(",") if part.strip())
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got {value!r}")
    if not ks or any(k < 1 for k in ks):
        raise click.BadParameter("every k must be >= 1")
    return ks


def _run_bench(
    dataset_path: str,
    snapshot: str,
    index_file: str,
    ks: tuple[int, ...],
    mrr_k: int,
    parallel: int,
    variant: str | None,
    config_path: str | None,
    embedder: str,
    dim: int,
    seed: int,
    deterministic: bool = False,
):
    config = _load_engine_config(config_path)
    graph = load_graph(snapshot)
    emb = _make_embedder(embedder, dim, seed)
    idx = load_index(index_file, expected_fingerprint=emb.fingerprint)
    dataset = load_dataset(dataset_path, graph)
    llm = _make_llm()
    llm_factory = (lambda: _make_llm()) if llm is not None else None
    return run_benchmark(
        dataset,
        graph,
        idx,
        emb,
        config,
        llm_factory=llm_factory,
        recall_ks=ks,
        mrr_k=mrr_k,
        parallel=parallel,
        variant=variant,
        clock_factory=FakeClock if deterministic else None,
    )


def _emit_report(report, output: str | None, csv_out: str | None) -> None:
    text = report.dumps()
    if output:
        with open(output, "w", encoding="utf-8") as handle:
            handle.write(text + "\n")
        click.echo(f"report written to {output}", err=True)
    else:
        click.echo(text)
    if csv_out:
        with open(csv_out, "w", encoding="utf-8", newline="") as handle:
            handle.write(report.to_csv())
        click.echo(f"csv written to {csv_out}", err=True)
    summary = ", ".join(
        f"{name}={value:.2f}"
        for name, value in sorted(report.aggregates.items())
        if not name.startswith(("sum_", "avg_"))
    )
    click.echo(f"[{report.variant}] {summary}", err=True)


bench_options = [
    click.option("--k", "ks", default="1,2,5,10", show_default=True,
                 callback=_parse_k_list, help="recall cutoffs, comma-separated"),
    click.option("--mrr-k", type=int, default=10, show_default=True),
    click.option("--parallel", type=int, default=1, show_default=True),
    click.option("--config", "config_path",
                 type=click.Path(exists=True, dir_okay=False)),
    click.option("-o", "--output", type=click.Path(dir_okay=False),
                 help="report JSON path (default: stdout)"),
    click.option("--csv", "csv_out", type=click.Path(dir_okay=False),
                 help="also write the flat per-query CSV here"),
    click.option("--deterministic", is_flag=True,
                 help="use a fixed-tick clock so reports are byte-reproducible"),
]


def with_bench_options(command):
    for option in reversed(bench_options):
        command = option(command)
    return command


@main.command()
@click.argument("dataset", type=click.Path(exists=True, dir_okay=False))
@click.argument("snapshot", type=click.Path(exists=True, dir_okay=False))
@click.argument("index_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--variant", type=click.Choice(["full"] + ABLATION_NAMES),
              default=None, help="run with one ablation switched on")
@with_bench_options
@with_embedder_options
def bench(
    dataset: str,
    snapshot: str,
    index_file: str,
    variant: str | None,
    ks: tuple[int, ...],
    mrr_k: int,
    parallel: int,
    config_path: str | None,
    output: str | None,
    csv_out: str | None,
    deterministic: bool,
    embedder: str,
    dim: int,
    seed: int,
) -> None:
    """Score every DATASET query and write metric + cost aggregates."""
    try:
        report = _run_bench(dataset, snapshot, index_file, ks, mrr_k, parallel,
                            variant, config_path, embedder, dim, seed,
                            deterministic=deterministic)
    except LayerhopError as exc:
        _fail(exc)
    _emit_report(report, output, csv_out)


@main.command()
@click.argument("dataset", type=click.Path(exists=True, dir_okay=False))
@click.argument("snapshot", type=click.Path(exists=True, dir_okay=False))
@click.argument("index_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--variant", "variants", multiple=True,
              type=click.Choice(["full"] + ABLATION_NAMES),
              help="repeatable; default sweeps 'full' plus every ablation")
@click.option("--out-dir", type=click.Path(file_okay=False), default=".",
              show_default=True)
@with_bench_options
@with_embedder_options
def ablate(
    dataset: str,
    snapshot: str,
    index_file: str,
    variants: tuple[str, ...],
    out_dir: str,
    ks: tuple[int, ...],
    mrr_k: int,
    parallel: int,
    config_path: str | None,
    output: str | None,
    csv_out: str | None,
    deterministic: bool,
    embedder: str,
    dim: int,
    seed: int,
) -> None:
    """Benchmark DATASET once per variant and tabulate the deltas."""
    del output, csv_out  # per-variant files are derived from --out-dir
    chosen = list(variants) or ["full"] + ABLATION_NAMES
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for variant in chosen:
        try:
            report = _run_bench(dataset, snapshot, index_file, ks, mrr_k, parallel,
                                variant, config_path, embedder, dim, seed,
                                deterministic=deterministic)
        except LayerhopError as exc:
            _fail(exc)
        path = os.path.join(out_dir, f"report_{variant}.json")
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(report.dumps() + "\n")
        rows.append((variant, report.aggregates))
        click.echo(f"[{variant}] report written to {path}", err=True)

    metric_names = [f"recall_at_{k}" for k in ks] + [f"mrr_at_{mrr_k}"]
    header = "variant".ljust(28) + "".join(name.rjust(14) for name in metric_names)
    click.echo(header)
    for variant, agg in rows:
        cells = "".join(f"{agg.get(name, 0.0):14.2f}" for name in metric_names)
        click.echo(variant.ljust(28) + cells)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host: str, port: int) -> None:
    """Start the HTTP service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    sys.exit(main())
