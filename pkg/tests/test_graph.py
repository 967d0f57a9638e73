"""Layered graph construction, descendant queries, neighbors, snapshots."""

from __future__ import annotations

import random

import pytest

from helpers import (
    all_corpus_nodes,
    oracle_descendants,
    oracle_nav_neighbors,
    random_layered_corpus,
)
from layerhop.corpus import Component, Corpus, Document, Modality, Subcomponent
from layerhop.errors import LayerAboveNode, SnapshotError, SummarizerFailure, UnknownNode
from layerhop.graph import (
    COMPONENT_LAYER,
    DOC_LAYER,
    SUBCOMPONENT_LAYER,
    build_graph,
    component_node,
    descendants_at,
    doc_node,
    dumps_graph,
    load_graph,
    nav_neighbors,
    node_content,
    save_graph,
    snapshot_to_graph,
    sub_node,
)

import json


def _doc(doc_id: str, n_comps: int, n_subs: int, links=(), summary="S") -> Document:
    comps = tuple(
        Component(
            component_id=f"c{i}",
            modality=Modality.PARAGRAPH,
            content=f"body {doc_id} {i}",
            subcomponents=tuple(
                Subcomponent(sub_id=f"s{j}", content=f"unit {i}{j}")
                for j in range(n_subs)
            ),
            links=tuple(links) if i == 0 else (),
        )
        for i in range(n_comps)
    )
    return Document(doc_id=doc_id, title=f"Title {doc_id}", summary=summary, components=comps)


def test_counts_two_docs_three_comps_five_subs():
    corpus = Corpus(documents=(_doc("d1", 2, 2), _doc("d2", 1, 1)))
    graph = build_graph(corpus)
    assert len(graph.doc_ids) == 2
    assert len(graph.comp_ids) == 3
    assert len(graph.sub_ids) == 5
    hierarchical_edges = len(graph.comp_ids) + len(graph.sub_ids)
    assert hierarchical_edges == 8


def test_nav_edge_from_link():
    corpus = Corpus(documents=(_doc("d1", 1, 0, links=("d2",)), _doc("d2", 1, 0)))
    graph = build_graph(corpus)
    assert nav_neighbors(graph, {doc_node("d1")}) == {doc_node("d1"), doc_node("d2")}


def test_summary_field_passthrough():
    corpus = Corpus(documents=(_doc("d1", 1, 0, summary="S"),))
    graph = build_graph(corpus)
    assert node_content(graph, doc_node("d1")) == "S"


def test_summarizer_used_when_no_summary_field():
    corpus = Corpus(documents=(_doc("d1", 1, 0, summary=None),))
    graph = build_graph(corpus, summarizer=lambda doc: f"gen:{doc.doc_id}")
    assert node_content(graph, doc_node("d1")) == "gen:d1"


def test_fallback_title_plus_first_component_truncated():
    corpus = Corpus(documents=(_doc("d1", 1, 0, summary=None),))
    graph = build_graph(corpus, fallback_chars=10)
    assert node_content(graph, doc_node("d1")) == "Title d1. "[:10]


def test_summarizer_failure_when_fallback_disabled():
    corpus = Corpus(documents=(_doc("d1", 1, 0, summary=None),))
    with pytest.raises(SummarizerFailure):
        build_graph(corpus, allow_fallback=False)


def test_summarizer_exception_falls_back():
    def boom(doc):
        raise RuntimeError("no provider")

    corpus = Corpus(documents=(_doc("d1", 1, 0, summary=None),))
    graph = build_graph(corpus, summarizer=boom)
    assert str(node_content(graph, doc_node("d1"))).startswith("Title d1")


def test_descendants_component_to_subs():
    corpus = Corpus(documents=(_doc("d1", 1, 3),))
    graph = build_graph(corpus)
    node = component_node("d1", "c0")
    assert descendants_at(graph, node, SUBCOMPONENT_LAYER) == {
        sub_node("d1", "c0", "s0"),
        sub_node("d1", "c0", "s1"),
        sub_node("d1", "c0", "s2"),
    }


def test_descendants_same_layer_is_self():
    corpus = Corpus(documents=(_doc("d1", 1, 3),))
    graph = build_graph(corpus)
    node = component_node("d1", "c0")
    assert descendants_at(graph, node, COMPONENT_LAYER) == {node}


def test_descendants_doc_two_by_two():
    corpus = Corpus(documents=(_doc("d1", 2, 2),))
    graph = build_graph(corpus)
    got = descendants_at(graph, doc_node("d1"), SUBCOMPONENT_LAYER)
    assert len(got) == 4
    assert got == oracle_descendants(corpus, doc_node("d1"), SUBCOMPONENT_LAYER)


def test_descendants_layer_above_node_rejected():
    corpus = Corpus(documents=(_doc("d1", 1, 1),))
    graph = build_graph(corpus)
    with pytest.raises(LayerAboveNode):
        descendants_at(graph, component_node("d1", "c0"), DOC_LAYER)


def test_unknown_node_rejected():
    corpus = Corpus(documents=(_doc("d1", 1, 1),))
    graph = build_graph(corpus)
    with pytest.raises(UnknownNode):
        descendants_at(graph, doc_node("d9"), DOC_LAYER)
    with pytest.raises(UnknownNode):
        node_content(graph, component_node("d1", "c9"))


def test_nav_neighbors_no_links_is_self():
    corpus = Corpus(documents=(_doc("d1", 1, 0),))
    graph = build_graph(corpus)
    assert nav_neighbors(graph, {doc_node("d1")}) == {doc_node("d1")}


def test_nav_neighbors_union():
    corpus = Corpus(
        documents=(
            _doc("d1", 1, 0, links=("d3",)),
            _doc("d2", 1, 0, links=("d3", "d4")),
            _doc("d3", 1, 0),
            _doc("d4", 1, 0),
        )
    )
    graph = build_graph(corpus)
    got = nav_neighbors(graph, {doc_node("d1"), doc_node("d2")})
    assert got == {doc_node(d) for d in ("d1", "d2", "d3", "d4")}


def test_nav_neighbors_rejects_component_anchor():
    corpus = Corpus(documents=(_doc("d1", 1, 0),))
    graph = build_graph(corpus)
    with pytest.raises(UnknownNode):
        nav_neighbors(graph, {component_node("d1", "c0")})


def test_descendants_match_oracle_on_random_graphs():
    rng = random.Random(101)
    for _ in range(30):
        corpus = random_layered_corpus(rng, max_nodes=120)
        graph = build_graph(corpus)
        for node in all_corpus_nodes(corpus):
            for g in range(node.layer, 3):
                assert descendants_at(graph, node, g) == oracle_descendants(
                    corpus, node, g
                ), f"mismatch at {node} g={g}"


def test_descendant_composition_property():
    rng = random.Random(202)
    for _ in range(20):
        corpus = random_layered_corpus(rng, max_nodes=150)
        graph = build_graph(corpus)
        for node in all_corpus_nodes(corpus):
            for g1 in range(node.layer, 3):
                for g2 in range(g1, 3):
                    direct = descendants_at(graph, node, g2)
                    composed = set()
                    for u in descendants_at(graph, node, g1):
                        composed |= descendants_at(graph, u, g2)
                    assert direct == composed


def test_nav_neighbors_monotone_and_matches_oracle():
    rng = random.Random(303)
    for _ in range(20):
        corpus = random_layered_corpus(rng, max_nodes=100)
        graph = build_graph(corpus)
        docs = [doc_node(d.doc_id) for d in corpus.documents]
        small = set(rng.sample(docs, k=rng.randint(1, len(docs))))
        big = small | set(rng.sample(docs, k=rng.randint(0, len(docs))))
        n_small = nav_neighbors(graph, small)
        n_big = nav_neighbors(graph, big)
        assert n_small <= n_big
        assert n_small == oracle_nav_neighbors(corpus, small)


def test_node_counts_equal_corpus_counts():
    rng = random.Random(404)
    for _ in range(10):
        corpus = random_layered_corpus(rng)
        graph = build_graph(corpus)
        n_docs = len(corpus.documents)
        n_comps = sum(len(d.components) for d in corpus.documents)
        n_subs = sum(
            len(c.subcomponents) for d in corpus.documents for c in d.components
        )
        assert len(graph.doc_ids) == n_docs
        assert len(graph.comp_ids) == n_comps
        assert len(graph.sub_ids) == n_subs
        assert graph.node_count == n_docs + n_comps + n_subs


def test_snapshot_round_trip_byte_equivalent(tmp_path):
    rng = random.Random(505)
    corpus = random_layered_corpus(rng, max_nodes=80)
    graph = build_graph(corpus)
    path = tmp_path / "graph.json"
    save_graph(graph, path)
    loaded = load_graph(path)
    assert dumps_graph(loaded) == dumps_graph(graph)
    save_graph(loaded, tmp_path / "graph2.json")
    assert (tmp_path / "graph2.json").read_bytes() == path.read_bytes()


def test_snapshot_rejects_unknown_format():
    with pytest.raises(SnapshotError):
        snapshot_to_graph({"format": "other/9"})


def test_snapshot_preserves_image_payloads(tmp_path):
    from layerhop.corpus import ImagePayload

    doc = Document(
        doc_id="d1",
        title="t",
        summary="s",
        components=(
            Component(
                component_id="c1",
                modality=Modality.IMAGE,
                content=ImagePayload(media_ref="m.png", caption="cap"),
            ),
        ),
    )
    graph = build_graph(Corpus(documents=(doc,)))
    path = tmp_path / "g.json"
    save_graph(graph, path)
    loaded = load_graph(path)
    payload = node_content(loaded, component_node("d1", "c1"))
    assert isinstance(payload, ImagePayload)
    assert payload.media_ref == "m.png"
    assert payload.caption == "cap"


def test_node_id_string_form():
    assert str(doc_node("d1")) == "d1"
    assert str(component_node("d1", "c2")) == "d1/c2"
    assert str(sub_node("d1", "c2", "s3")) == "d1/c2/s3"
    assert json.dumps(str(sub_node("d1", "c2", "s3"))) == '"d1/c2/s3"'
