"""Shared test builders: random corpora and brute-force structural oracles."""

from __future__ import annotations

import random

from layerhop.corpus import Component, Corpus, Document, Modality, Subcomponent
from layerhop.graph import (
    COMPONENT_LAYER,
    DOC_LAYER,
    SUBCOMPONENT_LAYER,
    NodeId,
    component_node,
    doc_node,
    sub_node,
)


def random_layered_corpus(rng: random.Random, max_nodes: int = 200) -> Corpus:
    """Random corpus whose total node count (docs+components+subs) stays
    within max_nodes. Links point at arbitrary documents."""
    n_docs = rng.randint(1, max(1, max_nodes // 8))
    budget = max_nodes - n_docs
    doc_ids = [f"d{i}" for i in range(n_docs)]
    docs = []
    for doc_id in doc_ids:
        comps = []
        n_comps = rng.randint(0, 4)
        for ci in range(n_comps):
            if budget <= 0:
                break
            budget -= 1
            n_subs = rng.randint(0, 4)
            subs = []
            for si in range(n_subs):
                if budget <= 0:
                    break
                budget -= 1
                subs.append(Subcomponent(sub_id=f"s{si}", content=f"u {doc_id} {ci} {si}"))
            links = tuple(
                rng.sample(doc_ids, k=rng.randint(0, min(3, len(doc_ids))))
            )
            comps.append(
                Component(
                    component_id=f"c{ci}",
                    modality=Modality.PARAGRAPH,
                    content=f"b {doc_id} {ci}",
                    subcomponents=tuple(subs),
                    links=links,
                )
            )
        docs.append(
            Document(
                doc_id=doc_id,
                title=f"T {doc_id}",
                summary=f"S {doc_id}",
                components=tuple(comps),
            )
        )
    return Corpus(documents=tuple(docs))


def all_corpus_nodes(corpus: Corpus) -> list[NodeId]:
    nodes: list[NodeId] = []
    for doc in corpus.documents:
        nodes.append(doc_node(doc.doc_id))
        for comp in doc.components:
            nodes.append(component_node(doc.doc_id, comp.component_id))
            for sub in comp.subcomponents:
                nodes.append(sub_node(doc.doc_id, comp.component_id, sub.sub_id))
    return nodes


def oracle_descendants(corpus: Corpus, node: NodeId, g: int) -> set[NodeId]:
    """Descendant set computed straight off the corpus structure."""
    if g == node.layer:
        return {node}
    doc = corpus.by_id[node.doc_id]
    if node.layer == DOC_LAYER:
        if g == COMPONENT_LAYER:
            return {component_node(doc.doc_id, c.component_id) for c in doc.components}
        return {
            sub_node(doc.doc_id, c.component_id, s.sub_id)
            for c in doc.components
            for s in c.subcomponents
        }
    if node.layer == COMPONENT_LAYER and g == SUBCOMPONENT_LAYER:
        comp = next(c for c in doc.components if c.component_id == node.component_id)
        return {sub_node(doc.doc_id, comp.component_id, s.sub_id) for s in comp.subcomponents}
    raise AssertionError(f"oracle asked for layer {g} under layer {node.layer}")


def oracle_nav_neighbors(corpus: Corpus, anchors: set[NodeId]) -> set[NodeId]:
    result = set(anchors)
    for anchor in anchors:
        doc = corpus.by_id[anchor.doc_id]
        for comp in doc.components:
            for target in comp.links:
                if target in corpus.by_id:
                    result.add(doc_node(target))
    return result
