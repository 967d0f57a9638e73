"""Three-layer document/component/subcomponent graph with navigational edges.

Layer 0 holds one node per document (text = summary), layer 1 one node per
component (raw multimodal payload), layer 2 one node per subcomponent.
Hierarchical edges follow containment; navigational edges run from a
component node to the document nodes named by its link list.

Nodes are stored densely per layer with integer adjacency; NodeId values map
to (layer, index) through a symbol table built at construction time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .corpus import Corpus, Document, ImagePayload, ModalPayload, Modality, payload_text
from .errors import LayerAboveNode, SnapshotError, SummarizerFailure, UnknownNode

FORMAT_TAG = "layerhop-graph/1"

DOC_LAYER = 0
COMPONENT_LAYER = 1
SUBCOMPONENT_LAYER = 2


@dataclass(frozen=True, order=True)
class NodeId:
    layer: int
    doc_id: str
    component_id: str | None = None
    sub_id: str | None = None

    def __post_init__(self):
        if self.layer == DOC_LAYER and (self.component_id or self.sub_id):
            raise ValueError("document node must not carry component/sub ids")
        if self.layer == COMPONENT_LAYER and (not self.component_id or self.sub_id):
            raise ValueError("component node needs component_id and no sub_id")
        if self.layer == SUBCOMPONENT_LAYER and not (self.component_id and self.sub_id):
            raise ValueError("subcomponent node needs component_id and sub_id")
        if self.layer not in (DOC_LAYER, COMPONENT_LAYER, SUBCOMPONENT_LAYER):
            raise ValueError(f"invalid layer {self.layer}")

    def __str__(self) -> str:
        parts = [self.doc_id]
        if self.component_id is not None:
            parts.append(self.component_id)
        if self.sub_id is not None:
            parts.append(self.sub_id)
        return "/".join(parts)


def doc_node(doc_id: str) -> NodeId:
    return NodeId(layer=DOC_LAYER, doc_id=doc_id)


def component_node(doc_id: str, component_id: str) -> NodeId:
    return NodeId(layer=COMPONENT_LAYER, doc_id=doc_id, component_id=component_id)


def sub_node(doc_id: str, component_id: str, sub_id: str) -> NodeId:
    return NodeId(
        layer=SUBCOMPONENT_LAYER, doc_id=doc_id, component_id=component_id, sub_id=sub_id
    )


@dataclass(frozen=True)
class LayeredGraph:
    doc_ids: tuple[NodeId, ...]
    doc_titles: tuple[str, ...]
    doc_text: tuple[str, ...]
    comp_ids: tuple[NodeId, ...]
    comp_modality: tuple[Modality, ...]
    comp_payload: tuple[ModalPayload, ...]
    comp_parent: tuple[int, ...]
    sub_ids: tuple[NodeId, ...]
    sub_text: tuple[str, ...]
    sub_parent: tuple[int, ...]
    doc_children: tuple[tuple[int, ...], ...]
    comp_children: tuple[tuple[int, ...], ...]
    nav_out: tuple[tuple[int, ...], ...]
    version: str = FORMAT_TAG
    _lookup: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        lookup: dict[NodeId, int] = {}
        for seq in (self.doc_ids, self.comp_ids, self.sub_ids):
            for idx, node in enumerate(seq):
                lookup[node] = idx
        object.__setattr__(self, "_lookup", lookup)

    def index_of(self, node: NodeId) -> int:
        try:
            return self._lookup[node]
        except KeyError:
            raise UnknownNode(f"node {node} not in graph")

    def __contains__(self, node: NodeId) -> bool:
        return node in self._lookup

    def layer_nodes(self, layer: int) -> tuple[NodeId, ...]:
        return (self.doc_ids, self.comp_ids, self.sub_ids)[layer]

    def all_nodes(self) -> Iterable[NodeId]:
        yield from self.doc_ids
        yield from self.comp_ids
        yield from self.sub_ids

    @property
    def node_count(self) -> int:
        return len(self.doc_ids) + len(self.comp_ids) + len(self.sub_ids)

    def doc_title(self, doc_id: str) -> str:
        return self.doc_titles[self.index_of(doc_node(doc_id))]


Summarizer = Callable[[Document], str]


def _fallback_summary(document: Document, max_chars: int) -> str:
    head = ""
    if document.components:
        head = payload_text(document.components[0].content)
    text = f"{document.title}. {head}" if head else document.title
    return text[:max_chars]


def build_graph(
    corpus: Corpus,
    summarizer: Summarizer | None = None,
    *,
    allow_fallback: bool = True,
    fallback_chars: int = 240,
) -> LayeredGraph:
    """Construct the three-layer graph over a validated corpus.

    Document-node text preference: explicit summary field, then summarizer
    output, then title + leading component text truncated to fallback_chars.
    """
    doc_ids: list[NodeId] = []
    doc_titles: list[str] = []
    doc_text: list[str] = []
    comp_ids: list[NodeId] = []
    comp_modality: list[Modality] = []
    comp_payload: list[ModalPayload] = []
    comp_parent: list[int] = []
    sub_ids: list[NodeId] = []
    sub_text: list[str] = []
    sub_parent: list[int] = []
    doc_children: list[list[int]] = []
    comp_children: list[list[int]] = []
    raw_links: list[list[str]] = []

    for doc in corpus.documents:
        d_idx = len(doc_ids)
        doc_ids.append(doc_node(doc.doc_id))
        doc_titles.append(doc.title)
        doc_children.append([])

        if doc.summary is not None:
            summary = doc.summary
        else:
            summary = None
            if summarizer is not None:
                try:
                    summary = summarizer(doc)
                except Exception as exc:
                    if not allow_fallback:
                        raise SummarizerFailure(
                            f"summarizer failed for {doc.doc_id!r}: {exc}"
                        )
            if summary is None:
                if not allow_fallback:
                    raise SummarizerFailure(
                        f"no summary available for {doc.doc_id!r} and fallback disabled"
                    )
                summary = _fallback_summary(doc, fallback_chars)
        doc_text.append(summary)

        for comp in doc.components:
            c_idx = len(comp_ids)
            comp_ids.append(component_node(doc.doc_id, comp.component_id))
            comp_modality.append(comp.modality)
            comp_payload.append(comp.content)
            comp_parent.append(d_idx)
            doc_children[d_idx].append(c_idx)
            comp_children.append([])
            raw_links.append([t for t in comp.links if t in corpus.by_id])

            for sub in comp.subcomponents:
                s_idx = len(sub_ids)
                sub_ids.append(sub_node(doc.doc_id, comp.component_id, sub.sub_id))
                sub_text.append(sub.content)
                sub_parent.append(c_idx)
                comp_children[c_idx].append(s_idx)

    doc_index = {node.doc_id: i for i, node in enumerate(doc_ids)}
    nav_out = tuple(
        tuple(doc_index[target] for target in targets) for targets in raw_links
    )

    return LayeredGraph(
        doc_ids=tuple(doc_ids),
        doc_titles=tuple(doc_titles),
        doc_text=tuple(doc_text),
        comp_ids=tuple(comp_ids),
        comp_modality=tuple(comp_modality),
        comp_payload=tuple(comp_payload),
        comp_parent=tuple(comp_parent),
        sub_ids=tuple(sub_ids),
        sub_text=tuple(sub_text),
        sub_parent=tuple(sub_parent),
        doc_children=tuple(tuple(c) for c in doc_children),
        comp_children=tuple(tuple(c) for c in comp_children),
        nav_out=nav_out,
    )


def descendants_at(graph: LayeredGraph, node: NodeId, g: int) -> set[NodeId]:
    """All descendants of node at layer g; includes node itself when its
    layer equals g."""
    if g not in (DOC_LAYER, COMPONENT_LAYER, SUBCOMPONENT_LAYER):
        raise ValueError(f"invalid layer {g}")
    if g < node.layer:
        raise LayerAboveNode(f"layer {g} is above node {node} (layer {node.layer})")
    idx = graph.index_of(node)
    if node.layer == g:
        return {node}
    if node.layer == DOC_LAYER:
        comp_idxs = graph.doc_children[idx]
        if g == COMPONENT_LAYER:
            return {graph.comp_ids[i] for i in comp_idxs}
        return {
            graph.sub_ids[s] for i in comp_idxs for s in graph.comp_children[i]
        }
    # node.layer == COMPONENT_LAYER, g == SUBCOMPONENT_LAYER
    return {graph.sub_ids[s] for s in graph.comp_children[idx]}


def nav_neighbors(graph: LayeredGraph, anchors: set[NodeId]) -> set[NodeId]:
    """Documents reachable from the anchors' components in one navigational
    hop, plus the anchors themselves."""
    result: set[NodeId] = set()
    for anchor in anchors:
        if anchor.layer != DOC_LAYER or anchor not in graph:
            raise UnknownNode(f"anchor {anchor} is not a document node of this graph")
        result.add(anchor)
        d_idx = graph.index_of(anchor)
        for c_idx in graph.doc_children[d_idx]:
            for target in graph.nav_out[c_idx]:
                result.add(graph.doc_ids[target])
    return result


def node_content(graph: LayeredGraph, node: NodeId) -> ModalPayload:
    """Raw payload for component/subcomponent nodes; summary text for
    document nodes."""
    idx = graph.index_of(node)
    if node.layer == DOC_LAYER:
        return graph.doc_text[idx]
    if node.layer == COMPONENT_LAYER:
        return graph.comp_payload[idx]
    return graph.sub_text[idx]


def node_text(graph: LayeredGraph, node: NodeId) -> str:
    return payload_text(node_content(graph, node))


def _encode_payload(payload: ModalPayload) -> object:
    if isinstance(payload, ImagePayload):
        record: dict = {"media_ref": payload.media_ref}
        if payload.caption is not None:
            record["caption"] = payload.caption
        return record
    return payload


def _decode_payload(raw: object) -> ModalPayload:
    if isinstance(raw, dict):
        return ImagePayload(media_ref=raw["media_ref"], caption=raw.get("caption"))
    return str(raw)


def graph_to_snapshot(graph: LayeredGraph) -> dict:
    return {
        "format": graph.version,
        "documents": [
            {
                "doc_id": node.doc_id,
                "title": graph.doc_titles[i],
                "text": graph.doc_text[i],
                "components": list(graph.doc_children[i]),
            }
            for i, node in enumerate(graph.doc_ids)
        ],
        "components": [
            {
                "doc_id": node.doc_id,
                "component_id": node.component_id,
                "modality": graph.comp_modality[i].value,
                "payload": _encode_payload(graph.comp_payload[i]),
                "parent": graph.comp_parent[i],
                "subcomponents": list(graph.comp_children[i]),
                "nav_out": list(graph.nav_out[i]),
            }
            for i, node in enumerate(graph.comp_ids)
        ],
        "subcomponents": [
            {
                "doc_id": node.doc_id,
                "component_id": node.component_id,
                "sub_id": node.sub_id,
                "text": graph.sub_text[i],
                "parent": graph.sub_parent[i],
            }
            for i, node in enumerate(graph.sub_ids)
        ],
    }


def snapshot_to_graph(snapshot: dict) -> LayeredGraph:
    tag = snapshot.get("format")
    if tag != FORMAT_TAG:
        raise SnapshotError(f"unsupported graph snapshot format {tag!r}")
    docs = snapshot["documents"]
    comps = snapshot["components"]
    subs = snapshot["subcomponents"]
    return LayeredGraph(
        doc_ids=tuple(doc_node(d["doc_id"]) for d in docs),
        doc_titles=tuple(d["title"] for d in docs),
        doc_text=tuple(d["text"] for d in docs),
        comp_ids=tuple(component_node(c["doc_id"], c["component_id"]) for c in comps),
        comp_modality=tuple(Modality(c["modality"]) for c in comps),
        comp_payload=tuple(_decode_payload(c["payload"]) for c in comps),
        comp_parent=tuple(c["parent"] for c in comps),
        sub_ids=tuple(sub_node(s["doc_id"], s["component_id"], s["sub_id"]) for s in subs),
        sub_text=tuple(s["text"] for s in subs),
        sub_parent=tuple(s["parent"] for s in subs),
        doc_children=tuple(tuple(d["components"]) for d in docs),
        comp_children=tuple(tuple(c["subcomponents"]) for c in comps),
        nav_out=tuple(tuple(c["nav_out"]) for c in comps),
        version=tag,
    )


def dumps_graph(graph: LayeredGraph) -> str:
    return json.dumps(
        graph_to_snapshot(graph), ensure_ascii=False, sort_keys=True,
        separators=(",", ":"),
    )


def save_graph(graph: LayeredGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_graph(graph))
        fh.write("\n")


def load_graph(path) -> LayeredGraph:
    with open(path, "r", encoding="utf-8") as fh:
        return snapshot_to_graph(json.load(fh))
