"""Corpus data model and line-delimited ingest.

A corpus file holds one JSON document per line:

    {"doc_id": "d1", "title": "...", "summary": "...",
     "components": [{"component_id": "c1", "modality": "paragraph",
                     "content": "...", "subcomponents": [...], "links": [...]}]}

Paragraph and table components carry their content as a string (tables in a
serialized-row form); image components carry {"media_ref": ..., "caption": ...}.
The engine never decodes image pixels; media references are passed through to
the embedding provider.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Iterable, Union

from .errors import DuplicateDocId, ParseError, UnknownComponent


class Modality(str, Enum):
    PARAGRAPH = "paragraph"
    TABLE = "table"
    IMAGE = "image"


@dataclass(frozen=True)
class ImagePayload:
    media_ref: str
    caption: str | None = None

    def as_text(self) -> str:
        """Canonical text stand-in used for embedding and previews."""
        if self.caption:
            return f"{self.caption} [{self.media_ref}]"
        return f"[{self.media_ref}]"


ModalPayload = Union[str, ImagePayload]


def payload_text(payload: ModalPayload) -> str:
    return payload.as_text() if isinstance(payload, ImagePayload) else payload


@dataclass(frozen=True)
class Subcomponent:
    sub_id: str
    content: str


@dataclass(frozen=True)
class Component:
    component_id: str
    modality: Modality
    content: ModalPayload
    subcomponents: tuple[Subcomponent, ...] = ()
    links: tuple[str, ...] = ()


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    summary: str | None = None
    components: tuple[Component, ...] = ()


@dataclass(frozen=True)
class Corpus:
    documents: tuple[Document, ...] = ()

    def __post_init__(self):
        object.__setattr__(
            self, "_by_id", {d.doc_id: d for d in self.documents}
        )

    @property
    def by_id(self) -> dict[str, Document]:
        return self._by_id  # type: ignore[attr-defined]

    def __len__(self) -> int:
        return len(self.documents)


@dataclass
class ValidationReport:
    """Non-fatal corpus problems; a clean corpus has all lists empty."""

    dangling_links: list[tuple[str, str, str]] = field(default_factory=list)
    duplicate_ids: list[str] = field(default_factory=list)
    empty_payloads: list[str] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not (self.dangling_links or self.duplicate_ids or self.empty_payloads)


def _parse_component(raw: dict, line_number: int, seen_ids: set[str]) -> Component:
    if "component_id" not in raw:
        raise ParseError(line_number, "component missing component_id")
    cid = str(raw["component_id"])
    if cid in seen_ids:
        raise ParseError(line_number, f"duplicate component_id {cid!r}")
    seen_ids.add(cid)

    try:
        modality = Modality(raw.get("modality", ""))
    except ValueError:
        raise ParseError(line_number, f"component {cid!r}: unknown modality {raw.get('modality')!r}")

    content = raw.get("content")
    if modality is Modality.IMAGE:
        if not isinstance(content, dict) or "media_ref" not in content:
            raise ParseError(line_number, f"component {cid!r}: image content must be an object with media_ref")
        payload: ModalPayload = ImagePayload(
            media_ref=str(content["media_ref"]),
            caption=content.get("caption"),
        )
    else:
        if not isinstance(content, str):
            raise ParseError(line_number, f"component {cid!r}: {modality.value} content must be a string")
        payload = content

    subs = []
    sub_ids: set[str] = set()
    for sub_raw in raw.get("subcomponents", []):
        if not isinstance(sub_raw, dict) or "sub_id" not in sub_raw:
            raise ParseError(line_number, f"component {cid!r}: subcomponent missing sub_id")
        sid = str(sub_raw["sub_id"])
        if sid in sub_ids:
            raise ParseError(line_number, f"component {cid!r}: duplicate sub_id {sid!r}")
        sub_ids.add(sid)
        subs.append(Subcomponent(sub_id=sid, content=str(sub_raw.get("content", ""))))

    links = tuple(str(t) for t in raw.get("links", []))
    return Component(
        component_id=cid,
        modality=modality,
        content=payload,
        subcomponents=tuple(subs),
        links=links,
    )


def parse_corpus(stream: IO[str] | Iterable[str]) -> Corpus:
    """Parse a line-delimited corpus stream.

    Malformed lines abort with a positioned ParseError; duplicate document
    ids abort with DuplicateDocId. Content emptiness is deliberately not a
    parse failure - validate_corpus reports it.
    """
    documents: list[Document] = []
    seen_docs: set[str] = set()
    for line_number, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(line_number, f"invalid JSON: {exc.msg}")
        if not isinstance(raw, dict):
            raise ParseError(line_number, "document record must be a JSON object")
        if "doc_id" not in raw:
            raise ParseError(line_number, "document missing doc_id")
        doc_id = str(raw["doc_id"])
        if doc_id in seen_docs:
            raise DuplicateDocId(line_number, doc_id)
        seen_docs.add(doc_id)

        comp_ids: set[str] = set()
        components = tuple(
            _parse_component(c, line_number, comp_ids) for c in raw.get("components", [])
        )
        summary = raw.get("summary")
        documents.append(
            Document(
                doc_id=doc_id,
                title=str(raw.get("title", "")),
                summary=None if summary is None else str(summary),
                components=components,
            )
        )
    return Corpus(documents=tuple(documents))


def load_corpus(path) -> Corpus:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_corpus(fh)


def _component_record(component: Component) -> dict:
    if isinstance(component.content, ImagePayload):
        content: object = {"media_ref": component.content.media_ref}
        if component.content.caption is not None:
            content["caption"] = component.content.caption
    else:
        content = component.content
    return {
        "component_id": component.component_id,
        "modality": component.modality.value,
        "content": content,
        "subcomponents": [
            {"sub_id": s.sub_id, "content": s.content} for s in component.subcomponents
        ],
        "links": list(component.links),
    }


def serialize_corpus(corpus: Corpus) -> str:
    """Inverse of parse_corpus; one document per line, stable field order."""
    lines = []
    for doc in corpus.documents:
        record: dict = {"doc_id": doc.doc_id, "title": doc.title}
        if doc.summary is not None:
            record["summary"] = doc.summary
        record["components"] = [_component_record(c) for c in doc.components]
        lines.append(json.dumps(record, ensure_ascii=False))
    return "\n".join(lines) + ("\n" if lines else "")


def validate_corpus(corpus: Corpus) -> ValidationReport:
    """Enumerate dangling links, duplicate ids and empty payloads.

    The corpus is never mutated; problems land in the report.
    """
    report = ValidationReport()
    seen_docs: set[str] = set()
    for doc in corpus.documents:
        if doc.doc_id in seen_docs:
            report.duplicate_ids.append(doc.doc_id)
        seen_docs.add(doc.doc_id)

        comp_ids: set[str] = set()
        for comp in doc.components:
            qualified = f"{doc.doc_id}/{comp.component_id}"
            if comp.component_id in comp_ids:
                report.duplicate_ids.append(qualified)
            comp_ids.add(comp.component_id)

            if not payload_text(comp.content).strip():
                report.empty_payloads.append(qualified)
            sub_ids: set[str] = set()
            for sub in comp.subcomponents:
                sub_qualified = f"{qualified}/{sub.sub_id}"
                if sub.sub_id in sub_ids:
                    report.duplicate_ids.append(sub_qualified)
                sub_ids.add(sub.sub_id)
                if not sub.content.strip():
                    report.empty_payloads.append(sub_qualified)

            for target in comp.links:
                if target not in corpus.by_id:
                    report.dangling_links.append((doc.doc_id, comp.component_id, target))
    return report


def link_targets(corpus: Corpus, component: Component) -> set[str]:
    """Resolved link targets of a component; dangling targets are excluded."""
    for doc in corpus.documents:
        if component in doc.components:
            return {t for t in component.links if t in corpus.by_id}
    raise UnknownComponent(f"component {component.component_id!r} not in corpus")
