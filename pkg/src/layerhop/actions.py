"""Action, strategy and observation value types shared across modules."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .graph import NodeId


class DocumentMode(str, Enum):
    NEIGHBORS = "neighbors"
    VECTOR_SEARCH = "vector_search"
    LLM_REASONING = "llm_reasoning"


class ComponentMode(str, Enum):
    VECTOR_SEARCH = "vector_search"
    LLM_REASONING = "llm_reasoning"


DOC_GRANULARITY = 0
COMPONENT_GRANULARITY = 1
SUBCOMPONENT_GRANULARITY = 2


@dataclass(frozen=True)
class StrategyTuple:
    """One traversal configuration: hop scope, selection modes, scoring
    granularity and an optional anchor into history."""

    document_mode: DocumentMode
    component_mode: ComponentMode
    granularity: int = DOC_GRANULARITY
    anchor: int | None = None

    def __post_init__(self):
        if self.granularity not in (0, 1, 2):
            raise ValueError(f"invalid granularity {self.granularity}")

    @property
    def component_granularity(self) -> int:
        """The component stage never scores above the component layer."""
        return max(self.granularity, COMPONENT_GRANULARITY)


RouteSignature = tuple  # (subquery text, anchor, document_mode, component_mode, granularity)


def route_signature(subquery: str, tau: StrategyTuple) -> RouteSignature:
    return (
        subquery,
        tau.anchor,
        tau.document_mode.value,
        tau.component_mode.value,
        tau.granularity,
    )


class ActionKind(str, Enum):
    TRAVERSE = "traverse"
    PLAN = "plan"
    STOP = "stop"


@dataclass(frozen=True)
class ActionDecision:
    kind: ActionKind
    subquery: str | None = None
    strategy: StrategyTuple | None = None
    subtask_index: int | None = None
    rationale: str = ""

    def __post_init__(self):
        if self.kind is ActionKind.TRAVERSE:
            if self.strategy is None or not self.subquery:
                raise ValueError("traverse decision needs a subquery and a strategy")


class ObservationKind(str, Enum):
    TRAVERSE_OUTCOME = "traverse_outcome"
    PLAN_OUTCOME = "plan_outcome"
    STOP = "stop"


@dataclass(frozen=True)
class RetrievedDoc:
    node: NodeId
    title: str
    score: float


@dataclass(frozen=True)
class RetrievedComponent:
    node: NodeId
    preview: str
    score: float


@dataclass(frozen=True)
class SubtaskUpdate:
    index: int  # 1-based ledger position
    status: str  # "answerable" | "not_answerable"
    answer: str | None = None


@dataclass(frozen=True)
class Observation:
    kind: ObservationKind
    success: bool | None = None
    docs: tuple[RetrievedDoc, ...] = ()
    components: tuple[RetrievedComponent, ...] = ()
    evaluator_notes: str = ""
    subtask_updates: tuple[SubtaskUpdate, ...] = ()
    new_subqueries: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind is ObservationKind.TRAVERSE_OUTCOME and self.success is None:
            raise ValueError("traverse observations must carry a success flag")
