"""Wall-clock spans and token/price accounting for retrieval runs."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

SPAN_KINDS = ("llm", "vector_search", "embedding")


class FakeClock:
    """Deterministic monotonic clock: each reading advances by a fixed tick.

    Injected wherever reproducible timing reports are required (tests, the
    CLI --deterministic flag); production code uses time.perf_counter.
    """

    def __init__(self, tick: float = 0.001, start: float = 0.0):
        self.tick = tick
        self._now = start

    def __call__(self) -> float:
        value = self._now
        self._now += self.tick
        return value


@dataclass
class Usage:
    """Token counts reported by a chat provider."""

    input_tokens: int = 0
    output_tokens: int = 0

    @property
    def total_tokens(self) -> int:
        return self.input_tokens + self.output_tokens

    def add(self, other: "Usage") -> None:
        self.input_tokens += other.input_tokens
        self.output_tokens += other.output_tokens


class CostTracker:
    """Accumulates elapsed time per span kind plus LLM call/token counts."""

    def __init__(self, clock=None):
        self._clock = clock or time.perf_counter
        self.seconds: dict[str, float] = {k: 0.0 for k in SPAN_KINDS}
        self.llm_calls: int = 0
        self.usage = Usage()

    def span(self, kind: str) -> "_Span":
        if kind not in self.seconds:
            raise ValueError(f"unknown span kind {kind!r}")
        return _Span(self, kind)

    def record_llm_call(self, usage: Usage | None = None) -> None:
        self.llm_calls += 1
        if usage is not None:
            self.usage.add(usage)

    def elapsed(self, kind: str) -> float:
        return self.seconds[kind]

    @property
    def total_seconds(self) -> float:
        return sum(self.seconds.values())


@dataclass
class _Span:
    tracker: CostTracker
    kind: str
    _start: float = field(default=0.0, init=False)

    def __enter__(self) -> "_Span":
        self._start = self.tracker._clock()
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.tracker.seconds[self.kind] += self.tracker._clock() - self._start
