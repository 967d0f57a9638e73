"""Strict JSON extraction from LLM text with bounded re-ask retries."""

from __future__ import annotations

import json
import re
from typing import Callable, TypeVar

from ..errors import MalformedOutput
from ..timing import CostTracker, Usage

T = TypeVar("T")

_FENCE = re.compile(r"^```[a-zA-Z0-9_-]*\s*\n(.*?)\n?```\s*$", re.DOTALL)

FORMAT_REMINDER = (
    "\n\nREMINDER: Return ONLY valid JSON matching the schema exactly - "
    "no markdown, no code fences, no extra text."
)


def strip_wrappers(raw: str) -> str:
    """Peel code fences and surrounding prose down to the outermost JSON
    object or array."""
    text = raw.strip()
    fenced = _FENCE.match(text)
    if fenced:
        text = fenced.group(1).strip()
    # prose before/after: cut to the widest {...} or [...] span
    starts = [i for i in (text.find("{"), text.find("[")) if i != -1]
    if not starts:
        return text
    start = min(starts)
    closer = "}" if text[start] == "{" else "]"
    end = text.rfind(closer)
    if end > start:
        return text[start : end + 1]
    return text


def parse_structured_output(raw: str, validator: Callable[[object], T]) -> T:
    """Parse raw LLM text into JSON and validate its shape.

    The validator receives the decoded value and must return the final
    parsed result, raising ValueError/KeyError/TypeError on shape problems.
    """
    try:
        value = json.loads(strip_wrappers(raw))
    except json.JSONDecodeError as exc:
        raise ValueError(f"not valid JSON: {exc.msg}")
    return validator(value)


def request_structured(
    llm,
    *,
    tag: str,
    system: str,
    user: str,
    validator: Callable[[object], T],
    max_retries: int = 2,
    tracker: CostTracker | None = None,
    params: dict | None = None,
    raw_out: list[str] | None = None,
) -> T:
    """Call the provider and parse; on malformed output re-ask up to
    max_retries times with an appended format reminder, then hard-error.
    Each raw response is appended to raw_out when given (for audit traces)."""
    tracker = tracker or CostTracker()
    attempts = 0
    raw = ""
    prompt_user = user
    last_reason = "invalid structured output"
    while attempts <= max_retries:
        attempts += 1
        before = (llm.usage.input_tokens, llm.usage.output_tokens)
        with tracker.span("llm"):
            raw = llm.complete(system, prompt_user, tag=tag, params=params)
        after = (llm.usage.input_tokens, llm.usage.output_tokens)
        if raw_out is not None:
            raw_out.append(raw)
        tracker.record_llm_call(
            Usage(input_tokens=after[0] - before[0], output_tokens=after[1] - before[1])
        )
        try:
            return parse_structured_output(raw, validator)
        except (ValueError, KeyError, TypeError) as exc:
            last_reason = str(exc) or last_reason
            prompt_user = user + FORMAT_REMINDER
    raise MalformedOutput(raw, attempts, reason=last_reason)
