"""Chat-completion providers: the live HTTP client and a scriptable mock.

Every agent call is routed with a role tag (orchestrator, planner, evaluator,
reranker, doc_traverser, comp_traverser). The mock uses the tag to pop
scripted responses; the HTTP provider ignores it.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Callable, Protocol

from ..errors import ProviderFailure
from ..timing import Usage


class LlmProvider(Protocol):
    calls: int
    usage: Usage

    def complete(
        self, system: str, user: str, *, tag: str = "", params: dict | None = None
    ) -> str: ...


@dataclass
class MockCall:
    tag: str
    system: str
    user: str
    response: str


class MockLlm:
    """Deterministic scripted provider for tests and --mock runs.

    Responses are queued per tag via script(); when a tag's queue is empty a
    per-tag default (string or callable(system, user) -> str) is used. Usage
    counters are length-derived so token accounting stays deterministic.
    """

    def __init__(self):
        self.calls = 0
        self.usage = Usage()
        self.calls_by_tag: dict[str, int] = {}
        self.log: list[MockCall] = []
        self._queues: dict[str, list[str]] = {}
        self._defaults: dict[str, str | Callable[[str, str], str]] = {}

    def script(self, tag: str, responses: str | list[str]) -> "MockLlm":
        queue = self._queues.setdefault(tag, [])
        if isinstance(responses, str):
            queue.append(responses)
        else:
            queue.extend(responses)
        return self

    def set_default(self, tag: str, response: str | Callable[[str, str], str]) -> "MockLlm":
        self._defaults[tag] = response
        return self

    def pending(self, tag: str) -> int:
        return len(self._queues.get(tag, []))

    def complete(
        self, system: str, user: str, *, tag: str = "", params: dict | None = None
    ) -> str:
        queue = self._queues.get(tag)
        if queue:
            response = queue.pop(0)
        elif tag in self._defaults:
            default = self._defaults[tag]
            response = default(system, user) if callable(default) else default
        else:
            raise ProviderFailure(f"mock has no scripted response for tag {tag!r}")
        self.calls += 1
        self.calls_by_tag[tag] = self.calls_by_tag.get(tag, 0) + 1
        self.usage.add(
            Usage(
                input_tokens=(len(system) + len(user)) // 4,
                output_tokens=len(response) // 4,
            )
        )
        self.log.append(MockCall(tag=tag, system=system, user=user, response=response))
        return response


class HttpChatProvider:
    """Chat provider over an HTTP JSON endpoint.

    Wire contract: POST {"model", "system", "user", "params"} and read
    {"text", "usage": {"input", "output"}}. Endpoint/credentials come from
    arguments or the LAYERHOP_LLM_URL / LAYERHOP_LLM_TOKEN environment
    variables.
    """

    def __init__(
        self,
        url: str | None = None,
        model: str = "default",
        token: str | None = None,
        client=None,
        timeout: float = 120.0,
        decoding_params: dict | None = None,
    ):
        import httpx

        self.url = url or os.environ.get("LAYERHOP_LLM_URL", "")
        if not self.url:
            raise ProviderFailure("chat endpoint URL not configured")
        self.model = model
        self.token = token or os.environ.get("LAYERHOP_LLM_TOKEN")
        self.calls = 0
        self.usage = Usage()
        # most deterministic setting the provider supports, unless overridden
        self.decoding_params = decoding_params or {"temperature": 0.0}
        self._client = client or httpx.Client(timeout=timeout)

    def complete(
        self, system: str, user: str, *, tag: str = "", params: dict | None = None
    ) -> str:
        headers = {}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        body = {
            "model": self.model,
            "system": system,
            "user": user,
            "params": params or self.decoding_params,
        }
        try:
            response = self._client.post(self.url, json=body, headers=headers)
            response.raise_for_status()
            payload = response.json()
        except Exception as exc:
            raise ProviderFailure(f"chat endpoint error: {exc}")
        self.calls += 1
        usage = payload.get("usage", {})
        self.usage.add(
            Usage(
                input_tokens=int(usage.get("input", 0)),
                output_tokens=int(usage.get("output", 0)),
            )
        )
        try:
            return payload["text"]
        except KeyError:
            raise ProviderFailure("chat endpoint response missing 'text'")
