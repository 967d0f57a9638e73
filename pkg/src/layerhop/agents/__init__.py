"""LLM-facing agents: providers, structured output, roles and policies."""

from .providers import HttpChatProvider, LlmProvider, MockLlm
from .structured import parse_structured_output, request_structured
from .roles import EvalResult, evaluate_traversal, plan_subqueries, rerank_final
from .orchestrator import decide_action_heuristic, decide_action_llm, effective_ladder

__all__ = [
    "HttpChatProvider",
    "LlmProvider",
    "MockLlm",
    "parse_structured_output",
    "request_structured",
    "EvalResult",
    "evaluate_traversal",
    "plan_subqueries",
    "rerank_final",
    "decide_action_heuristic",
    "decide_action_llm",
    "effective_ladder",
]
