"""Agentic retrieval over layered multimodal document graphs."""

__version__ = "0.1.0"
