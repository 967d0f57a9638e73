"""HTTP service wrapping the retrieval engine."""

from .app import ServiceState, create_app

__all__ = ["ServiceState", "create_app"]
