"""Exception hierarchy shared across the package."""


class LayerhopError(Exception):
    """Base class for all package errors."""


class ParseError(LayerhopError):
    """A corpus line could not be parsed."""

    def __init__(self, line_number: int, reason: str):
        self.line_number = line_number
        self.reason = reason
        super().__init__(f"line {line_number}: {reason}")


class DuplicateDocId(ParseError):
    """Two documents in the corpus share an id."""

    def __init__(self, line_number: int, doc_id: str):
        self.doc_id = doc_id
        super().__init__(line_number, f"duplicate doc_id {doc_id!r}")


class UnknownComponent(LayerhopError):
    pass


class UnknownNode(LayerhopError):
    pass


class LayerAboveNode(LayerhopError):
    """Requested descendant layer is above the node's own layer."""


class SummarizerFailure(LayerhopError):
    pass


class DimensionMismatch(LayerhopError):
    pass


class EmptyDescendants(LayerhopError):
    """A node has no descendants at the requested layer."""


class EmbedderFailure(LayerhopError):
    def __init__(self, node, cause):
        self.node = node
        self.cause = cause
        super().__init__(f"embedding failed for {node}: {cause}")


class FingerprintMismatch(LayerhopError):
    """Stored index was built with a different embedder."""


class EmptyQuery(LayerhopError):
    pass


class KindMismatch(LayerhopError):
    """Observation kind does not match the action that produced it."""


class MissingProvider(LayerhopError):
    pass


class BadAnchor(LayerhopError):
    pass


class EmptyPool(LayerhopError):
    """A traversal stage has no candidates to select from."""


class MalformedOutput(LayerhopError):
    """LLM output failed structured parsing after all retries."""

    def __init__(self, raw: str, attempts: int, reason: str = "invalid structured output"):
        self.raw = raw
        self.attempts = attempts
        super().__init__(f"{reason} after {attempts} attempt(s)")


class ConfigError(LayerhopError):
    pass


class SnapshotError(LayerhopError):
    """A stored artifact has an unsupported or corrupt format."""


class ProviderFailure(LayerhopError):
    pass


class DatasetError(LayerhopError):
    pass
