"""Exception types shared across the engine."""


class DatasetError(ValueError):
    """Raised when a dataset descriptor or payload is malformed.

    ``field`` names the offending descriptor entry where known.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class PlacementError(RuntimeError):
    """Raised when synthetic primitive placement exceeds the rejection budget."""


class HierarchyError(ValueError):
    """Raised for malformed predicate hierarchies (bad range, unknown attribute, shape mismatch)."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class StaleEpochError(RuntimeError):
    """Raised when an ID buffer from an older sparsification epoch is assessed."""


class CommandError(ValueError):
    """Raised for malformed session commands; the session is left unchanged."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field
