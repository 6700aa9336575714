"""Exception hierarchy shared by the engine modules."""


class MaskEdgeError(Exception):
    """Base class for all engine errors."""


class AllocationError(MaskEdgeError):
    """Requested tensor exceeds the configured element cap."""


class ShapeError(MaskEdgeError):
    """Incompatible shapes passed to an operator or graph layer."""


class ModelFormatError(MaskEdgeError):
    """Malformed MEF bytes. Carries the byte offset where parsing failed.

    ``kind`` is a stable machine-readable tag (bad_magic, truncated, ...);
    ``offset`` is the absolute byte position of the offending data.
    """

    def __init__(self, kind: str, offset: int, message: str):
        super().__init__(f"{kind} at byte {offset}: {message}")
        self.kind = kind
        self.offset = offset


class ValidationError(MaskEdgeError):
    """Graph failed structural validation. ``violations`` lists every problem."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid graph: " + "; ".join(self.violations))


class ManifestError(MaskEdgeError):
    """Bad JSON weight manifest (unknown operator, missing blob, ...)."""


class NarrowingError(ManifestError):
    """An integer in the manifest does not fit in 32 bits.

    Raised instead of silently truncating; names the offending field.
    """

    def __init__(self, field: str, value: int):
        super().__init__(
            f"field {field!r} holds {value}, which does not fit in 32 bits"
        )
        self.field = field
        self.value = value


class ExecutionError(MaskEdgeError):
    """A layer produced a non-finite value or the plan does not match."""
