"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input violates an operation's preconditions or a type invariant."""


class FormatError(ValidationError):
    """A serialized artifact is malformed (bad magic, bad version, garbage)."""


class TruncationError(FormatError):
    """A serialized artifact ends before its declared payload."""


class FitError(RuntimeError):
    """A model fit cannot proceed (too few samples, degenerate data)."""


class ConflictError(ValueError):
    """An insert collides with existing state (duplicate document id)."""


class DataError(RuntimeError):
    """A pipeline stage is missing data it was promised (maps, localizations)."""
