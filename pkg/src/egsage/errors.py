"""Exception hierarchy shared by the pipeline stages."""


class EGSError(Exception):
    """Base class for all errors raised by egsage."""


class SchemaError(EGSError):
    """Input columns are missing or no usable feature survives encoding."""


class RowError(EGSError):
    """A single CSV row could not be parsed."""

    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DimensionError(EGSError, ValueError):
    """Operand shapes are incompatible."""


class StateError(EGSError, RuntimeError):
    """An operation was invoked in the wrong order (e.g. backward before forward)."""


class NumericError(EGSError, ArithmeticError):
    """A loss or gradient became non-finite."""


class ArtifactError(EGSError):
    """A serialized artifact is malformed, stale or incompatible."""
