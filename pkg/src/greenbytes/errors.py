"""Exception hierarchy shared by all greenbytes modules.

Every error raised on purpose derives from :class:`GreenBytesError` so callers
can catch the whole family, while each class also subclasses the closest
builtin (``ValueError``, ``ArithmeticError``) to stay friendly to generic
handling code.
"""


class GreenBytesError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(GreenBytesError, ValueError):
    """An argument or constructed value violates a domain invariant."""


class ConfigurationError(GreenBytesError, ValueError):
    """Two pieces of configuration or metadata disagree (unknown feature
    name, mismatched counter range, model/data feature mismatch, ...)."""


class OrderingError(GreenBytesError, ValueError):
    """Timestamps are not strictly increasing where the contract requires it."""


class ParseError(GreenBytesError, ValueError):
    """Malformed text input. Carries the 1-based line number when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ShapeError(GreenBytesError, ValueError):
    """Array dimensions do not match what the model or metric expects."""


class NumericError(GreenBytesError, ArithmeticError):
    """A computation produced NaN/inf or diverged."""


class InsufficientDataError(GreenBytesError, ValueError):
    """Not enough samples for the requested operation (e.g. windowing)."""


class EmptyDatasetError(GreenBytesError, ValueError):
    """An operation that requires samples was handed (or produced) none."""


class SchemaError(GreenBytesError, ValueError):
    """A persisted file does not match its declared schema."""


class UnsupportedVersionError(SchemaError):
    """A persisted file declares a format version this build cannot read."""
