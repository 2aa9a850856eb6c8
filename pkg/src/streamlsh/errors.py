"""Exception hierarchy shared by every module.

The CLI maps these onto process exit codes, so library code raises the
narrowest class that applies.
"""

from __future__ import annotations


class StreamLSHError(Exception):
    """Base class for all library errors."""


class DomainError(StreamLSHError, ValueError):
    """A mathematical precondition failed (zero-norm vector, 0/0 closed form)."""


class ProtocolError(StreamLSHError):
    """A stream-ordering contract was broken (bad tick, duplicate id, ...)."""


class ValidationError(StreamLSHError, ValueError):
    """Configuration or parameter values are outside their allowed range."""


class CorpusParseError(StreamLSHError):
    """A corpus or interest-stream line could not be parsed."""

    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class InvariantViolation(StreamLSHError, AssertionError):
    """An internal invariant (e.g. approx set not a subset of ideal) failed."""
