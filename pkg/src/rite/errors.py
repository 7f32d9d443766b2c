"""Exception hierarchy shared across the toolkit.

Every error the public API can raise derives from :class:`RiteError`, so
callers can catch one base class. The CLI maps subtrees to exit codes
(input errors vs. backend errors vs. internal invariant violations).
"""

from __future__ import annotations


class RiteError(Exception):
    """Base class for all toolkit errors."""


class InputError(RiteError):
    """Bad user-supplied data (files, config, arguments)."""


class BackendError(RiteError):
    """A language-model backend failed or misbehaved."""


class InternalError(RiteError):
    """An internal invariant was violated; indicates a bug."""


# --- vector / numeric errors -------------------------------------------------

class ZeroVectorError(InputError):
    """All-zero vector where a direction is required."""


class DimMismatchError(InputError):
    """Operands have different dimensionality."""


# --- prompt assembly ----------------------------------------------------------

class EmptySubjectError(InputError):
    """Subject text bound to a template is empty."""


class MissingReasoningError(InputError):
    """Template has a reasoning slot but no usable reasoning was supplied."""


class UnexpectedReasoningError(InputError):
    """Reasoning supplied to a template without a reasoning slot."""


# --- model / backend ----------------------------------------------------------

class InvalidConfigError(InputError):
    """A configuration object violates its invariants."""


class ContextOverflowError(BackendError):
    """Tokenized input does not fit the model context window."""


class UnsupportedTemperatureError(BackendError):
    """Sampling temperature other than 0 requested from a greedy decoder."""


class EmptySpanCoverageError(BackendError):
    """Requested byte span maps to no token positions."""


class BackendUnavailableError(BackendError):
    """Remote backend unreachable or not ready."""


class ProtocolError(BackendError):
    """Remote backend returned a malformed or unexpected response."""


class EmptyReasoningError(BackendError):
    """Reasoning generation produced no text and policy forbids fallback."""


# --- file formats ---------------------------------------------------------------

class ParseError(InputError):
    """A data file could not be parsed.

    Carries the 1-based line number when the format is line-oriented.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateQueryIdError(InputError):
    """The same query id appears more than once."""


class DuplicateIdError(InputError):
    """The same document id appears more than once."""


class NegativeRelevanceError(InputError):
    """A relevance judgment is negative."""


class KMismatchError(InputError):
    """Evaluation reports computed at different cutoffs were combined."""


class FormatError(InputError):
    """Binary container has a bad magic, version, or inconsistent layout."""


class ChecksumError(InputError):
    """Binary container checksum does not match its payload."""
