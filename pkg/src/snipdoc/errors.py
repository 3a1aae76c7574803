"""Exception types raised across the snipdoc package.

Grouped here so the CLI can map error families onto exit codes in one
place. Parse-level problems that should not abort a run (malformed JSONL
lines, unparseable model answers) are modelled as diagnostic values, not
exceptions; see ``corpus.MalformedLine`` and ``taxonomy.FormatViolation``.
"""

from __future__ import annotations


class SnipdocError(Exception):
    """Base class for all snipdoc errors."""


# --- corpus -----------------------------------------------------------------

class DuplicateSnippetIdError(SnipdocError):
    """Two corpus records share a snippet_id."""

    def __init__(self, snippet_id: str, line_number: int | None = None):
        self.snippet_id = snippet_id
        self.line_number = line_number
        where = f" (line {line_number})" if line_number is not None else ""
        super().__init__(f"duplicate snippet_id {snippet_id!r}{where}")


class OverrideExceedsPopulationError(SnipdocError):
    """A sample-size override is larger than the corpus being sampled."""


# --- prompting --------------------------------------------------------------

class MissingDescriptionError(SnipdocError):
    """A classification prompt was requested for a record with no description."""


class TruncationRefusedError(SnipdocError):
    """Rendered prompt exceeds the character budget; we refuse to truncate."""


# --- gateway ----------------------------------------------------------------

class BackendError(SnipdocError):
    """Base class for text-generation backend failures."""


class BackendUnreachableError(BackendError):
    """Transport to the backend failed on every attempt."""


class BackendTimeoutError(BackendError):
    """The backend timed out on every attempt."""


class EmptyResponseError(BackendError):
    """The backend kept returning empty text after all retries."""


class BackendCircuitOpenError(BackendError):
    """Too many unreachable-backend failures early in a run; aborting."""


# --- similarity -------------------------------------------------------------

class DimensionMismatchError(SnipdocError):
    """Vectors of unequal dimension where a uniform dimension is required."""


class ZeroVectorError(SnipdocError):
    """A zero vector where a direction is required (cosine, embeddings)."""


class EmptySideError(SnipdocError):
    """A similarity comparison was attempted with an empty token set."""


class EmptyInputError(SnipdocError):
    """An aggregate (distribution, histogram) was requested for no data."""


# --- agreement --------------------------------------------------------------

class LengthMismatchError(SnipdocError):
    """Two rater label sequences have different lengths."""


class DegenerateAgreementError(SnipdocError):
    """Chance agreement is 1 (both raters constant on one category).

    Cohen's kappa is undefined here; callers should report the condition
    rather than propagate a NaN.
    """
