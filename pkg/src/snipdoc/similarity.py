"""Greedy token-matching similarity between two texts.

Each token of one text is matched to its most similar token of the other
by embedding cosine; per-side means give recall (reference side) and
precision (candidate side), combined into F1. This is the plain greedy
metric: no idf weighting and no baseline rescaling, so scores are exactly
reproducible for any deterministic embedding backend.

The tokenizer here is deliberately the module's own word-level splitter
rather than any embedding model's subword scheme, so the metric is
well-defined no matter which backend supplies vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
import re

import numpy as np

from .errors import DimensionMismatchError, EmptyInputError, EmptySideError, ZeroVectorError

#: Histogram bucket width used by :func:`score_distribution`.
BUCKET_WIDTH = 0.05
N_BUCKETS = 20

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase and split on whitespace/punctuation; punctuation is dropped.

    Deterministic; may return an empty list.
    """
    return _TOKEN_RE.findall(text.lower())


def cosine(u, v) -> float:
    """Cosine similarity of two equal-dimension non-zero vectors.

    Clamped to [-1, 1] against floating-point drift.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise DimensionMismatchError(f"cosine of shapes {u.shape} and {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ZeroVectorError("cosine is undefined for a zero vector")
    return float(np.clip(float(np.dot(u, v)) / (nu * nv), -1.0, 1.0))


@dataclass(frozen=True)
class SimilarityScore:
    """Precision/recall/F1 triple from greedy embedding matching."""

    precision: float
    recall: float
    f1: float

    @classmethod
    def from_pr(cls, precision: float, recall: float) -> "SimilarityScore":
        denom = precision + recall
        f1 = 2.0 * precision * recall / denom if denom != 0.0 else 0.0
        return cls(precision=precision, recall=recall, f1=f1)


class TokenEmbeddingSet:
    """Tokens of one text plus one embedding vector per token.

    Rejects empty inputs, ragged dimensions, and zero vectors at
    construction so the scorer can assume a clean (n, d) matrix.
    """

    __slots__ = ("tokens", "vectors")

    def __init__(self, tokens: list[str], vectors) -> None:
        if len(tokens) == 0:
            raise EmptySideError("a token embedding set needs at least one token")
        try:
            matrix = np.asarray(vectors, dtype=np.float64)
        except ValueError as exc:
            raise DimensionMismatchError(f"ragged embedding vectors: {exc}") from exc
        if matrix.ndim != 2:
            raise DimensionMismatchError("embedding vectors have inconsistent dimensions")
        if matrix.shape[0] != len(tokens):
            raise DimensionMismatchError(
                f"{len(tokens)} tokens but {matrix.shape[0]} vectors"
            )
        norms = np.linalg.norm(matrix, axis=1)
        if np.any(norms == 0.0):
            raise ZeroVectorError("zero embedding vector rejected")
        self.tokens = list(tokens)
        self.vectors = matrix

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def dimension(self) -> int:
        return int(self.vectors.shape[1])


def bertscore(candidate: TokenEmbeddingSet, reference: TokenEmbeddingSet) -> SimilarityScore:
    """Greedy-matching similarity between candidate and reference tokens.

    recall    = mean over reference tokens of the max cosine against all
                candidate tokens;
    precision = mean over candidate tokens of the max cosine against all
                reference tokens;
    f1        = harmonic mean (0 when precision + recall == 0).
    """
    if len(candidate) == 0 or len(reference) == 0:
        raise EmptySideError("both sides must be non-empty")
    if candidate.dimension != reference.dimension:
        raise DimensionMismatchError(
            f"candidate dim {candidate.dimension} != reference dim {reference.dimension}"
        )
    cand = candidate.vectors / np.linalg.norm(candidate.vectors, axis=1, keepdims=True)
    ref = reference.vectors / np.linalg.norm(reference.vectors, axis=1, keepdims=True)
    sims = np.clip(cand @ ref.T, -1.0, 1.0)  # (n_candidate, n_reference)
    precision = float(sims.max(axis=1).mean())
    recall = float(sims.max(axis=0).mean())
    return SimilarityScore.from_pr(precision, recall)


@dataclass(frozen=True)
class ScoreDistribution:
    """Summary statistics over a batch of similarity scores (F1 component).

    ``histogram`` holds 20 buckets of width 0.05 over [0, 1]; buckets are
    half-open [lo, lo + 0.05) except the final one, which is closed at 1.
    Scores outside [0, 1] (possible with signed-cosine backends) are
    clamped into the edge buckets and counted in ``n_negative``.
    """

    mean: float
    min: float
    max: float
    count: int
    histogram: tuple[int, ...]
    n_negative: int


def _bucket_of(value: float) -> int:
    if value <= 0.0:
        return 0
    # multiply-then-floor keeps decimal bucket edges (0.05, 0.10, ...) exact
    return min(int(value * N_BUCKETS), N_BUCKETS - 1)


def score_distribution(scores: list[SimilarityScore]) -> ScoreDistribution:
    """Aggregate F1 scores into mean/min/max and the fixed-width histogram."""
    if not scores:
        raise EmptyInputError("no scores to aggregate")
    values = [s.f1 for s in scores]
    buckets = [0] * N_BUCKETS
    negative = 0
    for v in values:
        if v < 0.0:
            negative += 1
        buckets[_bucket_of(v)] += 1
    return ScoreDistribution(
        mean=sum(values) / len(values),
        min=min(values),
        max=max(values),
        count=len(values),
        histogram=tuple(buckets),
        n_negative=negative,
    )


def bucket_label(index: int) -> str:
    """Human-readable interval label for histogram bucket ``index``."""
    lo = index * BUCKET_WIDTH
    hi = lo + BUCKET_WIDTH
    closer = "]" if index == N_BUCKETS - 1 else ")"
    return f"[{lo:.2f}, {hi:.2f}{closer}"
