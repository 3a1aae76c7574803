from __future__ import annotations

import math
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from snipdoc.errors import (
    DimensionMismatchError,
    EmptyInputError,
    EmptySideError,
    ZeroVectorError,
)
from snipdoc.similarity import (
    ScoreDistribution,
    SimilarityScore,
    TokenEmbeddingSet,
    bertscore,
    bucket_label,
    cosine,
    score_distribution,
    tokenize,
)


# --- independent oracle --------------------------------------------------------
# Pure-python exhaustive per-pair max matching, no shared code with the
# implementation under test.


def _cosine_plain(u, v):
    dot = sum(a * b for a, b in zip(u, v))
    nu = math.sqrt(sum(a * a for a in u))
    nv = math.sqrt(sum(b * b for b in v))
    return max(-1.0, min(1.0, dot / (nu * nv)))


def bertscore_bruteforce(cand_vecs, ref_vecs):
    best_for_cand = [max(_cosine_plain(c, r) for r in ref_vecs) for c in cand_vecs]
    best_for_ref = [max(_cosine_plain(c, r) for c in cand_vecs) for r in ref_vecs]
    precision = sum(best_for_cand) / len(best_for_cand)
    recall = sum(best_for_ref) / len(best_for_ref)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def _random_instance(rng, max_tokens=8, dim=6):
    n_cand = rng.randint(1, max_tokens)
    n_ref = rng.randint(1, max_tokens)
    make = lambda n: [[rng.uniform(-1, 1) for _ in range(dim)] for _ in range(n)]
    cand = make(n_cand)
    ref = make(n_ref)
    return (
        TokenEmbeddingSet([f"c{i}" for i in range(n_cand)], cand),
        TokenEmbeddingSet([f"r{i}" for i in range(n_ref)], ref),
        cand,
        ref,
    )


# --- tokenize -------------------------------------------------------------------


def test_tokenize_drops_punctuation_and_lowercases():
    assert tokenize("Loading and using Audio.") == ["loading", "and", "using", "audio"]
    assert tokenize("") == []
    assert tokenize("createNode factory function") == ["createnode", "factory", "function"]


def test_tokenize_splits_on_punctuation_boundaries():
    assert tokenize("hex-to-rgb, v1.2!") == ["hex", "to", "rgb", "v1", "2"]
    assert tokenize("snake_case") == ["snake", "case"]


@given(st.text(max_size=200))
def test_tokenize_deterministic_and_lowercase(text):
    tokens = tokenize(text)
    assert tokens == tokenize(text)
    for token in tokens:
        assert token == token.lower()
        assert token


# --- cosine ---------------------------------------------------------------------


def test_cosine_identity_orthogonal_and_diagonal():
    e1, e2 = [1.0, 0.0], [0.0, 1.0]
    assert cosine(e1, e1) == 1.0
    assert cosine(e1, e2) == 0.0
    assert cosine([1.0, 1.0], [1.0, 0.0]) == pytest.approx(1 / math.sqrt(2), abs=1e-9)


def test_cosine_errors():
    with pytest.raises(DimensionMismatchError):
        cosine([1.0, 0.0], [1.0, 0.0, 0.0])
    with pytest.raises(ZeroVectorError):
        cosine([0.0, 0.0], [1.0, 0.0])


@given(
    st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3),
    st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3),
)
def test_cosine_always_in_range(u, v):
    try:
        value = cosine(u, v)
    except ZeroVectorError:  # zero or denormal-underflow norms
        return
    assert -1.0 <= value <= 1.0


# --- token embedding sets ----------------------------------------------------------


def test_embedding_set_rejects_bad_shapes():
    with pytest.raises(EmptySideError):
        TokenEmbeddingSet([], [])
    with pytest.raises(DimensionMismatchError):
        TokenEmbeddingSet(["a", "b"], [[1.0, 0.0], [1.0]])
    with pytest.raises(DimensionMismatchError):
        TokenEmbeddingSet(["a", "b"], [[1.0, 0.0]])
    with pytest.raises(ZeroVectorError):
        TokenEmbeddingSet(["a"], [[0.0, 0.0]])


# --- bertscore ---------------------------------------------------------------------


def test_identity_scores_one():
    vectors = [[0.2, 0.5], [0.9, 0.1], [0.4, 0.4]]
    s = TokenEmbeddingSet(["a", "b", "c"], vectors)
    score = bertscore(s, s)
    assert score.precision == pytest.approx(1.0, abs=1e-9)
    assert score.recall == pytest.approx(1.0, abs=1e-9)
    assert score.f1 == pytest.approx(1.0, abs=1e-9)


def test_orthogonal_vocabularies_score_zero():
    cand = TokenEmbeddingSet(["a", "b"], [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])
    ref = TokenEmbeddingSet(["c", "d"], [[0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]])
    score = bertscore(cand, ref)
    assert score == SimilarityScore(0.0, 0.0, 0.0)


def test_three_vs_four_tokens_matches_bruteforce_exactly():
    cand_vecs = [[1.0, 0.0], [0.6, 0.8], [0.0, 1.0]]
    ref_vecs = [[0.8, 0.6], [1.0, 1.0], [0.0, 0.5], [-0.3, 0.4]]
    cand = TokenEmbeddingSet(["a", "b", "c"], cand_vecs)
    ref = TokenEmbeddingSet(["w", "x", "y", "z"], ref_vecs)
    score = bertscore(cand, ref)
    p, r, f1 = bertscore_bruteforce(cand_vecs, ref_vecs)
    assert score.precision == pytest.approx(p, abs=1e-12)
    assert score.recall == pytest.approx(r, abs=1e-12)
    assert score.f1 == pytest.approx(f1, abs=1e-12)


def test_bruteforce_agreement_on_random_instances():
    rng = random.Random(1234)
    for _ in range(200):
        cand, ref, cand_vecs, ref_vecs = _random_instance(rng)
        score = bertscore(cand, ref)
        p, r, f1 = bertscore_bruteforce(cand_vecs, ref_vecs)
        assert score.precision == pytest.approx(p, abs=1e-12)
        assert score.recall == pytest.approx(r, abs=1e-12)
        assert score.f1 == pytest.approx(f1, abs=1e-12)


def test_swap_symmetry_and_permutation_invariance():
    rng = random.Random(99)
    for _ in range(200):
        cand, ref, cand_vecs, ref_vecs = _random_instance(rng)
        forward = bertscore(cand, ref)
        backward = bertscore(ref, cand)
        assert forward.precision == pytest.approx(backward.recall, abs=1e-12)
        assert forward.recall == pytest.approx(backward.precision, abs=1e-12)

        perm_c = rng.sample(range(len(cand_vecs)), len(cand_vecs))
        perm_r = rng.sample(range(len(ref_vecs)), len(ref_vecs))
        shuffled = bertscore(
            TokenEmbeddingSet([f"c{i}" for i in perm_c], [cand_vecs[i] for i in perm_c]),
            TokenEmbeddingSet([f"r{i}" for i in perm_r], [ref_vecs[i] for i in perm_r]),
        )
        assert shuffled.precision == pytest.approx(forward.precision, abs=1e-12)
        assert shuffled.recall == pytest.approx(forward.recall, abs=1e-12)


def test_appending_a_reference_token_to_candidate_never_lowers_recall():
    rng = random.Random(7)
    for _ in range(100):
        cand, ref, cand_vecs, ref_vecs = _random_instance(rng)
        base = bertscore(cand, ref)
        pick = rng.randrange(len(ref_vecs))
        grown = TokenEmbeddingSet(
            cand.tokens + [f"extra{pick}"], cand_vecs + [ref_vecs[pick]]
        )
        assert bertscore(grown, ref).recall >= base.recall - 1e-12


def test_nonnegative_cosines_keep_scores_in_unit_interval():
    rng = random.Random(5)
    for _ in range(100):
        make = lambda n: [[rng.uniform(0.01, 1) for _ in range(4)] for _ in range(n)]
        cand_vecs, ref_vecs = make(rng.randint(1, 6)), make(rng.randint(1, 6))
        score = bertscore(
            TokenEmbeddingSet([f"c{i}" for i in range(len(cand_vecs))], cand_vecs),
            TokenEmbeddingSet([f"r{i}" for i in range(len(ref_vecs))], ref_vecs),
        )
        for value in (score.precision, score.recall, score.f1):
            assert 0.0 <= value <= 1.0


def test_dimension_mismatch_between_sides():
    cand = TokenEmbeddingSet(["a"], [[1.0, 0.0]])
    ref = TokenEmbeddingSet(["b"], [[1.0, 0.0, 0.0]])
    with pytest.raises(DimensionMismatchError):
        bertscore(cand, ref)


def test_f1_zero_when_precision_plus_recall_zero():
    assert SimilarityScore.from_pr(0.0, 0.0).f1 == 0.0


# --- score distribution ----------------------------------------------------------


def _scores(values):
    return [SimilarityScore(v, v, v) for v in values]


def test_distribution_of_synthetic_mean():
    dist = score_distribution(_scores([0.6173] * 200 + [0.8173] * 200))
    assert round(dist.mean, 4) == 0.7173
    assert dist.count == 400


def test_single_perfect_score():
    dist = score_distribution(_scores([1.0]))
    assert dist.mean == 1.0
    assert dist.min == dist.max == 1.0
    assert sum(dist.histogram) == 1
    assert dist.histogram[19] == 1


def test_end_buckets():
    dist = score_distribution(_scores([0.0, 1.0]))
    assert dist.mean == 0.5
    assert dist.histogram[0] == 1
    assert dist.histogram[19] == 1
    assert sum(dist.histogram) == 2


def test_bucket_edges_are_half_open():
    dist = score_distribution(_scores([0.05, 0.0499999, 0.1, 0.15, 0.95]))
    assert dist.histogram[0] == 1  # 0.0499999
    assert dist.histogram[1] == 1  # 0.05
    assert dist.histogram[2] == 1  # 0.10
    assert dist.histogram[3] == 1  # 0.15
    assert dist.histogram[19] == 1  # 0.95 in the closed final bucket


def test_negative_scores_counted():
    dist = score_distribution(_scores([-0.2, 0.5]))
    assert dist.n_negative == 1
    assert dist.histogram[0] == 1


def test_empty_distribution_rejected():
    with pytest.raises(EmptyInputError):
        score_distribution([])


def test_bucket_labels():
    assert bucket_label(0) == "[0.00, 0.05)"
    assert bucket_label(19) == "[0.95, 1.00]"
