import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kitinet.condense import (
    CondensationMatrix,
    condensation_score,
    cosine_matrix,
    export_heatmap,
    parse_heatmap,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_cosine_examples():
    assert cosine_matrix([[1, 2], [2, 4]]).values[0, 1] == pytest.approx(1.0, abs=1e-15)
    assert cosine_matrix([[1, 0], [0, 1]]).values[0, 1] == 0.0
    assert cosine_matrix([[1, 0], [1, 1]]).values[0, 1] == pytest.approx(1 / math.sqrt(2), abs=1e-15)
    assert cosine_matrix([[1, 0], [1, 1]]).values[0, 1] == pytest.approx(0.70711, abs=1e-5)


def test_zero_rows():
    D = cosine_matrix([[0.0, 0.0], [1.0, 2.0]]).values
    assert D[0, 0] == 0 and D[0, 1] == 0 and D[1, 1] == 1


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (6, 4), elements=finite))
def test_matrix_invariants(W):
    D = cosine_matrix(W).values
    np.testing.assert_array_equal(D, D.T)
    assert np.all(np.abs(D) <= 1 + 1e-12)
    live = np.linalg.norm(W, axis=1) >= 1e-12
    assert np.all(np.diag(D)[live] == 1.0)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (5, 3), elements=st.floats(-10, 10)), st.floats(1e-3, 1e3))
def test_scale_invariance(W, c):
    W = W + 0.5  # keep rows away from the zero-norm cutoff
    np.testing.assert_allclose(cosine_matrix(c * W).values, cosine_matrix(W).values, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (6, 3), elements=finite), st.permutations(range(6)))
def test_permutation_equivariance(W, perm):
    perm = np.array(perm)
    D = cosine_matrix(W).values
    Dp = cosine_matrix(W[perm]).values
    np.testing.assert_allclose(Dp, D[np.ix_(perm, perm)], atol=1e-15)


def test_score_examples():
    assert condensation_score(cosine_matrix(np.ones((4, 3)))) == 1.0
    assert condensation_score(cosine_matrix(np.eye(4))) == 0.0
    three = cosine_matrix([[1, 0], [2, 0], [0, 1]])
    assert condensation_score(three) == pytest.approx(1 / 3)


def test_score_counts_antiparallel():
    assert condensation_score(cosine_matrix([[1, 1], [-1, -1]])) == 1.0


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (7, 3), elements=finite), st.floats(0.01, 0.98), st.floats(0.01, 0.98))
def test_score_monotone_in_threshold(W, t1, t2):
    lo, hi = min(t1, t2), max(t1, t2)
    M = cosine_matrix(W)
    assert condensation_score(M, hi) <= condensation_score(M, lo)


def test_score_threshold_range():
    with pytest.raises(ValueError):
        condensation_score(cosine_matrix(np.eye(2)), 1.0)


def test_heatmap_format():
    text = export_heatmap(CondensationMatrix(np.eye(2), layer_index=1, epoch=10))
    assert text == "# layer=1 epoch=10 m=2\n1,0\n0,1\n"


def test_heatmap_roundtrip_bit_exact():
    rng = np.random.default_rng(0)
    M = cosine_matrix(rng.normal(size=(9, 5)), layer_index=2, epoch=50)
    back = parse_heatmap(export_heatmap(M))
    assert np.array_equal(back.values, M.values)
    assert back.epoch == 50 and back.layer_index == 2
