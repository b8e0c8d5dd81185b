import math

import numpy as np
import pytest
from hypothesis import example, given
from hypothesis import strategies as st

from nln.encoding import (FuzzyDichotomy, dichotomy_eval, encode, init_dichotomies_regular, one_hot_encode,
                          regular_interval_weights, sigmoid)
from nln.errors import DataError, SchemaError
from nln.schema import Feature, Schema, Target

import oracles

COLOR = Feature("color", "categorical", ("r", "g", "b"), allows_missing=True)


def test_one_hot_examples():
    np.testing.assert_array_equal(one_hot_encode(COLOR, "g")[0], [0, 1, 0])
    np.testing.assert_array_equal(one_hot_encode(COLOR, "r")[0], [1, 0, 0])
    vec, missing = one_hot_encode(COLOR, "?")
    np.testing.assert_array_equal(vec, [0, 0, 0])
    assert missing


def test_one_hot_errors():
    with pytest.raises(SchemaError):
        one_hot_encode(COLOR, "purple")
    with pytest.raises(DataError):
        one_hot_encode(Feature("c", "categorical", ("a",)), "?")


def test_dichotomy_examples():
    assert dichotomy_eval(FuzzyDichotomy(3.0, 5.0), 3.0) == 0.5
    assert dichotomy_eval(FuzzyDichotomy(0.0, 1e4), 1.0) == pytest.approx(1.0)
    assert dichotomy_eval(FuzzyDichotomy(1.0, 2.0), 2.0) == pytest.approx(oracles.sigmoid(2.0), abs=1e-15)
    assert dichotomy_eval(FuzzyDichotomy(1.0, 2.0), 2.0) == pytest.approx(0.880797, abs=1e-6)
    with pytest.raises(ValueError):
        FuzzyDichotomy(0.0, 0.0)


def test_sigmoid_extremes_are_finite():
    out = sigmoid(np.array([-1e4, 0.0, 1e4]))
    np.testing.assert_array_equal(out, [0.0, 0.5, 1.0])


@pytest.mark.xfail(strict=True, reason="conflicts with the midpoint layout for one dichotomy; see the ledger")
def test_regular_boundaries_unit_spacing():
    enc = init_dichotomies_regular((0.0, 32.0), 32)
    np.testing.assert_allclose(enc.boundaries, np.arange(1, 33))


def test_regular_boundaries_even_split():
    enc = init_dichotomies_regular((0.0, 33.0), 32)
    np.testing.assert_allclose(enc.boundaries, np.arange(1, 33), atol=1e-12)
    assert enc.n_intervals == 33
    assert np.all(np.diff(enc.boundaries) > 0)


def test_single_dichotomy_at_midpoint():
    enc = init_dichotomies_regular((2.0, 10.0), 1)
    np.testing.assert_allclose(enc.boundaries, [6.0])


def test_interval_centres_are_one_hot_like():
    enc = init_dichotomies_regular((0.0, 32.0), 32)
    spacing = 32.0 / 33
    centres = np.concatenate([[spacing / 2], enc.boundaries + spacing / 2])
    act = enc.forward(centres)
    for i in range(33):
        assert act[i, i] > 0.9
        assert np.all(np.delete(act[i], i) < 0.1)


@given(st.floats(-5.0, 40.0), st.integers(1, 40))
def test_one_interval_above_half(x, count):
    lo, hi = 0.0, 35.0
    enc = init_dichotomies_regular((lo, hi), count)
    if lo <= x <= hi:
        assert np.sum(enc.forward(np.array([x]))[0] > 0.5) <= 1
        # away from boundaries exactly one interval dominates
        if np.min(np.abs(enc.boundaries - x)) > 0.25 * (hi - lo) / (count + 1):
            assert np.sum(enc.forward(np.array([x]))[0] > 0.5) == 1


@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(0.01, 20), st.floats(-5, 5))
@example(-45.0, 0.0, 16.0, 0.0)  # deep negative tail
def test_dichotomy_monotone(x1, x2, alpha, b):
    lo, hi = min(x1, x2), max(x1, x2)
    d = FuzzyDichotomy(b, alpha)
    assert dichotomy_eval(d, lo) <= dichotomy_eval(d, hi)
    assert dichotomy_eval(d, x1) == pytest.approx(oracles.sigmoid(alpha * (x1 - b)), abs=1e-12)


def test_interval_layout_pairs_neighbours():
    w = regular_interval_weights(3)
    np.testing.assert_array_equal(w, [[-1, 0, 0], [1, -1, 0], [0, 1, -1], [0, 0, 1]])


def test_encode_batch_layout():
    schema = Schema((Feature("b", "binary"), COLOR, Feature("x", "continuous", lo=0, hi=1, allows_missing=True)),
                    (Target("t", "binary", ("1",)),))
    values = np.array([[1, 2, 0.5], [0, np.nan, np.nan]])
    enc = encode(schema, values)
    np.testing.assert_array_equal(enc.binary, [[1], [0]])
    np.testing.assert_array_equal(enc.cat_onehot[0], [[0, 0, 1], [0, 0, 0]])
    np.testing.assert_array_equal(enc.cat_missing[0], [0, 1])
    np.testing.assert_array_equal(enc.con_missing[0], [0, 1])
    # one-hot rows sum to one unless missing
    assert list(enc.cat_onehot[0].sum(axis=1)) == [1, 0]


def test_missing_continuous_rows_have_no_interval_signal():
    enc = init_dichotomies_regular((0.0, 1.0), 4)
    out = enc.forward(np.array([np.nan, 0.5]))
    assert np.all(out[0] == 0.0)
    assert math.isclose(out[1].max(), out[1].max())
