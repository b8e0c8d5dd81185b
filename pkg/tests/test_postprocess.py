import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nln.data import Dataset
from nln.datasets import tictactoe
from nln.errors import DimensionError
from nln.metrics import f1_and_accuracy
from nln.model import build_model, predict
from nln.postprocess import (STRATEGIES, IncrementalEvaluator, adjust_biases, concatenate_models, discretize,
                             eliminate_included_rules, find_minimal_subset, inclusion, inclusion_score,
                             merge_models, postprocess, prune, retrain_continuous)
from nln.schema import Feature, Schema, Target
from nln.training import TrainConfig

import oracles
from fixtures import ttt_truth_model

BIN2 = Schema((Feature("f", "binary"), Feature("g", "binary")), (Target("t", "binary", ("1",)),))
ROWS2 = np.array(list(itertools.product((0.0, 1.0), repeat=2)))


def _toy(weights, target_fn, out_w=1.0):
    model = build_model(BIN2, n_rules=1)
    model.and_w[:] = [weights]
    model.out_w[:] = out_w
    y = np.array([[target_fn(*r)] for r in ROWS2], dtype=float)
    return model, Dataset(BIN2, ROWS2, y)


def _sse(and_w, out_w, ds):
    """Squared error of a one-rule network, computed from the scalar formulas."""
    total = 0.0
    for row, y in zip(ds.values, ds.y[:, 0]):
        h = oracles.p_and(and_w, 1.0, row)
        total += (y - oracles.p_or([out_w], 0.0, [h])) ** 2
    return total


BIN1 = Schema((Feature("f", "binary"),), (Target("t", "binary", ("1",)),))


def _sse1(and_w, out_w, y):
    """Squared error of the one-feature, one-rule network from the scalar formulas."""
    return sum((t - oracles.p_or([out_w], 0.0, [oracles.p_and([and_w], 1.0, [x])])) ** 2 for x, t in zip((0.0, 1.0), y))


# the network has two logical weights: the rule's AND weight and its output weight
@settings(max_examples=300)
@given(st.floats(-1, 1).filter(lambda v: abs(v) > 1e-3), st.floats(0.01, 1.0),
       st.sampled_from(list(itertools.product((0.0, 1.0), repeat=2))))
def test_descending_matches_brute_force_grid(w, o, y):
    model = build_model(BIN1, n_rules=1)
    model.and_w[:] = w
    model.out_w[:] = o
    ds = Dataset(BIN1, [[0.0], [1.0]], np.array(y)[:, None])
    discretize(model, ds, "descending_selection")
    grid = {(a, b): _sse1(a, b, y) for a in (0.0, float(np.sign(w))) for b in (0.0, 1.0)}
    best = min(grid.values())
    assert _sse1(model.and_w[0, 0], model.out_w[0, 0], y) == pytest.approx(best, abs=1e-12)


@settings(max_examples=100)
@given(st.floats(-1, 1).filter(lambda v: abs(v) > 1e-3), st.floats(-1, 1).filter(lambda v: abs(v) > 1e-3),
       st.floats(0.05, 1.0), st.lists(st.booleans(), min_size=4, max_size=4))
def test_each_commit_is_optimal_given_earlier_commits(w1, w2, ow, ys):
    model, ds = _toy([w1, w2], lambda f, g: 0.0, out_w=ow)
    ds = Dataset(BIN2, ROWS2, np.array(ys, dtype=float)[:, None])
    discretize(model, ds, "descending_selection")
    # replay the greedy order with the scalar oracle: output weight, then AND weights by |w|
    cur_and, cur_out = [w1, w2], ow
    cur_out = 0.0 if _sse(cur_and, 0.0, ds) <= _sse(cur_and, 1.0, ds) else 1.0
    assert model.out_w[0, 0] == cur_out
    for j in sorted(range(2), key=lambda j: -abs(cur_and[j])):
        zero, sign = list(cur_and), list(cur_and)
        zero[j], sign[j] = 0.0, float(np.sign(cur_and[j]))
        cur_and = zero if _sse(zero, cur_out, ds) <= _sse(sign, cur_out, ds) + 1e-12 else sign
    np.testing.assert_array_equal(model.and_w[0], cur_and)


def test_zero_weight_is_skipped():
    model, ds = _toy([0.0, 0.9], lambda f, g: float(g))
    discretize(model, ds)
    assert model.and_w[0].tolist() == [0.0, 1.0]


@pytest.mark.parametrize("strategy", STRATEGIES)
def test_every_strategy_gives_integral_weights(strategy):
    ds = tictactoe().subset(np.arange(0, 958, 3))
    model = build_model(ds.schema, n_rules=6, seed=1)
    discretize(model, ds, strategy)
    assert model.is_discretized()
    assert f"discretize:{strategy}" in model.meta["stages"]
    with pytest.raises(ValueError):
        discretize(model, ds, "random")


def test_subtractive_and_additive_only_improve():
    ds = tictactoe().subset(np.arange(0, 958, 3))
    base = build_model(ds.schema, n_rules=6, seed=2)
    snapped = base.copy()
    for _, arr, _ in snapped.logical_arrays():
        arr[:] = np.sign(arr)
    zeroed = base.copy()
    for _, arr, _ in zeroed.logical_arrays():
        arr[:] = 0.0
    sub, add = base.copy(), base.copy()
    discretize(sub, ds, "subtractive")
    discretize(add, ds, "additive")
    assert IncrementalEvaluator(sub, ds).sse <= IncrementalEvaluator(snapped, ds).sse
    assert IncrementalEvaluator(add, ds).sse <= IncrementalEvaluator(zeroed, ds).sse


def test_incremental_evaluator_matches_full_forward():
    ds = tictactoe().subset(np.arange(0, 958, 5))
    model = build_model(ds.schema, n_rules=5, seed=3)
    ev = IncrementalEvaluator(model, ds)
    assert ev.sse == pytest.approx(float(np.sum((ds.y - model.predict_proba(ds.values)) ** 2)), rel=1e-12)


def _step_problem():
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 1, 200)
    schema = Schema((Feature("x", "continuous", lo=0.0, hi=1.0),), (Target("t", "binary", ("1",)),))
    ds = Dataset(schema, x[:, None], (x > 0.5).astype(float)[:, None])
    model = build_model(schema, n_rules=1, n_dichotomies=2)
    model.and_w[:] = 1.0
    model.out_w[:] = 1.0
    model.con_w[0][:] = [[0.0, 0.0, 1.0]]  # the top interval, x above the upper boundary
    return model, ds


def test_retrain_moves_boundary_and_freezes_logic():
    model, ds = _step_problem()
    before = model.encoders[0].boundaries[1]
    logic = [arr.copy() for _, arr, _ in model.logical_arrays()]
    retrain_continuous(model, ds, TrainConfig(learning_rate=0.01), epochs=100)
    assert abs(model.encoders[0].boundaries[1] - 0.5) < abs(before - 0.5)
    for (_, arr, _), old in zip(model.logical_arrays(), logic):
        np.testing.assert_array_equal(arr, old)


def test_retrain_without_continuous_features_keeps_optimal_biases():
    model, ds = _toy([1.0, -1.0], lambda f, g: float(f == 1 and g == 0))
    retrain_continuous(model, ds, epochs=20)
    assert model.and_b[0] == 1.0 and model.out_b[0] == 0.0
    np.testing.assert_array_equal(model.and_w, [[1.0, -1.0]])


def test_prune_drops_duplicate_rule():
    schema = Schema((Feature("f", "binary"),), (Target("t", "binary", ("1",)),))
    ds = Dataset(schema, [[0.0], [1.0]], [[0.0], [1.0]])
    model = build_model(schema, n_rules=2)
    model.and_w[:] = 1.0
    model.out_w[:] = 1.0
    sse = IncrementalEvaluator(model, ds).sse
    model = prune(model, ds)
    assert model.n_rules == 1 and model.out_w[0, 0] == 1.0 and model.and_w[0, 0] == 1.0
    assert IncrementalEvaluator(model, ds).sse == sse


def test_prune_is_idempotent():
    ds = tictactoe().subset(np.arange(0, 958, 3))
    model = build_model(ds.schema, n_rules=8, seed=5)
    discretize(model, ds)
    once = prune(model, ds)
    snap = {k: a.copy() for k, a in once.params().items()}
    twice = prune(once, ds)
    assert twice.params().keys() == snap.keys()
    for k, a in twice.params().items():
        np.testing.assert_array_equal(a, snap[k])


def _coverage_problem():
    # one rule "f" firing on four rows, three of them positive
    schema = Schema((Feature("f", "binary"), Feature("g", "binary")), (Target("t", "binary", ("1",)),))
    x = np.array([[1, 0], [1, 1], [1, 0], [1, 1], [0, 1], [0, 0]], dtype=float)
    y = np.array([[1], [1], [1], [0], [1], [0]], dtype=float)
    model = build_model(schema, n_rules=1)
    model.and_w[:] = [[1.0, 0.0]]
    model.out_w[:] = 1.0
    return model, Dataset(schema, x, y)


def test_adjust_biases_precision_and_miss_share():
    model, ds = _coverage_problem()
    adjust_biases(model, ds)
    assert model.and_b[0] == 0.75
    # misses: rows with f = 0 have 1 - c = 1; rows with f = 1 have 1 - 0.75
    miss = np.array([0.25, 0.25, 0.25, 0.25, 1.0, 1.0])
    assert model.out_b[0] == pytest.approx(miss[ds.y[:, 0] > 0].sum() / miss.sum())


def test_adjust_biases_crisp_cases():
    model, ds = _toy([1.0, -1.0], lambda f, g: float(f == 1 and g == 0))
    model.and_b[:] = 0.3
    model.out_b[:] = 0.4
    adjust_biases(model, ds)
    assert model.and_b[0] == 1.0 and model.out_b[0] == 0.0


@settings(max_examples=30)
@given(st.integers(0, 10_000))
def test_adjusted_biases_stay_in_unit_interval(seed):
    ds = tictactoe().subset(np.arange(seed % 7, 958, 7))
    model = build_model(ds.schema, n_rules=4, seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        adjust_biases(model, ds)
    assert np.all((model.and_b >= 0) & (model.and_b <= 1))
    assert np.all((model.out_b >= 0) & (model.out_b <= 1))


def test_inclusion_examples():
    assert inclusion([1.0, 0.0], [0.25, 1.0]) == 0.5
    assert inclusion([0.3, 0.9, 0.2], [0.3, 0.9, 0.2]) == pytest.approx(1.0)
    assert inclusion([1, 0, 0], [1, 1, 0]) == 1.0
    with pytest.warns(UserWarning):
        assert inclusion([0, 0], [1, 1]) == 1.0


@given(st.lists(st.floats(0, 1), min_size=1, max_size=20), st.lists(st.floats(0, 1), min_size=20, max_size=20))
def test_inclusion_range_and_reflexivity(ci, cj):
    cj = cj[:len(ci)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert 0.0 <= inclusion(ci, cj) <= 1.0
        if sum(ci) > 0:
            assert inclusion(ci, ci) == pytest.approx(1.0, abs=1e-12)


def _two_rules(w_i, w_j, a_i, a_j):
    model = build_model(BIN2, n_rules=2)
    model.and_w[:] = [w_i, w_j]
    model.and_b[:] = [a_i, a_j]
    model.out_w[:] = 1.0
    return model, Dataset(BIN2, ROWS2, [[0], [1], [1], [1]])


@pytest.mark.parametrize("w_i, w_j, a_i, a_j, removed", [
    ([1, 0], [1, 0], 0.9, 0.9, []),
    ([1, 0], [1, 0], 0.8, 0.9, [0]),
    ([1, 1], [0, 1], 0.7, 0.9, [0]),   # f AND g lies inside g
    ([0, 1], [1, 1], 0.7, 0.9, []),    # g is not inside f AND g
])
def test_eliminate_included(w_i, w_j, a_i, a_j, removed):
    model, ds = _two_rules(w_i, w_j, a_i, a_j)
    assert eliminate_included_rules(model, ds) == removed
    assert model.n_rules == 2 - len(removed)


def test_inclusion_score_of_subset_rule():
    model, ds = _two_rules([1, 1], [0, 1], 0.7, 0.9)
    assert inclusion_score(model, 0, 1, ds) == 1.0
    assert inclusion_score(model, 1, 1, ds) == 1.0


def test_elimination_keeps_crisp_f1():
    model, ds = _two_rules([1, 1], [0, 1], 1.0, 1.0)
    model.and_b[0] = 0.999
    model.threshold = 0.5
    before = f1_and_accuracy(predict(model, model.predict_proba(ds.values)), ds.y, "binary")["f1"]
    eliminate_included_rules(model, ds)
    after = f1_and_accuracy(predict(model, model.predict_proba(ds.values)), ds.y, "binary")["f1"]
    assert model.n_rules == 1 and after == before


def _trained_ttt(seed=0):
    ds = tictactoe()
    model = build_model(ds.schema, n_rules=8, seed=seed)
    model, _ = postprocess(model, ds, config=TrainConfig(max_epochs=2), retrain_epochs=0)
    return model, ds


def _f1(model, ds):
    return f1_and_accuracy(predict(model, model.predict_proba(ds.values)), ds.y, model.task)["f1"]


def test_merge_with_itself_keeps_f1():
    ds = tictactoe()
    model = ttt_truth_model()
    merged = merge_models([model, model.copy()], ds)
    assert _f1(merged, ds) == _f1(model, ds) == 1.0
    assert merged.n_rules == 8


def test_concatenation_covers_union():
    ds = tictactoe()
    a, b = build_model(ds.schema, n_rules=3, seed=1), build_model(ds.schema, n_rules=4, seed=2)
    both = concatenate_models([a, b])
    assert both.n_rules == 7
    pa, pb, pab = (m.predict_proba(ds.values) for m in (a, b, both))
    assert np.all(pab >= np.maximum(pa, pb) - 1e-12)


def test_merge_schema_mismatch():
    a = build_model(tictactoe().schema, n_rules=2)
    with pytest.raises(DimensionError):
        concatenate_models([a, build_model(BIN2, n_rules=2)])


def test_full_subset_scores_like_model():
    model, ds = _trained_ttt()
    ranking = find_minimal_subset(model, ds, max_rules=model.n_rules)
    live = tuple(r for r in range(model.n_rules) if model.out_w[:, r].max() > 0)
    full = dict(ranking.subsets)[live]
    assert full == pytest.approx(_f1(model, ds))
    assert not ranking.approximate
    assert ranking.subsets[0][1] >= full


def test_subset_search_falls_back_to_beam():
    model, ds = _trained_ttt()
    ranking = find_minimal_subset(model, ds, max_rules=2, guard=1, beam_width=4)
    assert ranking.approximate
    assert all(len(s) <= 2 for s, _ in ranking.subsets)
