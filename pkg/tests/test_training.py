import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nln import training
from nln.datasets import tictactoe
from nln.errors import TrainingError
from nln.model import build_model, dumps
from nln.schema import Feature, Schema, Target
from nln.training import (Adam, TrainConfig, compute_loss, fit, initialize, regularizers, reset_dead_rules,
                          stratified_split, train_step, write_history)

from fixtures import gradient_errors, tiny_problem


def _one_feature_model():
    schema = Schema((Feature("f", "binary"),), (Target("t", "binary", ("1",)),))
    return build_model(schema, n_rules=1)


@pytest.mark.parametrize("w, expected", [(0.4, 0.36), (-0.4, 0.36), (1.2, 0.0)])
def test_nonempty_hinge(w, expected):
    model = _one_feature_model()
    model.and_w[:] = w  # 1.2 lies off the domain, the hinge alone is under test
    model.out_w[:] = 1.0
    ne, sp, _, _ = regularizers(model)
    assert ne == pytest.approx(expected, abs=1e-15)
    assert sp == pytest.approx(abs(w) + 1.0)


def test_two_weight_row_hinge():
    schema = Schema((Feature("f", "binary"), Feature("g", "binary")), (Target("t", "binary", ("1",)),))
    model = build_model(schema, n_rules=1)
    model.and_w[:] = [[0.5, 0.7]]
    model.out_w[:] = 1.0
    assert regularizers(model)[0] == 0.0


def test_perfect_fit_has_zero_l2_and_identity():
    model, ds = tiny_problem(1)
    enc = model.encode(ds.values)
    y = model.forward(enc)
    loss = compute_loss(model, enc, y, TrainConfig(lambda_nonempty=0.3, lambda_sparsity=0.02))
    assert loss.l2_term == 0.0
    assert loss.total == loss.l2_term + 0.3 * loss.nonempty_term + 0.02 * loss.sparsity_term


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lambda_nonempty=0)
    with pytest.raises(ValueError):
        TrainConfig(validation_fraction=1.0)


@pytest.mark.parametrize("seed", range(5))
def test_loss_gradient_matches_finite_differences(seed):
    model, ds = tiny_problem(seed)
    assert model.n_parameters() <= 30
    errors = gradient_errors(model, ds)
    worst = max(errors, key=lambda e: e[2])
    assert worst[2] < 1e-4, worst


def test_initialize_biases_and_determinism():
    ds = tictactoe()
    a = initialize(build_model(ds.schema, n_rules=8, seed=1), 5)
    b = initialize(build_model(ds.schema, n_rules=8, seed=2), 5)
    assert np.all(a.and_b == 1.0) and np.all(a.out_b == 0.0)
    assert np.all(np.abs(a.and_w) <= 1.0) and np.all(a.out_w >= 0.0)
    for x, y in zip(a.params().values(), b.params().values()):
        np.testing.assert_array_equal(x, y)


def test_zero_gradient_leaves_parameters():
    model, _ = tiny_problem(0)
    before = {k: v.copy() for k, v in model.params().items()}
    Adam().step(model.params(), {k: np.zeros_like(v) for k, v in model.params().items()})
    model.project()
    for k, v in model.params().items():
        np.testing.assert_array_equal(v, before[k])


def test_projection_holds_weight_at_one():
    model = _one_feature_model()
    model.and_w[:] = 1.0
    adam = Adam(lr=0.1)
    adam.step(model.params(), {"and.w": np.array([[-5.0]])})  # descent pushes upward
    model.project()
    assert model.and_w[0, 0] == 1.0


def test_adam_on_quadratic():
    w = {"w": np.array([3.0])}
    adam = Adam(lr=0.05)
    losses = []
    for _ in range(100):
        losses.append(float((w["w"][0] - 0.5) ** 2))
        adam.step(w, {"w": 2 * (w["w"] - 0.5)})
    assert losses[-1] < 1e-3 * losses[0]


@settings(max_examples=30)
@given(st.integers(0, 1000), st.floats(1e-3, 0.5))
def test_steps_stay_in_domain(seed, lr):
    model, ds = tiny_problem(seed)
    adam = Adam(lr)
    config = TrainConfig()
    enc = model.encode(ds.values)
    for _ in range(5):
        train_step(model, enc, ds.y, adam, config)
    for _, arr, dom, _ in model.param_specs():
        if dom == "signed":
            assert np.all((-1 <= arr) & (arr <= 1))
        elif dom == "unit":
            assert np.all((0 <= arr) & (arr <= 1))
        elif dom == "positive":
            assert np.all(arr > 0)


def test_non_finite_gradient_aborts(monkeypatch):
    model, ds = tiny_problem(0)
    real = training.loss_and_grad

    def poisoned(*args):
        loss, grads = real(*args)
        grads["and.b"][0] = np.nan
        return loss, grads

    monkeypatch.setattr(training, "loss_and_grad", poisoned)
    with pytest.raises(TrainingError, match="and.b"):
        train_step(model, model.encode(ds.values), ds.y, Adam(), TrainConfig())


def test_trainable_subset_freezes_others():
    model, ds = tiny_problem(2)
    before = {k: v.copy() for k, v in model.params().items()}
    config = TrainConfig(trainable=frozenset({"and.b", "out.b"}))
    train_step(model, model.encode(ds.values), ds.y, Adam(0.1), config)
    for k, v in model.params().items():
        if k not in config.trainable:
            np.testing.assert_array_equal(v, before[k])
    assert not np.array_equal(model.and_b, before["and.b"])


def test_reset_dead_rules_keeps_outputs():
    ds = tictactoe()
    model = build_model(ds.schema, n_rules=6, seed=4)
    model.and_b[1] = 0.0
    model.out_w[:, 3] = 0.0
    model.and_b[4], model.out_w[0, 4] = 1.0, 0.5
    before = model.predict_proba(ds.values)
    idx = reset_dead_rules(model, np.random.default_rng(0))
    assert list(idx) == [1, 3]
    assert model.and_b[1] == 1.0 and np.all(model.out_w[:, [1, 3]] == 0.0)
    np.testing.assert_array_equal(model.predict_proba(ds.values), before)
    model.out_w[:, [1, 3]] = 0.5
    snapshot = dumps(model)
    assert len(reset_dead_rules(model, np.random.default_rng(0))) == 0
    assert dumps(model) == snapshot


def test_zero_epochs_returns_initial_model():
    ds = tictactoe()
    model = build_model(ds.schema, n_rules=4)
    before = dumps(model)
    model, history = fit(model, ds, TrainConfig(max_epochs=0))
    assert history == [] and dumps(model) == before


def test_best_validation_epoch_is_restored():
    ds = tictactoe()
    config = TrainConfig(max_epochs=8, patience=100, seed=3, learning_rate=0.05)
    model, history = fit(build_model(ds.schema, n_rules=8, seed=3), ds, config)
    _, val = stratified_split(ds.strata(), config.validation_fraction, np.random.default_rng(config.seed))
    sub = ds.subset(val)
    got = compute_loss(model, model.encode(sub.values), sub.y, config).total
    assert got == pytest.approx(min(row["val_total"] for row in history), rel=1e-12)
    assert len(history) == 8


def test_no_validation_runs_every_epoch(tmp_path):
    ds = tictactoe()
    config = TrainConfig(max_epochs=3, patience=1, validation_fraction=0.0, log_path=str(tmp_path / "h.csv"))
    _, history = fit(build_model(ds.schema, n_rules=4), ds, config)
    assert len(history) == 3 and all(np.isnan(r["val_total"]) for r in history)
    assert (tmp_path / "h.csv").read_text().splitlines()[0].startswith("epoch,train_total")


def test_fit_is_reproducible():
    ds = tictactoe().subset(np.arange(0, 958, 4))
    config = TrainConfig(max_epochs=3, seed=9)
    a, _ = fit(build_model(ds.schema, n_rules=4, seed=9), ds, config)
    b, _ = fit(build_model(ds.schema, n_rules=4, seed=9), ds, config)
    assert dumps(a) == dumps(b)


def test_stratified_split_proportions_and_fallback():
    strata = np.array([0] * 50 + [1] * 30)
    tr, va = stratified_split(strata, 0.2, np.random.default_rng(0))
    assert len(va) == 16 and np.sum(strata[va] == 1) == 6
    assert sorted(np.concatenate([tr, va]).tolist()) == list(range(80))
    with pytest.warns(UserWarning):
        tr, va = stratified_split(np.zeros(10), 0.2, np.random.default_rng(0))
    assert len(va) == 2


def test_history_writer(tmp_path):
    write_history([{"epoch": 1, "train_total": 0.5, "train_l2": 0.4, "val_total": 0.6, "val_l2": 0.5,
                    "resets": 0, "seconds": 0.1}], tmp_path / "h.csv")
    assert (tmp_path / "h.csv").read_text().splitlines()[1].startswith("1,0.5,0.4")
