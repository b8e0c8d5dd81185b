"""Small models and datasets shared by several test modules."""

import numpy as np

from nln.data import Dataset
from nln.model import build_model
from nln.schema import Feature, Schema, Target
from nln.training import TrainConfig, compute_loss, loss_and_grad


def tiny_schema():
    return Schema((Feature("a", "binary"), Feature("b", "binary"),
                   Feature("c", "categorical", ("u", "v"), allows_missing=True),
                   Feature("x", "continuous", lo=0.0, hi=2.0)),
                  (Target("t", "binary", ("1",)),))


def tiny_problem(seed):
    """A 2-rule model with 27 parameters and 12 random rows, weights kept off kinks."""
    rng = np.random.default_rng(seed)
    model = build_model(tiny_schema(), n_rules=2, seed=seed, n_dichotomies=1)
    for name, arr, dom, logical in model.param_specs():
        if dom == "signed":
            arr[:] = rng.choice([-1, 1], arr.shape) * rng.uniform(0.05, 0.95, arr.shape)
        elif dom == "unit":
            arr[:] = rng.uniform(0.05, 0.95, arr.shape)
    model.encoders[0].sharpness_u[:] *= rng.uniform(0.3, 1.0)
    n = 12
    values = np.column_stack([rng.random(n), rng.integers(0, 2, n), rng.integers(0, 2, n).astype(float),
                              rng.uniform(0, 2, n)])
    values[rng.random(n) < 0.3, 2] = np.nan
    y = rng.integers(0, 2, (n, 1)).astype(float)
    return model, Dataset(model.schema, values, y)


def gradient_errors(model, dataset, config=None, h=1e-5):
    """Relative errors of analytic against central-difference gradients, per parameter.

    Logical weights within 1e-3 of the absolute-value or hinge kink are skipped.
    """
    config = config or TrainConfig()
    enc = model.encode(dataset.values)
    _, grads = loss_and_grad(model, enc, dataset.y, config)
    errors = []
    for name, arr, dom, logical in model.param_specs():
        for idx in np.ndindex(arr.shape):
            if logical and (abs(arr[idx]) < 1e-3 or abs(1.0 - np.abs(arr[idx[0]]).sum()) < 1e-3):
                continue
            old = arr[idx]
            arr[idx] = old + h
            up = compute_loss(model, model.encode(dataset.values), dataset.y, config).total
            arr[idx] = old - h
            dn = compute_loss(model, model.encode(dataset.values), dataset.y, config).total
            arr[idx] = old
            num = (up - dn) / (2 * h)
            ana = grads[name][idx]
            errors.append((name, idx, abs(ana - num) / max(abs(num), abs(ana), 1e-8)))
    return errors


def ttt_truth_model(extra_rules=0):
    """The eight x-wins rules as a crisp network, plus ``extra_rules`` dead modules."""
    from nln.datasets import LINES, tictactoe

    schema = tictactoe().schema
    model = build_model(schema, n_rules=8 + extra_rules, seed=0)
    model.and_w[:] = 0.0
    model.out_w[:] = 0.0
    for c in range(9):
        model.cat_w[c][:] = 0.0
    for r, line in enumerate(LINES):
        model.out_w[0, r] = 1.0
        for sq in line:
            model.and_w[r, sq] = 1.0
            model.cat_w[sq][r] = [1.0, 0.0, 0.0]  # value x
    model.threshold = 0.5
    return model
