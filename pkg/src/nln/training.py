"""Loss, gradients, projected ADAM, dead-rule resets and the training loop."""

import csv
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .encoding import take
from .errors import TrainingError


@dataclass
class TrainConfig:
    lambda_nonempty: float = 0.1
    lambda_sparsity: float = 1e-3
    learning_rate: float = 3e-3
    batch_size: int = 64
    max_epochs: int = 2000
    patience: int = 200
    validation_fraction: float = 0.2
    seed: int = 0
    dead_rule_epsilon: float = 1e-3
    reset_dead_rules: bool = True
    # None trains everything; otherwise a set of parameter names
    trainable: frozenset | None = None
    log_path: str | None = None

    def __post_init__(self):
        if self.lambda_nonempty <= 0 or self.lambda_sparsity <= 0:
            raise ValueError("regularization coefficients must be positive")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in [0, 1)")


@dataclass
class LossBreakdown:
    l2_term: float
    nonempty_term: float
    sparsity_term: float
    lambda_nonempty: float = 0.1
    lambda_sparsity: float = 1e-3
    total: float = field(init=False)

    def __post_init__(self):
        self.total = self.l2_term + self.lambda_nonempty * self.nonempty_term + self.lambda_sparsity * self.sparsity_term


def regularizers(model, with_grads=False):
    """Non-empty hinge and L1 sparsity over every logical weight row.

    Each row of a logical weight matrix is one AND/OR node. Weights
    restricted to [0, 1] use +1 as the derivative of |w| even at 0, so the
    hinge can lift a node whose weights were all clipped to zero.
    """
    nonempty = sparsity = 0.0
    g_ne, g_sp = {}, {}
    for name, w, dom in model.logical_arrays():
        a = np.abs(w)
        hinge = np.maximum(0.0, 1.0 - a.sum(axis=1))
        nonempty += float(np.sum(hinge ** 2))
        sparsity += float(a.sum())
        if with_grads:
            sgn = np.ones_like(w) if dom == "unit" else np.sign(w)
            g_ne[name] = -2.0 * hinge[:, None] * sgn
            g_sp[name] = sgn
    return nonempty, sparsity, g_ne, g_sp


def compute_loss(model, enc, y, config=None):
    config = config or TrainConfig()
    pred = model.forward(enc)
    l2 = float(np.mean(np.sum((y - pred) ** 2, axis=1))) if len(y) else 0.0
    ne, sp, _, _ = regularizers(model)
    return LossBreakdown(l2, ne, sp, config.lambda_nonempty, config.lambda_sparsity)


def loss_and_grad(model, enc, y, config):
    pred, cache = model.forward(enc, cache=True)
    n = max(len(y), 1)
    l2 = float(np.mean(np.sum((y - pred) ** 2, axis=1))) if len(y) else 0.0
    grads = model.backward(cache, 2.0 * (pred - y) / n)
    ne, sp, g_ne, g_sp = regularizers(model, with_grads=True)
    for name in g_ne:
        grads[name] = grads[name] + config.lambda_nonempty * g_ne[name] + config.lambda_sparsity * g_sp[name]
    return LossBreakdown(l2, ne, sp, config.lambda_nonempty, config.lambda_sparsity), grads


class Adam:
    def __init__(self, lr=3e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, g in grads.items():
            p = params[name]
            m = self.m.get(name)
            if m is None or m.shape != p.shape:
                m = self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            v = self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            # bias-corrected moments
            mhat = m / (1 - b1 ** self.t)
            vhat = v / (1 - b2 ** self.t)
            p -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def _check_finite(grads):
    bad = [name for name, g in grads.items() if not np.all(np.isfinite(g))]
    if bad:
        raise TrainingError(f"non-finite gradient in {', '.join(bad)}")


def train_step(model, enc, y, adam, config):
    """One projected ADAM update; returns the loss before the update."""
    loss, grads = loss_and_grad(model, enc, y, config)
    _check_finite(grads)
    if config.trainable is not None:
        grads = {k: v for k, v in grads.items() if k in config.trainable}
    adam.step(model.params(), grads)
    model.project()
    return loss


def reset_dead_rules(model, rng, epsilon=1e-3):
    """Re-draw rules whose bias or every outgoing weight has collapsed.

    A reset rule gets fresh AND weights, bias 1 and zero outgoing weights,
    so the network output does not change. Returns the reset indices.
    """
    dead = (model.and_b <= epsilon) | (model.out_w.max(axis=0, initial=0.0) <= epsilon)
    idx = np.nonzero(dead)[0]
    for r in idx:
        model.and_w[r] = rng.uniform(-1.0, 1.0, model.and_w.shape[1])
        model.and_b[r] = 1.0
        model.out_w[:, r] = 0.0
    return idx


def initialize(model, seed):
    """Re-draw every parameter with the standard initialization, in place."""
    from .encoding import init_dichotomies_regular

    rng = np.random.default_rng(seed)
    model.and_w[:] = rng.uniform(-1.0, 1.0, model.and_w.shape)
    model.and_b[:] = 1.0
    model.out_w[:] = rng.uniform(0.0, 1.0, model.out_w.shape)
    model.out_b[:] = 0.0
    for w, m in zip(model.cat_w, model.cat_miss):
        w[:] = rng.uniform(0.0, 1.0, w.shape)
        if m is not None:
            m[:] = rng.uniform(0.0, 1.0, m.shape)
    for enc, w, m in zip(model.encoders, model.con_w, model.con_miss):
        fresh = init_dichotomies_regular((enc.lo, enc.lo + enc.width), enc.n_dichotomies)
        enc.boundary_u[:] = fresh.boundary_u
        enc.sharpness_u[:] = fresh.sharpness_u
        enc.interval_w[:] = fresh.interval_w
        w[:] = rng.uniform(0.0, 1.0, w.shape)
        if m is not None:
            m[:] = rng.uniform(0.0, 1.0, m.shape)
    return model


def stratified_split(strata, fraction, rng):
    """Indices ``(train, validation)``; validation takes ``fraction`` of each stratum."""
    n = len(strata)
    if fraction <= 0 or n == 0:
        return np.arange(n), np.arange(0)
    labels, counts = np.unique(strata, return_counts=True)
    if len(labels) < 2 or counts.min() < 2:
        warnings.warn("stratified split impossible, falling back to an unstratified split", stacklevel=2)
        perm = rng.permutation(n)
        k = int(round(fraction * n))
        return np.sort(perm[k:]), np.sort(perm[:k])
    val = []
    for lab in labels:
        members = rng.permutation(np.nonzero(strata == lab)[0])
        val.extend(members[:int(round(fraction * len(members)))])
    val = np.sort(np.array(val, dtype=int))
    train = np.setdiff1d(np.arange(n), val)
    return train, val


def _snapshot(model):
    return [arr.copy() for _, arr, _, _ in model.param_specs()]


def _restore(model, snap):
    for (_, arr, _, _), saved in zip(model.param_specs(), snap):
        arr[...] = saved


HISTORY_FIELDS = ("epoch", "train_total", "train_l2", "val_total", "val_l2", "resets", "seconds")


def fit(model, dataset, config=None):
    """Train in place; returns ``(model, history)``.

    With a validation fraction the parameters of the epoch with the lowest
    validation total loss are restored at the end and training stops after
    ``patience`` epochs without improvement. With fraction 0 every row is
    used for training and all ``max_epochs`` run.
    """
    config = config or TrainConfig()
    rng = np.random.default_rng(config.seed)
    train_idx, val_idx = stratified_split(dataset.strata(), config.validation_fraction, rng)
    enc_all = model.encode(dataset.values)
    enc_tr, y_tr = take(enc_all, train_idx), dataset.y[train_idx]
    enc_va, y_va = take(enc_all, val_idx), dataset.y[val_idx]
    adam = Adam(config.learning_rate)
    history = []
    best, best_loss, since_best = None, np.inf, 0
    t0 = time.perf_counter()
    n = len(train_idx)
    for epoch in range(1, config.max_epochs + 1):
        perm = rng.permutation(n)
        tot = l2 = 0.0
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            loss = train_step(model, take(enc_tr, idx), y_tr[idx], adam, config)
            tot += loss.total * len(idx)
            l2 += loss.l2_term * len(idx)
        resets = reset_dead_rules(model, rng, config.dead_rule_epsilon) if config.reset_dead_rules else ()
        row = {"epoch": epoch, "train_total": tot / max(n, 1), "train_l2": l2 / max(n, 1),
               "val_total": np.nan, "val_l2": np.nan, "resets": len(resets),
               "seconds": time.perf_counter() - t0}
        if len(val_idx):
            vl = compute_loss(model, enc_va, y_va, config)
            row["val_total"], row["val_l2"] = vl.total, vl.l2_term
            if vl.total < best_loss:
                best, best_loss, since_best = _snapshot(model), vl.total, 0
            else:
                since_best += 1
        history.append(row)
        if len(val_idx) and since_best >= config.patience:
            break
    if best is not None:
        _restore(model, best)
    if config.log_path:
        write_history(history, config.log_path)
    return model, history


def write_history(history, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=HISTORY_FIELDS)
        w.writeheader()
        for row in history:
            w.writerow(row)
