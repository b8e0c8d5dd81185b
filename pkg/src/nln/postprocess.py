"""Post-training simplification: discretization, continuous retraining,
pruning, bias adjustment, included-rule elimination and model merging.

Discretization and pruning compare the squared error on the full training
set for many single-weight changes. :class:`IncrementalEvaluator` keeps the
per-rule activations and the output products so that a candidate only
re-evaluates the path through the rules it touches.
"""

import itertools
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .encoding import ContinuousEncoder
from .errors import DimensionError
from .kernels import and_forward, or_forward
from .metrics import f1_and_accuracy, fit_threshold
from .model import NlnModel, predict
from .training import TrainConfig, fit

STRATEGIES = ("descending_selection", "subtractive", "additive", "ascending_selection")
REFRESH_EVERY = 256


class IncrementalEvaluator:
    """Sum of squared errors of a model on a fixed dataset, with cheap local updates.

    Output products are stored as the product of their nonzero factors plus
    a count of zero factors, so one factor can be swapped without dividing
    by zero.
    """

    def __init__(self, model, dataset):
        self.model = model
        self.y = dataset.y
        self.enc = model.encode(dataset.values)
        self.n = len(dataset)
        self.refresh()

    # full recomputation ------------------------------------------------

    def refresh(self):
        m, enc = self.model, self.enc
        r = m.n_rules
        self.cat = [or_forward(*m._cat_inputs(c, enc), np.zeros(r)) for c in range(len(m.cat_cols))]
        self.iv, self.dich, self.con = [], [], []
        for q, enc_q in enumerate(m.encoders):
            x, miss = enc.con_values[q], enc.con_missing[q]
            s = enc_q.dichotomy_values(np.where(miss > 0, enc_q.lo, x))
            iv = enc_q.interval_values(s)
            iv[miss > 0] = 0.0
            self.dich.append(s)
            self.iv.append(iv)
            self.con.append(or_forward(*m._con_inputs(q, iv, miss), np.zeros(r)))
        self.h = np.empty((self.n, r))
        for i in range(r):
            self.h[:, i] = self.rule_h(i)
        g = 1.0 - self.h[:, None, :] * m.out_w[None, :, :]
        zero = g == 0.0
        self.nzero = zero.sum(axis=2)
        self.prodnz = np.prod(np.where(zero, 1.0, g), axis=2)
        self.pred = self._outputs(self.prodnz, self.nzero)
        self.sse = float(np.sum((self.y - self.pred) ** 2))
        self.commits = 0

    def _outputs(self, prodnz, nzero):
        prod = np.where(nzero > 0, 0.0, prodnz)
        return np.clip(1.0 - (1.0 - self.model.out_b) * prod, 0.0, 1.0)

    def rule_inputs(self, i, cat=None, con=None):
        m = self.model
        z = np.empty((self.n, len(m.schema.features)))
        if m.bin_cols:
            z[:, m.bin_cols] = self.enc.binary
        for c, col in enumerate(m.cat_cols):
            z[:, col] = self.cat[c][:, i] if cat is None or c not in cat else cat[c]
        for q, col in enumerate(m.con_cols):
            z[:, col] = self.con[q][:, i] if con is None or q not in con else con[q]
        return z

    def rule_h(self, i, and_row=None, cat=None, con=None):
        m = self.model
        w = m.and_w[i] if and_row is None else and_row
        return and_forward(self.rule_inputs(i, cat, con), w[None, :], m.and_b[i:i + 1])[:, 0]

    # candidates ------------------------------------------------------------

    def _swap(self, rules, h_new, out_new):
        """Output products after replacing rule columns ``rules`` by ``h_new``/``out_new``."""
        m = self.model
        prodnz, nzero = self.prodnz.copy(), self.nzero.copy()
        for t, i in enumerate(rules):
            g_old = 1.0 - self.h[:, i, None] * m.out_w[None, :, i]
            g_new = 1.0 - h_new[:, t, None] * out_new[None, :, t]
            z_old, z_new = g_old == 0.0, g_new == 0.0
            prodnz = prodnz / np.where(z_old, 1.0, g_old) * np.where(z_new, 1.0, g_new)
            nzero = nzero - z_old + z_new
        return prodnz, nzero

    def evaluate(self, change):
        """SSE and the pending state for a :class:`Change`; the model is left untouched."""
        m = self.model
        rules, cat_new, con_new, iv_new = change.rules(m), {}, {}, None
        if change.kind == "iw":
            q, i, d = change.index
            w = m.encoders[q].interval_w[i].copy()
            w[d] = change.value
            iv_col = and_forward(self.dich[q], w[None, :], np.ones(1))[:, 0]
            iv_col[self.enc.con_missing[q] > 0] = 0.0
            iv = self.iv[q].copy()
            iv[:, i] = iv_col
            iv_new = (q, iv)
            p, wmat = m._con_inputs(q, iv, self.enc.con_missing[q])
            sub = np.asarray(rules, dtype=int)
            col = or_forward(p, wmat[sub], np.zeros(len(sub)))
            con_new = {r: {q: col[:, t]} for t, r in enumerate(rules)}
        elif change.kind == "cat":
            c, r, v = change.index
            p, wmat = m._cat_inputs(c, self.enc)
            row = wmat[r].copy()
            row[v] = change.value
            cat_new = {r: {c: or_forward(p, row[None, :], np.zeros(1))[:, 0]}}
        elif change.kind == "cw":
            q, r, i = change.index
            p, wmat = m._con_inputs(q, self.iv[q], self.enc.con_missing[q])
            row = wmat[r].copy()
            row[i] = change.value
            con_new = {r: {q: or_forward(p, row[None, :], np.zeros(1))[:, 0]}}
        h_new = np.empty((self.n, len(rules)))
        out_new = m.out_w[:, rules].copy()
        for t, r in enumerate(rules):
            if change.kind == "out":
                h_new[:, t] = self.h[:, r]
                out_new[change.index[0], t] = change.value
            elif change.kind == "and":
                row = m.and_w[r].copy()
                row[change.index[1]] = change.value
                h_new[:, t] = self.rule_h(r, and_row=row)
            else:
                h_new[:, t] = self.rule_h(r, cat=cat_new.get(r), con=con_new.get(r))
        prodnz, nzero = self._swap(rules, h_new, out_new)
        pred = self._outputs(prodnz, nzero)
        sse = float(np.sum((self.y - pred) ** 2))
        return sse, (rules, h_new, prodnz, nzero, pred, cat_new, con_new, iv_new)

    def commit(self, change, pending):
        rules, h_new, prodnz, nzero, pred, cat_new, con_new, iv_new = pending
        change.apply(self.model)
        for t, r in enumerate(rules):
            self.h[:, r] = h_new[:, t]
            for c, col in cat_new.get(r, {}).items():
                self.cat[c][:, r] = col
            for q, col in con_new.get(r, {}).items():
                self.con[q][:, r] = col
        if iv_new is not None:
            self.iv[iv_new[0]] = iv_new[1]
        self.prodnz, self.nzero, self.pred = prodnz, nzero, pred
        self.sse = float(np.sum((self.y - pred) ** 2))
        self.commits += 1
        if self.commits % REFRESH_EVERY == 0:
            self.refresh()  # wash out drift from repeated factor swaps


@dataclass(frozen=True)
class Change:
    """Set one logical weight. ``kind`` names the array: out, and, cat, cw, iw."""

    kind: str
    index: tuple
    value: float

    def array(self, model):
        if self.kind == "out":
            return model.out_w, self.index
        if self.kind == "and":
            return model.and_w, self.index
        if self.kind == "cat":
            return model.cat_w[self.index[0]], self.index[1:]
        if self.kind == "cw":
            return model.con_w[self.index[0]], self.index[1:]
        return model.encoders[self.index[0]].interval_w, self.index[1:]

    def current(self, model):
        arr, idx = self.array(model)
        return float(arr[idx])

    def apply(self, model):
        arr, idx = self.array(model)
        arr[idx] = self.value

    def rules(self, model):
        if self.kind == "out":
            return [self.index[1]]
        if self.kind in ("and", "cat", "cw"):
            return [self.index[1] if self.kind != "and" else self.index[0]]
        q, i, _ = self.index
        return [int(r) for r in np.nonzero(model.con_w[q][:, i])[0]]


def weight_groups(model):
    """Logical weights grouped by layer, from the output layer inward.

    Each group is a list of ``(kind, index)``; the categorical and
    continuous input modules come last, one module at a time.
    """
    groups = [[("out", idx) for idx in np.ndindex(model.out_w.shape)],
              [("and", idx) for idx in np.ndindex(model.and_w.shape)]]
    for c, w in enumerate(model.cat_w):
        groups.append([("cat", (c, *idx)) for idx in np.ndindex(w.shape)])
    for q, (enc, w) in enumerate(zip(model.encoders, model.con_w)):
        groups.append([("cw", (q, *idx)) for idx in np.ndindex(w.shape)])
        groups.append([("iw", (q, *idx)) for idx in np.ndindex(enc.interval_w.shape)])
    return groups


def _magnitude(model, kind, index):
    return abs(Change(kind, index, 0.0).current(model))


def _sign(v):
    return 1.0 if v > 0 else -1.0


def discretize(model, dataset, strategy="descending_selection"):
    """Snap every logical weight to {-1, 0, 1} ({0, 1} where nonnegative), in place.

    Missing-value weights are left continuous. Returns the number of
    weights set to zero.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}, expected one of {STRATEGIES}")
    groups = weight_groups(model)
    original = {(k, i): Change(k, i, 0.0).current(model) for g in groups for k, i in g}
    if strategy == "subtractive":
        for (k, i), v in original.items():
            if v != 0:
                Change(k, i, _sign(v)).apply(model)
    elif strategy == "additive":
        for k, i in original:
            Change(k, i, 0.0).apply(model)
    ev = IncrementalEvaluator(model, dataset)
    for group in groups:
        live = [(k, i) for k, i in group if original[(k, i)] != 0]
        descending = strategy in ("descending_selection", "additive")
        live.sort(key=lambda ki: abs(original[ki]), reverse=descending)
        for k, i in live:
            v = original[(k, i)]
            if strategy in ("descending_selection", "ascending_selection"):
                z = Change(k, i, 0.0)
                s = Change(k, i, _sign(v))
                sse0, pend0 = ev.evaluate(z)
                sse1, pend1 = ev.evaluate(s)
                # ties go to zero, the sparser choice
                if sse0 <= sse1:
                    ev.commit(z, pend0)
                else:
                    ev.commit(s, pend1)
            else:
                target = 0.0 if strategy == "subtractive" else _sign(v)
                cand = Change(k, i, target)
                sse, pend = ev.evaluate(cand)
                if sse < ev.sse:
                    ev.commit(cand, pend)
    zeros = sum(1 for (k, i), v in original.items() if v != 0 and Change(k, i, 0.0).current(model) == 0.0)
    model.meta.setdefault("stages", []).append(f"discretize:{strategy}")
    return zeros


def retrain_continuous(model, dataset, config=None, epochs=100):
    """Retrain biases, dichotomies and missing-value weights with the logic frozen."""
    config = config or TrainConfig()
    names = {name for name, _, _, logical in model.param_specs() if not logical}
    cfg = replace(config, trainable=frozenset(names), validation_fraction=0.0, max_epochs=epochs,
                  reset_dead_rules=False, log_path=None)
    fit(model, dataset, cfg)
    model.meta.setdefault("stages", []).append("retrain_continuous")
    return model


def _tolerance(sse):
    return 1e-9 * max(1.0, sse)


def prune(model, dataset):
    """Zero every weight whose removal does not raise the loss, to a fixpoint.

    Passes run from the output layer inward and repeat until a full pass
    changes nothing. Rule modules left without outgoing weights are then
    removed, and unused encoder weights cleared. Biases are not pruned.
    Returns the pruned model (rules may have been dropped, so use the
    return value).
    """
    ev = IncrementalEvaluator(model, dataset)
    changed = True
    while changed:
        changed = False
        for group in weight_groups(model):
            for k, i in group:
                cand = Change(k, i, 0.0)
                if cand.current(model) == 0.0:
                    continue
                sse, pend = ev.evaluate(cand)
                if sse <= ev.sse + _tolerance(ev.sse):
                    ev.commit(cand, pend)
                    changed = True
        ev.refresh()
    remove_dead_structure(model)
    canonical_categoricals(model)
    model.meta.setdefault("stages", []).append("prune")
    return model


def canonical_categoricals(model):
    """Rewrite negated value sets as the complement set when that uses fewer values.

    ``NOT f in S`` and ``f in (values - S)`` agree on every one-hot row, and
    on missing rows once the missing weight ``m`` becomes ``1 - m``, so the
    output does not change. Ties prefer the positive form.
    """
    for c, col in enumerate(model.cat_cols):
        w = model.cat_w[c]
        for r in range(model.n_rules):
            a = model.and_w[r, col]
            if a == 0 or not np.all(np.isin(w[r], (0.0, 1.0))):
                continue
            used = int(w[r].sum())
            comp = w.shape[1] - used
            if comp < used or (comp == used and a < 0):
                w[r] = 1.0 - w[r]
                model.and_w[r, col] = -a
                if model.cat_miss[c] is not None:
                    model.cat_miss[c][r] = 1.0 - model.cat_miss[c][r]
    return model


def remove_dead_structure(model):
    """Drop rules without outgoing weights and clear weights that feed nothing.

    Leaves the network output unchanged. At least one rule module is kept.
    """
    live = np.nonzero(model.out_w.max(axis=0, initial=0.0) > 0)[0]
    if len(live) == 0:
        live = np.array([0])
        model.out_w[:, 0] = 0.0
    if len(live) < model.n_rules:
        model.select_rules(live)
    for c, col in enumerate(model.cat_cols):
        model.cat_w[c][model.and_w[:, col] == 0] = 0.0
    for q, col in enumerate(model.con_cols):
        model.con_w[q][model.and_w[:, col] == 0] = 0.0
        unused = model.con_w[q].max(axis=0, initial=0.0) == 0
        model.encoders[q].interval_w[unused] = 0.0
    return model


def split_shared_rules(model):
    """Give every rule feeding several targets its own copy per target.

    The output is unchanged: each copy keeps the AND node and one of the
    outgoing weights.
    """
    order, owners = [], []
    for r in range(model.n_rules):
        targets = np.nonzero(model.out_w[:, r])[0]
        if len(targets) <= 1:
            order.append(r)
            owners.append(targets)
        else:
            for k in targets:
                order.append(r)
                owners.append([k])
    if len(order) == model.n_rules:
        return model
    out_w = np.zeros((model.n_outputs, len(order)))
    for t, (r, ks) in enumerate(zip(order, owners)):
        for k in ks:
            out_w[k, t] = model.out_w[k, r]
    model.select_rules(order)
    model.out_w = out_w
    return model


def rule_activations(model, dataset, with_bias=False):
    """``(N, R)`` rule activations; without the bias unless asked (the c-tilde of coverage)."""
    ev = IncrementalEvaluator(_unbiased(model) if not with_bias else model, dataset)
    return ev.h


def _unbiased(model):
    m = model.copy()
    m.and_b[:] = 1.0
    return m


def rule_targets(model):
    """Target index of every rule (``-1`` for a rule feeding nothing)."""
    out = np.full(model.n_rules, -1)
    for r in range(model.n_rules):
        ks = np.nonzero(model.out_w[:, r])[0]
        if len(ks):
            out[r] = ks[0]
    return out


def adjust_biases(model, dataset):
    """Set biases to the observed precision of each rule and the recall gap of each target.

    ``a_i`` becomes the share of rule i's unbiased activation that falls on
    rows positive for its target. ``o_k`` becomes the share of the unbiased
    miss mass ``1 - c_k`` that falls on positive rows, computed after the
    rule biases changed. A zero denominator leaves the bias as is and warns.
    """
    split_shared_rules(model)
    ct = rule_activations(model, dataset)
    y = dataset.y
    targets = rule_targets(model)
    for r, k in enumerate(targets):
        if k < 0:
            continue
        total = ct[:, r].sum()
        if total <= 0:
            warnings.warn(f"rule {r} never activates; bias left at {model.and_b[r]}", stacklevel=2)
            continue
        model.and_b[r] = min(1.0, ct[y[:, k] > 0.5, r].sum() / total)
    c2 = 1.0 - np.prod(1.0 - (ct * model.and_b)[:, None, :] * model.out_w[None, :, :], axis=2)
    miss = 1.0 - c2
    for k in range(model.n_outputs):
        total = miss[:, k].sum()
        if total <= 0:
            warnings.warn(f"target {k} is always covered; output bias left at {model.out_b[k]}", stacklevel=2)
            continue
        model.out_b[k] = min(1.0, miss[y[:, k] > 0.5, k].sum() / total)
    model.meta.setdefault("stages", []).append("adjust_biases")
    return model


def inclusion(ci, cj):
    """Share of rule i's activation mass also covered by rule j."""
    ci = np.asarray(ci, dtype=np.float64)
    cj = np.asarray(cj, dtype=np.float64)
    total = ci.sum()
    if total <= 0:
        warnings.warn("inclusion of a rule that never activates; defined as 1", stacklevel=2)
        return 1.0
    # sqrt of each factor separately so tiny activations do not underflow
    return float(min(1.0, np.minimum(np.sqrt(ci) * np.sqrt(cj), ci).sum() / total))


def inclusion_score(model, i, j, dataset):
    if rule_targets(model)[i] != rule_targets(model)[j]:
        raise DimensionError("inclusion is defined between rules of one target")
    ct = rule_activations(model, dataset)
    return inclusion(ct[:, i], ct[:, j])


def eliminate_included_rules(model, dataset, tol=1e-9):
    """Remove every rule included in a same-target rule with a strictly higher bias.

    Returns the removed rule indices (in the model before removal).
    """
    ct = rule_activations(model, dataset)
    targets = rule_targets(model)
    doomed = set()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for i, j in itertools.permutations(range(model.n_rules), 2):
            if targets[i] < 0 or targets[i] != targets[j] or not model.and_b[i] < model.and_b[j]:
                continue
            if inclusion(ct[:, i], ct[:, j]) >= 1.0 - tol:
                doomed.add(i)
    if doomed:
        keep = [r for r in range(model.n_rules) if r not in doomed]
        if not keep:
            keep = [0]
        model.select_rules(keep)
    model.meta.setdefault("stages", []).append("eliminate_included_rules")
    return sorted(doomed)


def postprocess(model, dataset, strategy="descending_selection", config=None, retrain_epochs=100):
    """The full chain on the full training set; returns ``(model, report)``."""
    report = {"rules_before": model.n_rules}
    ev = IncrementalEvaluator(model, dataset)
    report["sse_trained"] = ev.sse
    discretize(model, dataset, strategy)
    report["sse_discretized"] = IncrementalEvaluator(model, dataset).sse
    if retrain_epochs:
        retrain_continuous(model, dataset, config, retrain_epochs)
    model = prune(model, dataset)
    report["sse_pruned"] = IncrementalEvaluator(model, dataset).sse
    adjust_biases(model, dataset)
    removed = eliminate_included_rules(model, dataset)
    if removed:
        adjust_biases(model, dataset)
    report["eliminated"] = len(removed)
    report["rules_after"] = model.n_rules
    report["sse_final"] = IncrementalEvaluator(model, dataset).sse
    if model.task != "multiclass":
        fit_threshold(model, dataset)
    return model, report


def _same_schema(models):
    text = models[0].schema.to_text()
    return all(m.schema.to_text() == text for m in models)


def concatenate_models(models):
    """One model holding every rule module of ``models``; outputs are the OR of theirs up to the biases.

    Continuous encoders are stacked side by side, each rule keeping the
    intervals of the model it came from. The output bias is the smallest
    of the merged biases.
    """
    if not models:
        raise ValueError("nothing to merge")
    if not _same_schema(models) or len({m.n_outputs for m in models}) != 1:
        raise DimensionError("merged models must share schema and targets")
    base = models[0]
    cat_miss = [None if m is None else np.concatenate([x.cat_miss[c] for x in models])
                for c, m in enumerate(base.cat_miss)]
    encoders, con_w, con_miss = [], [], []
    for q, enc0 in enumerate(base.encoders):
        encs = [m.encoders[q] for m in models]
        n_d = sum(e.n_dichotomies for e in encs)
        n_i = sum(e.n_intervals for e in encs)
        iw = np.zeros((n_i, n_d))
        cw = np.zeros((sum(m.n_rules for m in models), n_i))
        d0 = i0 = r0 = 0
        for m, e in zip(models, encs):
            iw[i0:i0 + e.n_intervals, d0:d0 + e.n_dichotomies] = e.interval_w
            cw[r0:r0 + m.n_rules, i0:i0 + e.n_intervals] = m.con_w[q]
            d0 += e.n_dichotomies
            i0 += e.n_intervals
            r0 += m.n_rules
        if any(e.lo != enc0.lo or e.width != enc0.width for e in encs):
            raise DimensionError("merged continuous encoders must share their feature range")
        encoders.append(ContinuousEncoder(enc0.lo, enc0.width, np.concatenate([e.boundary_u for e in encs]),
                                          np.concatenate([e.sharpness_u for e in encs]), iw))
        con_w.append(cw)
        con_miss.append(None if base.con_miss[q] is None else np.concatenate([m.con_miss[q] for m in models]))
    return NlnModel(base.schema, np.vstack([m.and_w for m in models]), np.concatenate([m.and_b for m in models]),
                    np.hstack([m.out_w for m in models]), np.min([m.out_b for m in models], axis=0),
                    [np.vstack([m.cat_w[c] for m in models]) for c in range(len(base.cat_w))], cat_miss,
                    encoders, con_w, con_miss, base.task, base.threshold, {"merged": len(models)})


def merge_models(models, dataset):
    """Concatenate models, then prune and re-adjust biases on ``dataset``."""
    merged = prune(concatenate_models(models), dataset)
    adjust_biases(merged, dataset)
    if merged.task != "multiclass":
        fit_threshold(merged, dataset)
    return merged


def _subset_predictions(model, h, subset):
    sub = list(subset)
    prod = np.prod(1.0 - h[:, None, sub] * model.out_w[None, :, sub], axis=2)
    return 1.0 - (1.0 - model.out_b) * prod


@dataclass
class SubsetRanking:
    subsets: list  # (rule indices, f1), best first
    approximate: bool


def find_minimal_subset(model, dataset, max_rules, guard=20, beam_width=64):
    """Rank rule subsets of at most ``max_rules`` rules by F1 on ``dataset``.

    Exhaustive when the model has at most ``guard`` live rules, otherwise a
    beam search whose result is flagged approximate. Ties rank smaller
    subsets first, then lexicographically.
    """
    h = rule_activations(model, dataset, with_bias=True)
    live = [r for r in range(model.n_rules) if model.out_w[:, r].max(initial=0.0) > 0]

    def score(subset):
        pred = predict(model, _subset_predictions(model, h, subset))
        return f1_and_accuracy(pred, dataset.y, model.task)["f1"]

    def key(item):
        return (-item[1], len(item[0]), item[0])

    max_rules = min(max_rules, len(live))
    if len(live) <= guard:
        scored = [(s, score(s)) for k in range(1, max_rules + 1) for s in itertools.combinations(live, k)]
        return SubsetRanking(sorted(scored, key=key), approximate=False)
    scored, frontier = [], [()]
    for _ in range(max_rules):
        cands = {tuple(sorted(s + (r,))) for s in frontier for r in live if r not in s}
        level = sorted(((s, score(s)) for s in cands), key=key)[:beam_width]
        scored.extend(level)
        frontier = [s for s, _ in level]
    return SubsetRanking(sorted(scored, key=key), approximate=True)
