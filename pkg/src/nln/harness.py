"""Experiment protocols: subsampling, k-fold cross-validation, recovery scoring.

A pipeline is a callable ``pipeline(train, test, seed) -> dict`` of metrics.
:class:`NlnPipeline` is the standard one (fit, post-process, evaluate).
Folds run in worker processes when ``threads`` (default ``NLN_THREADS``,
else 1) is above one; results are always aggregated in fold order.
"""

import itertools
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from .errors import CapacityError, DomainError
from .metrics import f1_and_accuracy
from .model import build_model, predict
from .postprocess import postprocess
from .program import _literal_value, extract_program, program_eval, program_stats
from .training import TrainConfig, fit

GUARD = 20


def default_threads():
    try:
        return max(1, int(os.environ.get("NLN_THREADS", "1")))
    except ValueError:
        return 1


def subsample_size(n, ratio):
    """``round(ratio * n)`` with halves rounded up, computed in decimal."""
    return int((Decimal(repr(float(ratio))) * n).to_integral_value(rounding=ROUND_HALF_UP))


def subsample_ratio(dataset, ratio, seed):
    """Uniform sample without replacement of ``subsample_size`` rows, in original order."""
    if not 0.0 < ratio <= 1.0:
        raise DomainError(f"ratio must lie in (0, 1], got {ratio}")
    k = subsample_size(len(dataset), ratio)
    if k == len(dataset):
        return dataset
    idx = np.sort(np.random.default_rng(seed).choice(len(dataset), size=k, replace=False))
    return dataset.subset(idx)


def kfold_indices(strata, k, rng):
    """Test-fold index arrays partitioning ``range(len(strata))``.

    Each stratum is dealt round robin over the folds after shuffling. A
    stratum smaller than ``k`` makes stratification impossible; the folds
    are then plain shuffled chunks and a warning is issued.
    """
    if k < 2:
        raise DomainError("k-fold cross-validation needs k >= 2")
    n = len(strata)
    labels, counts = np.unique(strata, return_counts=True)
    folds = [[] for _ in range(k)]
    if len(counts) == 0 or counts.min() < k:
        warnings.warn("a class has fewer members than folds, using unstratified folds", stacklevel=2)
        for i, j in enumerate(rng.permutation(n)):
            folds[i % k].append(j)
    else:
        offset = 0
        for lab in labels:
            members = rng.permutation(np.nonzero(strata == lab)[0])
            for i, j in enumerate(members):
                folds[(i + offset) % k].append(j)
            offset += len(members)
    return [np.sort(np.array(f, dtype=int)) for f in folds]


@dataclass
class CVResult:
    folds: list  # one metrics dict per (repeat, fold)
    aggregate: dict = field(default_factory=dict)


def _aggregate(folds):
    keys = [k for k, v in folds[0].items() if isinstance(v, (int, float)) and k not in ("repeat", "fold", "seed")]
    out = {}
    for key in keys:
        vals = np.array([f[key] for f in folds if f.get(key) is not None], dtype=float)
        out[key] = float(np.mean(vals)) if vals.size else float("nan")
        out[key + "_std"] = float(np.std(vals)) if vals.size else float("nan")
    return out


def _run_fold(args):
    pipeline, train, test, seed, repeat, fold = args
    t0 = time.perf_counter()
    metrics = dict(pipeline(train, test, seed))
    metrics.update(repeat=repeat, fold=fold, seed=seed, seconds=time.perf_counter() - t0)
    return metrics


def kfold_cv(dataset, k, repeats, pipeline, seed=0, threads=None):
    """Repeated stratified k-fold CV; fold ``f`` of repeat ``r`` uses seed ``seed + 1000 r + f``."""
    jobs = []
    for r in range(repeats):
        folds = kfold_indices(dataset.strata(), k, np.random.default_rng(seed + 7919 * r))
        for f, test_idx in enumerate(folds):
            train_idx = np.setdiff1d(np.arange(len(dataset)), test_idx)
            jobs.append((pipeline, dataset.subset(train_idx), dataset.subset(test_idx), seed + 1000 * r + f, r, f))
    threads = threads or default_threads()
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_fold, jobs))
    else:
        results = [_run_fold(j) for j in jobs]
    return CVResult(results, _aggregate(results))


# pipelines -------------------------------------------------------------------

@dataclass
class NlnPipeline:
    """Fit, post-process and evaluate an NLN; picklable for worker processes."""

    n_rules: int = 128
    config: TrainConfig = field(default_factory=TrainConfig)
    strategy: str = "descending_selection"
    retrain_epochs: int = 100
    n_dichotomies: int = 32
    step_budget: int | None = None  # caps epochs so the optimizer takes about this many steps
    truth: object = None  # ground-truth program for recovery scoring
    truth_domain: object = None
    keep_model: bool = False

    def __call__(self, train, test, seed):
        train = train.with_ranges() if any(f.kind == "continuous" and not f.has_range
                                           for f in train.schema.features) else train
        config = replace(self.config, seed=seed)
        if self.step_budget:
            n_fit = len(train) * (1.0 - config.validation_fraction)
            per_epoch = max(1, math.ceil(n_fit / config.batch_size))
            config = replace(config, max_epochs=min(config.max_epochs, math.ceil(self.step_budget / per_epoch)))
        model = build_model(train.schema, n_rules=self.n_rules, seed=seed, n_dichotomies=self.n_dichotomies)
        t0 = time.perf_counter()
        model, history = fit(model, train, config)
        t_fit = time.perf_counter() - t0
        prob = model.predict_proba(train.values)
        pred = predict(model, prob) if model.task == "multiclass" else prob >= 0.5
        train_metrics = f1_and_accuracy(pred, train.y, model.task)
        model, report = postprocess(model, train, self.strategy, config, self.retrain_epochs)
        out = evaluate_model(model, test)
        out.update(train_f1=train_metrics["f1"], epochs=len(history), fit_seconds=t_fit,
                   post_seconds=time.perf_counter() - t0 - t_fit, threshold=model.threshold)
        if self.truth is not None:
            rec, exc = recovery_score(extract_program(model), self.truth, domain=self.truth_domain)
            out.update(recovered=rec, excess=exc)
        if self.keep_model:
            out["model"] = model
        return out


def evaluate_model(model, dataset):
    """Held-out metrics plus program size of a post-processed model."""
    metrics = f1_and_accuracy(predict(model, model.predict_proba(dataset.values)), dataset.y, model.task)
    stats = program_stats(extract_program(model))
    metrics.update(rules=stats["rules"], mean_rule_size=stats["mean_rule_size"])
    return metrics


# recovery --------------------------------------------------------------------

def full_domain(schema, guard=GUARD):
    """Every combination of binary and categorical feature values."""
    sizes = []
    for f in schema.features:
        if f.kind == "continuous":
            raise DomainError("recovery scoring needs a finite domain, got continuous feature " + f.name)
        sizes.append(2 if f.kind == "binary" else len(f.values))
    if sum(math.log2(s) for s in sizes) > guard:
        raise CapacityError(f"domain of {math.prod(sizes)} assignments exceeds 2**{guard}")
    return np.array(list(itertools.product(*[range(s) for s in sizes])), dtype=np.float64).reshape(-1, len(sizes))


def _fires(rule, schema, rows):
    on = np.ones(len(rows), dtype=bool)
    for lit in rule.literals:
        on &= _literal_value(lit, schema, rows) > 0.5
    return on


def _target_on(program, rows, schema):
    prob = program_eval(program, rows, schema)
    threshold = program.threshold if program.threshold is not None else 0.5
    if program.task == "multiclass":
        return np.eye(prob.shape[1], dtype=bool)[np.argmax(prob, axis=1)]
    return prob >= threshold


def _crisp_key(rule, schema):
    return (rule.target, frozenset(lit.crisp_key(schema) for lit in rule.literals))


def recovery_score(extracted, truth, domain=None, schema=None):
    """``(recovered %, excess %)`` of an extracted program against a ground truth.

    A truth rule is recovered when an extracted rule has the same literals,
    or when on every assignment of ``domain`` where the truth rule fires the
    extracted program predicts its target. An extracted rule is excess when
    it matches no truth rule and fires somewhere the truth program does not
    predict its target. Both are percentages of the truth rule count.
    ``domain`` defaults to every assignment of the schema's finite features;
    pass rows to restrict it to the inputs that can occur.
    """
    schema = schema or truth.schema or extracted.schema
    rows = full_domain(schema) if domain is None else np.asarray(domain, dtype=np.float64)
    n_truth = len(truth.rules)
    if n_truth == 0:
        return 100.0, (0.0 if not extracted.rules else float("inf"))
    ex_on = _target_on(extracted, rows, schema)
    tr_on = _target_on(truth, rows, schema)
    ex_col = {t: i for i, t in enumerate(extracted.targets)}
    tr_col = {t: i for i, t in enumerate(truth.targets)}
    ex_keys = {_crisp_key(r, schema) for r in extracted.rules}
    tr_keys = {_crisp_key(r, schema) for r in truth.rules}
    recovered = 0
    for rule in truth.rules:
        if _crisp_key(rule, schema) in ex_keys:
            recovered += 1
        elif rule.target in ex_col and np.all(ex_on[_fires(rule, schema, rows), ex_col[rule.target]]):
            recovered += 1
    excess = 0
    for rule in extracted.rules:
        if _crisp_key(rule, schema) in tr_keys:
            continue
        fired = _fires(rule, schema, rows)
        if rule.target not in tr_col or not np.all(tr_on[fired, tr_col[rule.target]]):
            excess += 1
    return 100.0 * recovered / n_truth, 100.0 * excess / n_truth
