"""Classification metrics and decision-threshold fitting."""

import numpy as np

THRESHOLD_GRID = np.round(np.arange(101) * 0.01, 2)


def binary_f1(pred, true):
    pred = np.asarray(pred).astype(bool).ravel()
    true = np.asarray(true).astype(bool).ravel()
    tp = np.sum(pred & true)
    fp = np.sum(pred & ~true)
    fn = np.sum(~pred & true)
    denom = 2 * tp + fp + fn
    # no positives at all, predicted or true: nothing was missed
    return 1.0 if denom == 0 else 2.0 * tp / denom


def macro_f1(pred, true, n_classes):
    return float(np.mean([binary_f1(pred == c, true == c) for c in range(n_classes)]))


def f1_and_accuracy(pred, y, task):
    """``{'f1', 'accuracy', 'row_accuracy'}`` for predicted labels against the 0/1 target matrix.

    Multiclass predictions are class indices and F1 is macro-averaged.
    Otherwise predictions are 0/1 per output; F1 pools all outputs and
    ``accuracy`` is per output bit while ``row_accuracy`` needs every bit of
    a row right.
    """
    y = np.asarray(y)
    pred = np.asarray(pred)
    if task == "multiclass":
        true = np.argmax(y, axis=1)
        acc = float(np.mean(pred == true)) if len(true) else 1.0
        return {"f1": macro_f1(pred, true, y.shape[1]), "accuracy": acc, "row_accuracy": acc}
    pred = pred.reshape(y.shape)
    true = y > 0.5
    hits = pred.astype(bool) == true
    return {"f1": float(binary_f1(pred, true)),
            "accuracy": float(np.mean(hits)) if hits.size else 1.0,
            "row_accuracy": float(np.mean(np.all(hits, axis=1))) if hits.size else 1.0}


def threshold_scores(prob, y):
    """F1 at each point of the 0.00..1.00 grid (prediction is ``prob >= t``)."""
    prob = np.asarray(prob)
    true = np.asarray(y) > 0.5
    return np.array([binary_f1(prob >= t, true) for t in THRESHOLD_GRID])


def best_threshold(prob, y):
    """Grid threshold with the highest F1; the lowest one wins ties."""
    scores = threshold_scores(prob, y)
    return float(THRESHOLD_GRID[int(np.argmax(scores))])


def fit_threshold(model, dataset):
    """Fit and store ``model.threshold`` on ``dataset``; returns it."""
    prob = model.predict_proba(dataset.values)
    model.threshold = best_threshold(prob, dataset.y)
    return model.threshold
