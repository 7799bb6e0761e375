"""Classification metrics and the two-sample significance test."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.special import betainc
from sklearn.metrics import confusion_matrix as sk_confusion_matrix

from errors import DataError

SIGNIFICANCE_LEVEL = 0.01


def confusion_matrix(labels: Sequence[int], predictions: Sequence[int], num_classes: int) -> np.ndarray:
    """c x c counts, rows are true classes, columns predicted classes."""
    labels = np.asarray(labels, dtype=np.int64)
    predictions = np.asarray(predictions, dtype=np.int64)
    if labels.shape != predictions.shape:
        raise DataError(f"{labels.size} labels but {predictions.size} predictions")
    for name, arr in (("label", labels), ("prediction", predictions)):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise DataError(f"{name} out of range [0, {num_classes})")
    if labels.size == 0:
        return np.zeros((num_classes, num_classes), dtype=np.int64)
    cm = sk_confusion_matrix(labels, predictions, labels=np.arange(num_classes))
    return np.asarray(cm, dtype=np.int64)


def _one_vs_rest(confusion) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, int]:
    cm = np.asarray(confusion, dtype=np.int64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1] or cm.shape[0] == 0:
        raise DataError(f"confusion matrix must be square and non-empty, got shape {cm.shape}")
    if (cm < 0).any():
        raise DataError("confusion matrix has negative entries")
    total = int(cm.sum())
    if total == 0:
        raise DataError("confusion matrix is empty (no samples)")
    tp = np.diag(cm)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    tn = total - tp - fp - fn
    return tp, fp, fn, tn, total


def multiclass_avg_accuracy(confusion) -> float:
    """Mean over classes of one-vs-rest accuracy (TP_i + TN_i) / N."""
    tp, _, _, tn, total = _one_vs_rest(confusion)
    per_class = [(int(tp[i]) + int(tn[i])) / total for i in range(len(tp))]
    return sum(per_class) / len(per_class)


def multiclass_avg_f1(confusion) -> float:
    """Mean over classes of one-vs-rest F1; a class with precision + recall = 0 scores 0."""
    tp, fp, fn, _, _ = _one_vs_rest(confusion)
    scores = []
    for i in range(len(tp)):
        t, p_den, r_den = int(tp[i]), int(tp[i] + fp[i]), int(tp[i] + fn[i])
        precision = t / p_den if p_den else 0.0
        recall = t / r_den if r_den else 0.0
        if precision + recall == 0:
            scores.append(0.0)
        else:
            scores.append(2 * precision * recall / (precision + recall))
    return sum(scores) / len(scores)


def hard_label_mae(labels: Sequence[int], predictions: Sequence[int]) -> float:
    """Mean |y - y_hat| over hard labels, an evaluation-only score."""
    labels = np.asarray(labels, dtype=np.float64)
    predictions = np.asarray(predictions, dtype=np.float64)
    if labels.size == 0:
        raise DataError("no labels to score")
    return float(np.mean(np.abs(labels - predictions)))


def welch_t_test(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Welch's unequal-variance t statistic and two-sided p value."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise DataError(f"t-test needs at least two values per sample, got {a.size} and {b.size}")
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    diff = a.mean() - b.mean()
    se2 = va + vb
    if se2 == 0.0:
        if diff == 0.0:
            return 0.0, 1.0
        return math.copysign(math.inf, diff), 0.0
    t = diff / math.sqrt(se2)
    df = se2 ** 2 / (va ** 2 / (a.size - 1) + vb ** 2 / (b.size - 1))
    # two-sided tail of Student's t through the regularised incomplete beta
    p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return float(t), min(1.0, p)


def is_significant(p: float, level: float = SIGNIFICANCE_LEVEL) -> bool:
    return p < level
