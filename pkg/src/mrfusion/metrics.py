"""Classification scoring on confusion matrices.

Matrices are L x L integer arrays, rows indexed by true class, columns by
predicted class, with class ids 1..L mapping to indices 0..L-1. All scores
are plain functions of the matrix, so sharded evaluations can sum their
matrices first and score once.
"""

import numpy as np


class MetricError(ValueError):
    pass


def confusion(true_labels, predicted_labels, num_classes):
    """Count matrix: entry [t-1, p-1] = #{i : true=t, pred=p}."""
    t = np.asarray(true_labels).ravel()
    p = np.asarray(predicted_labels).ravel()
    if t.shape != p.shape:
        raise MetricError(
            f"label vectors differ in length: {t.shape} vs {p.shape}")
    if num_classes < 1:
        raise MetricError(f"need at least 1 class, got {num_classes}")
    for name, v in (("true", t), ("predicted", p)):
        if v.size and (v.min() < 1 or v.max() > num_classes):
            raise MetricError(
                f"{name} labels outside 1..{num_classes}: "
                f"[{v.min()}, {v.max()}]")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (t - 1, p - 1), 1)
    return cm


def _check_total(cm):
    cm = np.asarray(cm)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise MetricError(f"confusion matrix must be square, got {cm.shape}")
    if np.any(cm < 0):
        raise MetricError("confusion matrix has negative entries")
    total = int(cm.sum())
    if total == 0:
        raise MetricError("confusion matrix is empty (total = 0)")
    return cm.astype(np.int64), total


def accuracy(cm):
    cm, total = _check_total(cm)
    return float(np.trace(cm) / total)


def kappa(cm):
    """Chance-corrected agreement from the matrix marginals.

    The degenerate case where expected agreement is exactly 1 (all marginal
    mass concentrated so p_e = 1) is decided in integer arithmetic: perfect
    observed agreement scores 1.0, anything less scores 0.0.
    """
    cm, total = _check_total(cm)
    trace = int(np.trace(cm))
    rows = cm.sum(axis=1)
    cols = cm.sum(axis=0)
    pe_numerator = int(np.dot(rows, cols))  # p_e = pe_numerator / total^2
    if pe_numerator == total * total:
        return 1.0 if trace == total else 0.0
    p_o = trace / total
    p_e = pe_numerator / (total * total)
    return float((p_o - p_e) / (1.0 - p_e))


def f_measure(cm):
    """Per-class F1 plus averages.

    Returns (per_class, weighted_mean, macro_mean); a class with neither
    predictions nor true samples gets F1 = 0. The weighted mean weights by
    true-class support and is the headline score.
    """
    cm, total = _check_total(cm)
    diag = np.diag(cm).astype(np.float64)
    rows = cm.sum(axis=1).astype(np.float64)  # support
    cols = cm.sum(axis=0).astype(np.float64)
    precision = np.divide(diag, cols, out=np.zeros_like(diag), where=cols > 0)
    recall = np.divide(diag, rows, out=np.zeros_like(diag), where=rows > 0)
    pr = precision + recall
    per_class = np.divide(2.0 * precision * recall, pr,
                          out=np.zeros_like(diag), where=pr > 0)
    weighted = float(np.dot(per_class, rows) / total)
    macro = float(per_class.mean())
    return per_class, weighted, macro


def scores(cm):
    """All headline scores as a dict (weighted F1 under 'fmeasure')."""
    per_class, weighted, macro = f_measure(cm)
    return {
        "accuracy": accuracy(cm),
        "fmeasure": weighted,
        "fmeasure_macro": macro,
        "kappa": kappa(cm),
        "per_class_f": per_class,
    }


def confusion_to_csv(cm):
    """Text table: header 'true\\pred,1,..,L', one row per true class."""
    cm = np.asarray(cm)
    classes = range(1, cm.shape[0] + 1)
    lines = ["true\\pred," + ",".join(str(c) for c in classes)]
    for c, row in zip(classes, cm):
        lines.append(f"{c}," + ",".join(str(int(v)) for v in row))
    return "\n".join(lines) + "\n"
