from __future__ import annotations

import numpy as np


def _check_shapes(pred, gt):
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    return pred, gt


def pixel_accuracy(pred, gt):
    pred, gt = _check_shapes(pred, gt)
    return float(np.mean(pred == gt))


def mean_accuracy(pred, gt):
    """Mean per-class recall over the classes present in ``gt``."""
    pred, gt = _check_shapes(pred, gt)
    recalls = [np.mean(pred[gt == c] == c) for c in np.unique(gt)]
    return float(np.mean(recalls))


def average_precision(scores, positives):
    """Area under the precision-recall curve, one point per distinct score threshold."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    n_pos = positives.sum()
    if n_pos == 0:
        return float("nan")
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], positives[order]
    tp = np.cumsum(y)
    # last index of each block of tied scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    precision = tp[ends] / (ends + 1)
    recall = tp[ends] / n_pos
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def relation_average_precision(scores, gt, num_classes=4, per_class=False):
    """Mean AP over relation classes present in ``gt``; ``scores`` is (pairs, classes)."""
    scores = np.asarray(scores, dtype=np.float64)
    gt = np.asarray(gt)
    aps = {c: average_precision(scores[:, c], gt == c) for c in range(num_classes)
           if np.any(gt == c)}
    mean = float(np.mean(list(aps.values()))) if aps else float("nan")
    return (mean, aps) if per_class else mean


def relation_accuracy(scores, gt):
    return float(np.mean(np.argmax(scores, axis=1) == np.asarray(gt)))
