"""Receiver operating characteristic curves and the area under them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UndefinedCurveError


@dataclass(frozen=True)
class RocCurve:
    """Operating points from sweeping the score threshold high to low.

    fpr and tpr start at (0, 0) and end at (1, 1); thresholds[i] is the score
    cut that produced point i+1 (the origin has no threshold). Tied scores
    collapse into a single point, so ties trace diagonal segments.
    """

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float


def roc(scores: np.ndarray, labels: np.ndarray) -> RocCurve:
    """Build the ROC curve of real-valued scores against 0/1 labels.

    The area is the trapezoid rule over the curve, which equals the
    Mann-Whitney statistic with ties counted half. Raises UndefinedCurveError
    unless both classes are present.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(np.int64)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have the same length")
    if labels.size and (labels.min() < 0 or labels.max() > 1):
        raise ValueError("labels must be 0 or 1")
    positives = int(labels.sum())
    negatives = len(labels) - positives
    if positives == 0 or negatives == 0:
        raise UndefinedCurveError("ROC needs both classes in the labels")

    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    boundary = np.nonzero(np.diff(s))[0]
    last = np.concatenate([boundary, [len(s) - 1]])  # end of every tie group
    tp = np.cumsum(y)[last]
    fp = np.cumsum(1 - y)[last]
    tpr = np.concatenate([[0.0], tp / positives])
    fpr = np.concatenate([[0.0], fp / negatives])
    area = float(np.trapezoid(tpr, fpr))
    return RocCurve(fpr=fpr, tpr=tpr, thresholds=s[last], auc=area)


def rank_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """AUC as the normalized Mann-Whitney U with average ranks for ties."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(np.int64)
    positives = int(labels.sum())
    negatives = len(labels) - positives
    if positives == 0 or negatives == 0:
        raise UndefinedCurveError("AUC needs both classes in the labels")
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    average_ranks = (ends - counts + 1 + ends) / 2.0
    ranks = average_ranks[inverse]
    u = float(np.sum(ranks[labels == 1])) - positives * (positives + 1) / 2.0
    return u / (positives * negatives)
