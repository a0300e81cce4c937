"""Evaluation metrics and per-session result containers."""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import MetricError, ShapeError


def accuracy(predictions, truth):
    predictions = np.asarray(predictions)
    truth = np.asarray(truth)
    if predictions.shape != truth.shape:
        raise ShapeError("predictions and truth differ in length")
    if len(truth) == 0:
        raise MetricError("accuracy of an empty run is undefined")
    return float((predictions == truth).mean())


def balanced_accuracy(predictions, truth):
    """Mean per-class recall over the classes present in the truth."""
    predictions = np.asarray(predictions)
    truth = np.asarray(truth)
    if predictions.shape != truth.shape:
        raise ShapeError("predictions and truth differ in length")
    classes = np.unique(truth)
    if len(classes) == 0:
        raise MetricError("balanced accuracy of an empty run is undefined")
    recalls = [
        float((predictions[truth == c] == c).mean()) for c in classes
    ]
    return float(np.mean(recalls))


def _average_ranks(scores):
    # 1-based ranks with ties assigned their group's mean rank
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc(scores, labels):
    """Probability that a random positive outranks a random negative.

    Rank-statistic form of the Mann-Whitney U, ties counted half.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ShapeError("scores and labels differ in length")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC needs both classes present")
    ranks = _average_ranks(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass
class TrialRecord:
    """Instrumentation record for one processed trial."""

    index: int  # 1-based arrival index a
    label: int
    scores: np.ndarray  # (K,) combined ensemble scores
    pre_ms: float = 0.0  # alignment + inference + meta-learner
    post_ms: float = 0.0  # sliding-window model updates
    align_ms: float = 0.0
    infer_ms: float = 0.0
    sml_ms: float = 0.0


@dataclass
class SessionResult:
    """Predictions, scores and metrics for one streamed session."""

    records: List[TrialRecord]
    truth: Optional[np.ndarray] = None
    accuracy: Optional[float] = None
    balanced_accuracy: Optional[float] = None
    auc: Optional[float] = None
    mean_pre_ms: float = 0.0
    worst_pre_ms: float = 0.0
    mean_post_ms: float = 0.0
    worst_post_ms: float = 0.0

    @property
    def predictions(self):
        return np.array([r.label for r in self.records], dtype=np.int64)

    @property
    def scores(self):
        return np.stack([r.scores for r in self.records])

    def auc_scores(self):
        """Scalar positive-class discriminant per trial (binary runs)."""
        s = self.scores
        return s[:, 1] - s[:, 0]


def summarize_session(records, truth=None):
    """Build a SessionResult, computing metrics when labels are available."""
    result = SessionResult(records=list(records))
    if result.records:
        pre = np.array([r.pre_ms for r in result.records])
        post = np.array([r.post_ms for r in result.records])
        result.mean_pre_ms = float(pre.mean())
        result.worst_pre_ms = float(pre.max())
        result.mean_post_ms = float(post.mean())
        result.worst_post_ms = float(post.max())
    if truth is not None:
        truth = np.asarray(truth, dtype=np.int64)
        if len(truth) != len(result.records):
            raise ShapeError("truth length does not match number of records")
        result.truth = truth
        preds = result.predictions
        result.accuracy = accuracy(preds, truth)
        result.balanced_accuracy = balanced_accuracy(preds, truth)
        k = result.scores.shape[1]
        if k == 2 and len(np.unique(truth)) == 2:
            result.auc = auc(result.auc_scores(), truth)
    return result
