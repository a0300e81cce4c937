"""Ensemble prediction over independently adapted classifiers.

The default combiner is the soft spectral meta-learner: per class, the
covariance of the members' recorded probabilities over the stream is
approximately rank-one, and its principal eigenvector weights members by
(unlabeled) reliability. Hard-label SML, plain averaging and majority
voting are kept for comparison runs.

History statistics are maintained incrementally from the probabilities
recorded at each trial's prediction time; the engine also offers an
exact-recompute mode that re-evaluates every stored trial with the current
models and whitener.
"""

from dataclasses import dataclass

import numpy as np

from . import matcore
from .errors import ConvergenceError, ShapeError, StateError

ENSEMBLE_MODES = ("sml-soft", "sml-hard", "average", "vote")


class PredictionHistory:
    """Per-class member-probability history with running moment sums."""

    def __init__(self, n_models, n_classes):
        self.n_models = n_models
        self.n_classes = n_classes
        self.count = 0
        self._rows = []
        # running sums per class: sum1[k] = sum_i F_k(i), sum2[k] = sum_i F_k F_k^T
        self._sum1 = np.zeros((n_classes, n_models))
        self._sum2 = np.zeros((n_classes, n_models, n_models))

    def record(self, probs):
        """Append one (M, K) matrix of member probabilities."""
        probs = np.asarray(probs, dtype=np.float64)
        if probs.shape != (self.n_models, self.n_classes):
            raise ShapeError(
                "expected (%d, %d) member probabilities, got %s"
                % (self.n_models, self.n_classes, probs.shape)
            )
        self._rows.append(probs.copy())
        f = probs.T  # (K, M)
        self._sum1 += f
        self._sum2 += f[:, :, None] * f[:, None, :]
        self.count += 1
        return self

    def stacked(self):
        """All recorded rows as an (a, M, K) array."""
        if self.count == 0:
            return np.zeros((0, self.n_models, self.n_classes))
        return np.stack(self._rows)

    def mean(self):
        """Running per-(class, member) mean probabilities, shape (K, M)."""
        if self.count == 0:
            raise StateError("no predictions recorded")
        return self._sum1 / self.count

    def covariance(self, k):
        """Sample covariance Q_k of the members' class-k probabilities."""
        if self.count < 2:
            raise StateError("covariance needs at least 2 recorded trials")
        mu = self._sum1[k] / self.count
        q = (self._sum2[k] - self.count * np.outer(mu, mu)) / (self.count - 1)
        return matcore.symmetrize(q)

    def covariance_two_pass(self, k):
        """Naive centered two-pass covariance (exact-mode / oracle path)."""
        if self.count < 2:
            raise StateError("covariance needs at least 2 recorded trials")
        f = self.stacked()[:, :, k]  # (a, M)
        d = f - f.mean(axis=0)
        return matcore.symmetrize(d.T @ d / (self.count - 1))


@dataclass
class SmlWeights:
    """Per-class unit weight vectors; invalid until the eigensolves converge."""

    v: np.ndarray  # (K, M)
    valid: bool = False


def weights_from_covariances(covs):
    """Principal eigenvectors of per-class covariance matrices (K of them)."""
    vs = []
    for q in covs:
        try:
            vs.append(matcore.principal_eigenvector(q))
        except ConvergenceError:
            return SmlWeights(np.zeros((len(covs), q.shape[0])), valid=False)
    return SmlWeights(np.stack(vs), valid=True)


def sml_weights(history):
    """Meta-learner weights from the running history (needs count > M)."""
    if history.count <= history.n_models:
        raise StateError(
            "SML needs more trials (%d) than members (%d)"
            % (history.count, history.n_models)
        )
    covs = [history.covariance(k) for k in range(history.n_classes)]
    return weights_from_covariances(covs)


def weights_from_probs(probs):
    """Meta-learner weights from a full (a, M, K) probability tensor
    (the exact-recompute path)."""
    probs = np.asarray(probs, dtype=np.float64)
    a, _, n_classes = probs.shape
    if a < 2:
        raise StateError("need at least 2 trials for a covariance")
    covs = []
    for k in range(n_classes):
        f = probs[:, :, k]
        d = f - f.mean(axis=0)
        covs.append(matcore.symmetrize(d.T @ d / (a - 1)))
    return weights_from_covariances(covs)


def ensemble_predict(probs, weights, mode):
    """Combine one trial's (M, K) member probabilities into a label.

    Returns (label, scores); ties always break toward the lowest class
    index, and scaling every weight vector by the same positive factor
    never changes the label.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2:
        raise ShapeError("expected (M, K) probabilities, got %s" % (probs.shape,))
    m, k = probs.shape
    if mode == "average":
        scores = probs.mean(axis=0)
    elif mode == "vote":
        votes = probs.argmax(axis=1)
        scores = np.bincount(votes, minlength=k) / m
    elif mode in ("sml-soft", "sml-hard"):
        if weights is None or not weights.valid:
            raise StateError("%s requires valid meta-learner weights" % mode)
        if weights.v.shape != (k, m):
            raise ShapeError(
                "weights shape %s does not match (%d, %d)" % (weights.v.shape, k, m)
            )
        if mode == "sml-hard":
            hard = np.zeros_like(probs)
            hard[np.arange(m), probs.argmax(axis=1)] = 1.0
            probs = hard
        scores = np.einsum("mk,km->k", probs, weights.v)
    else:
        raise ValueError("unknown ensemble mode %r" % mode)
    return int(scores.argmax()), scores
