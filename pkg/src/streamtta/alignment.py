"""Euclidean alignment of trial covariance structure.

Offline: whiten a batch by the inverse square root of its mean trial
covariance (uncentered X X^T, no trace normalization) so the batch-mean
covariance becomes the identity. Online: the same operator recomputed
incrementally from all trials seen so far, with the whitener cached per
arrival and invalidated on update.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import matcore
from .errors import EmptyInputError, ShapeError, StateError


def as_trial(x):
    """Validate one trial: a finite (channels, samples) float64 array."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError("trial must be 2-D (channels, samples), got %s" % (x.shape,))
    ch, ts = x.shape
    if ch < 1 or ts < 2:
        raise ShapeError("trial needs ch >= 1 and ts >= 2, got %s" % (x.shape,))
    if not np.all(np.isfinite(x)):
        raise ShapeError("trial contains non-finite samples")
    return x


@dataclass
class TrialBatch:
    """Ordered trials with identical (ch, ts), optionally labeled."""

    trials: np.ndarray  # (n, ch, ts)
    labels: Optional[np.ndarray] = None  # (n,) int class indices
    subject_id: str = ""

    def __post_init__(self):
        self.trials = np.asarray(self.trials, dtype=np.float64)
        if self.trials.ndim != 3:
            raise ShapeError(
                "trials must be (n, ch, ts), got shape %s" % (self.trials.shape,)
            )
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.trials.shape[0],):
                raise ShapeError(
                    "labels length %d != number of trials %d"
                    % (self.labels.shape[0], self.trials.shape[0])
                )

    def __len__(self):
        return self.trials.shape[0]

    @property
    def ch(self):
        return self.trials.shape[1]

    @property
    def ts(self):
        return self.trials.shape[2]


def mean_covariance(batch):
    """Arithmetic mean of the uncentered trial covariances (1/n) sum X X^T."""
    trials = batch.trials if isinstance(batch, TrialBatch) else np.asarray(batch, dtype=np.float64)
    n = trials.shape[0]
    if n < 1:
        raise EmptyInputError("mean_covariance needs at least one trial")
    ch = trials.shape[1]
    flat = np.ascontiguousarray(trials.transpose(1, 0, 2)).reshape(ch, -1)
    return matcore.symmetrize(flat @ flat.T / n)


def align_offline(batch, floor=None):
    """Whiten every trial by the batch's shared inverse-root mean covariance.

    Labels, ordering and subject id are preserved; the output batch has mean
    covariance = identity whenever no eigenvalue needed flooring.
    """
    if len(batch) < 1:
        raise EmptyInputError("align_offline needs at least one trial")
    w = matcore.inv_sqrt(mean_covariance(batch), floor)
    aligned = np.einsum("cd,ndt->nct", w, batch.trials)
    labels = None if batch.labels is None else batch.labels.copy()
    return TrialBatch(aligned, labels, batch.subject_id)


@dataclass
class RunningCovariance:
    """Streaming sum of X X^T with a lazily recomputed cached whitener."""

    sum_xxt: Optional[np.ndarray] = None  # (ch, ch)
    count: int = 0
    floor: Optional[float] = None
    _whitener: Optional[np.ndarray] = field(default=None, repr=False)

    def mean(self):
        if self.count == 0:
            raise StateError("no trials accumulated yet")
        return matcore.symmetrize(self.sum_xxt / self.count)

    def whitener(self):
        if self.count == 0:
            raise StateError("no trials accumulated yet")
        if self._whitener is None:
            self._whitener = matcore.inv_sqrt(self.mean(), self.floor)
        return self._whitener


def iea_update(state, x):
    """Fold one arriving trial into the running covariance; invalidates the
    cached whitener. Returns the updated state."""
    x = as_trial(x)
    if state.sum_xxt is None:
        state.sum_xxt = np.zeros((x.shape[0], x.shape[0]))
    elif state.sum_xxt.shape[0] != x.shape[0]:
        raise ShapeError(
            "trial has %d channels, state has %d" % (x.shape[0], state.sum_xxt.shape[0])
        )
    state.sum_xxt += x @ x.T
    state.count += 1
    state._whitener = None
    return state


def iea_transform(state, x):
    """Whiten one trial with the current running whitener (cached until the
    next update)."""
    if state.count == 0:
        raise StateError("iea_transform before any update")
    x = as_trial(x)
    if x.shape[0] != state.sum_xxt.shape[0]:
        raise ShapeError(
            "trial has %d channels, state has %d" % (x.shape[0], state.sum_xxt.shape[0])
        )
    return state.whitener() @ x
