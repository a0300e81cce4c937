"""Adaptation losses for the sliding-window model update.

Two terms, summed: conditional entropy of the temperature-scaled per-trial
predictions (pushes each prediction toward one class), and a diversity term
on the batch-mean prediction recalibrated by confidence-thresholded
pseudo-label counts (keeps the batch from collapsing to one class without
punishing genuinely imbalanced streams). Pseudo-label counting happens at
temperature 1; only the probabilities carry gradients, the counts are
constants.
"""

from dataclasses import dataclass

import numpy as np

from . import classifier
from .errors import ConfigError

__all__ = [
    "BatchStats",
    "cem_loss",
    "class_frequency",
    "mdr_loss",
    "update_step",
    "tta_loss_grad",
    "mean_entropy",
    "recalibrated_diversity",
]


@dataclass
class BatchStats:
    """Per-update window statistics: mean scaled probabilities, pseudo-label
    counts, and the recalibrated class distribution."""

    p_bar: np.ndarray  # (K,) temperature-scaled mean probabilities
    z: np.ndarray  # (K,) confident pseudo-label counts
    q: np.ndarray  # (K,) recalibrated, unnormalized
    q_hat: np.ndarray  # (K,) recalibrated, sums to 1


def _xlogx(p):
    # 0 * log(0) == 0 by continuity
    return p * np.log(np.maximum(p, classifier.PROB_EPS))


def mean_entropy(probs):
    """Mean Shannon entropy of a (n, K) row-stochastic matrix, in [0, ln K]."""
    probs = np.asarray(probs, dtype=np.float64)
    return float(-_xlogx(probs).sum(axis=-1).mean())


def counts_from_probs(probs, tau):
    """Pseudo-label counts: each row contributes to its argmax class (lowest
    index on ties) when that probability reaches tau."""
    if not 0.5 <= tau < 1.0:
        raise ConfigError("tau must lie in [0.5, 1.0), got %g" % tau)
    probs = np.asarray(probs, dtype=np.float64)
    k = probs.shape[1]
    top = probs.argmax(axis=1)
    confident = probs[np.arange(len(top)), top] >= tau
    return np.bincount(top[confident], minlength=k).astype(np.int64)


def recalibrated_diversity(p_bar, z, c):
    """Diversity loss on the count-recalibrated mean prediction.

    Returns (loss, q, q_hat) with q_k = p_bar_k / (c + z_k), q_hat the
    normalized q, and loss = sum q_hat ln q_hat in [-ln K, 0].
    """
    if c < 1:
        raise ConfigError("c must be a positive integer, got %r" % (c,))
    p_bar = np.asarray(p_bar, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    q = p_bar / (c + z)
    q_hat = q / q.sum()
    return float(_xlogx(q_hat).sum()), q, q_hat


def _window_feats(params, window, feats):
    if feats is not None:
        return np.asarray(feats, dtype=np.float64)
    return classifier.featurize_batch(window, params.featurizer)


def cem_loss(params, window, temp, feats=None):
    """Conditional entropy of the temperature-scaled window predictions."""
    feats = _window_feats(params, window, feats)
    return mean_entropy(classifier.predict_probs(params, feats, temp))


def class_frequency(params, window, tau, feats=None):
    """Confident pseudo-label counts over the window, at temperature 1."""
    feats = _window_feats(params, window, feats)
    return counts_from_probs(classifier.predict_probs(params, feats, 1.0), tau)


def mdr_loss(params, window, z, c, temp, feats=None):
    """Recalibrated marginal diversity of the window's mean prediction."""
    feats = _window_feats(params, window, feats)
    p_bar = classifier.predict_probs(params, feats, temp).mean(axis=0)
    loss, _, _ = recalibrated_diversity(p_bar, z, c)
    return loss


def tta_loss_grad(params, feats, temp, tau, c, use_cem=True, use_mdr=True):
    """Value and parameter gradients of the combined adaptation loss.

    Returns (loss, grads, stats). The pseudo-label counts in stats.z are
    treated as constants; gradients flow only through the probabilities.
    """
    feats = np.asarray(feats, dtype=np.float64)
    b = feats.shape[0]
    logits, cache = classifier.forward_batch(params, feats, with_cache=True)
    probs = classifier.softmax_t(logits, temp)
    log_p = np.log(np.maximum(probs, classifier.PROB_EPS))

    z = counts_from_probs(classifier.softmax_t(logits, 1.0), tau)
    p_bar = probs.mean(axis=0)
    mdr_value, q, q_hat = recalibrated_diversity(p_bar, z, c)
    stats = BatchStats(p_bar=p_bar, z=z, q=q, q_hat=q_hat)

    loss = 0.0
    dprobs = np.zeros_like(probs)
    if use_cem:
        loss += float(-(probs * log_p).sum(axis=-1).mean())
        dprobs += -(log_p + 1.0) / b
    if use_mdr:
        loss += mdr_value
        log_qh = np.log(np.maximum(q_hat, classifier.PROB_EPS))
        # d(mdr)/dp_bar_k = (ln q_hat_k - mdr) / ((c + z_k) * sum(q))
        d_pbar = (log_qh - mdr_value) / ((c + z) * q.sum())
        dprobs += d_pbar / b

    dlogits = classifier.dloss_dlogits_from_dprobs(probs, dprobs, temp)
    grads = classifier.backward_batch(params, cache, dlogits)
    return loss, grads, stats


def update_step(params, adam, window, temp, tau, c, use_cem=True, use_mdr=True, feats=None):
    """One Adam step on the combined loss over a full sliding window.

    Returns (loss, stats); params and adam are updated in place. Identical
    inputs give identical post-update parameters.
    """
    feats = _window_feats(params, window, feats)
    loss, grads, stats = tta_loss_grad(params, feats, temp, tau, c, use_cem, use_mdr)
    classifier.adam_step(params, adam, grads)
    return loss, stats
