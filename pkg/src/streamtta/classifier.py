"""Differentiable probabilistic classifiers for aligned trials.

A trial is reduced to a feature vector (per-channel log-variance, or the
flattened upper triangle of its scaled covariance), then classified by a
linear map or a one-hidden-layer ReLU MLP. Forward, reverse-mode gradients
and the Adam update are written out explicitly so every gradient used by
the adaptation losses is exactly checkable against finite differences.
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import LabelError, ShapeError

FEATURIZERS = ("logvar", "covflat")
ARCHS = ("linear", "mlp")
VAR_EPS = 1e-8
PROB_EPS = 1e-300  # clamp inside log only; 0 * log(0) must stay 0


def feature_dim(featurizer, ch):
    if featurizer == "logvar":
        return ch
    if featurizer == "covflat":
        return ch * (ch + 1) // 2
    raise ValueError("unknown featurizer %r" % featurizer)


def featurize(x, kind):
    """Feature vector of one (ch, ts) trial."""
    return featurize_batch(np.asarray(x, dtype=np.float64)[None], kind)[0]


def featurize_batch(trials, kind):
    """Feature matrix (n, d) of a (n, ch, ts) trial stack."""
    trials = np.asarray(trials, dtype=np.float64)
    if kind == "logvar":
        return np.log(trials.var(axis=2) + VAR_EPS)
    if kind == "covflat":
        n, ch, ts = trials.shape
        cov = np.einsum("nct,ndt->ncd", trials, trials) / ts
        iu, ju = np.triu_indices(ch)
        scale = np.where(iu == ju, 1.0, np.sqrt(2.0))
        return cov[:, iu, ju] * scale
    raise ValueError("unknown featurizer %r" % kind)


@dataclass
class ClassifierParams:
    """One ensemble member: featurizer choice plus network weights.

    weights layout: linear -> [W (K, d), b (K)];
    mlp -> [W1 (h, d), b1 (h), W2 (K, h), b2 (K)].

    center is a fixed input-normalization vector (the source-set feature
    mean, set once at training time and never updated by gradients); it
    plays the role of the CNN's input normalization and keeps optimization
    well-conditioned despite the featurizers' large common-mode offset.
    """

    featurizer: str
    arch: str
    n_classes: int
    weights: List[np.ndarray]
    hidden_dim: int = 0
    center: np.ndarray = None

    def __post_init__(self):
        if self.center is None:
            self.center = np.zeros(self.weights[0].shape[1])

    @property
    def feature_len(self):
        return self.weights[0].shape[1]

    def copy(self):
        return ClassifierParams(
            self.featurizer,
            self.arch,
            self.n_classes,
            [w.copy() for w in self.weights],
            self.hidden_dim,
            self.center.copy(),
        )


def init_params(featurizer, arch, ch, n_classes, hidden_dim=32, seed=0):
    """Seeded Glorot-uniform weights, zero biases."""
    if featurizer not in FEATURIZERS:
        raise ValueError("unknown featurizer %r" % featurizer)
    if arch not in ARCHS:
        raise ValueError("unknown arch %r" % arch)
    d = feature_dim(featurizer, ch)
    rng = np.random.default_rng(seed)

    def glorot(fan_out, fan_in):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=(fan_out, fan_in))

    if arch == "linear":
        weights = [glorot(n_classes, d), np.zeros(n_classes)]
        hidden_dim = 0
    else:
        weights = [
            glorot(hidden_dim, d),
            np.zeros(hidden_dim),
            glorot(n_classes, hidden_dim),
            np.zeros(n_classes),
        ]
    return ClassifierParams(featurizer, arch, n_classes, weights, hidden_dim)


def forward_batch(params, feats, with_cache=False):
    """Logits (n, K) for a feature matrix (n, d)."""
    feats = np.asarray(feats, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[1] != params.feature_len:
        raise ShapeError(
            "feature matrix %s does not match feature dim %d"
            % (feats.shape, params.feature_len)
        )
    feats = feats - params.center
    if params.arch == "linear":
        w, b = params.weights
        logits = feats @ w.T + b
        cache = (feats,)
    else:
        w1, b1, w2, b2 = params.weights
        pre = feats @ w1.T + b1
        act = np.maximum(pre, 0.0)
        logits = act @ w2.T + b2
        cache = (feats, pre, act)
    return (logits, cache) if with_cache else logits


def forward(params, feat):
    """Logit vector (K,) for a single feature vector."""
    return forward_batch(params, np.asarray(feat, dtype=np.float64)[None])[0]


def backward_batch(params, cache, dlogits):
    """Gradients of a scalar loss w.r.t. every parameter, given dloss/dlogits."""
    if params.arch == "linear":
        (feats,) = cache
        return [dlogits.T @ feats, dlogits.sum(axis=0)]
    feats, pre, act = cache
    _, _, w2, _ = params.weights
    g_w2 = dlogits.T @ act
    g_b2 = dlogits.sum(axis=0)
    dact = dlogits @ w2
    dpre = dact * (pre > 0.0)
    return [dpre.T @ feats, dpre.sum(axis=0), g_w2, g_b2]


def softmax_t(logits, temp=1.0):
    """Temperature-scaled softmax over the last axis, stable via max shift."""
    if temp <= 0.0:
        raise ValueError("temperature must be positive, got %g" % temp)
    u = np.asarray(logits, dtype=np.float64) / temp
    u = u - u.max(axis=-1, keepdims=True)
    e = np.exp(u)
    return e / e.sum(axis=-1, keepdims=True)


def predict_probs(params, feats, temp=1.0):
    """Softmax probabilities (n, K) for a feature matrix."""
    return softmax_t(forward_batch(params, feats), temp)


def dloss_dlogits_from_dprobs(probs, dprobs, temp=1.0):
    """Chain a dloss/dprobs matrix through the temperature-scaled softmax."""
    inner = (dprobs * probs).sum(axis=-1, keepdims=True)
    return probs * (dprobs - inner) / temp


def cross_entropy_loss_grad(params, feats, labels):
    """Mean cross-entropy and its parameter gradients on a labeled batch."""
    labels = np.asarray(labels)
    n = feats.shape[0]
    logits, cache = forward_batch(params, feats, with_cache=True)
    probs = softmax_t(logits)
    picked = probs[np.arange(n), labels]
    loss = -np.log(np.maximum(picked, PROB_EPS)).mean()
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    return loss, backward_batch(params, cache, dlogits)


@dataclass
class AdamState:
    """First/second moment accumulators mirroring the parameter shapes."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)

    def copy(self):
        out = AdamState(self.lr, self.beta1, self.beta2, self.eps, self.step)
        out.m = [a.copy() for a in self.m]
        out.v = [a.copy() for a in self.v]
        return out


def adam_init(params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    state = AdamState(lr, beta1, beta2, eps)
    state.m = [np.zeros_like(w) for w in params.weights]
    state.v = [np.zeros_like(w) for w in params.weights]
    return state


def adam_step(params, state, grads):
    """One bias-corrected Adam update, in place on params and state."""
    if len(grads) != len(params.weights):
        raise ShapeError("got %d gradients for %d tensors" % (len(grads), len(params.weights)))
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for w, m, v, g in zip(params.weights, state.m, state.v, grads):
        if g.shape != w.shape:
            raise ShapeError("gradient shape %s != parameter shape %s" % (g.shape, w.shape))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        w -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def train_source(params, batch, epochs=100, batch_size=32, lr=1e-3, seed=0):
    """Minibatch Adam on cross-entropy over an aligned, labeled batch.

    Features are extracted once; shuffling is driven solely by the seed, so
    identical seeds give bit-identical trained weights.
    """
    if batch.labels is None:
        raise LabelError("source training requires labels")
    labels = batch.labels
    if labels.min() < 0 or labels.max() >= params.n_classes:
        raise LabelError(
            "labels must lie in [0, %d), got range [%d, %d]"
            % (params.n_classes, labels.min(), labels.max())
        )
    feats = featurize_batch(batch.trials, params.featurizer)
    params.center = feats.mean(axis=0)
    n = feats.shape[0]
    rng = np.random.default_rng(seed)
    state = adam_init(params, lr=lr)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            _, grads = cross_entropy_loss_grad(params, feats[idx], labels[idx])
            adam_step(params, state, grads)
    return params


def evaluate_accuracy(params, batch):
    """Fraction of trials whose argmax matches the label."""
    if batch.labels is None:
        raise LabelError("accuracy requires labels")
    feats = featurize_batch(batch.trials, params.featurizer)
    pred = forward_batch(params, feats).argmax(axis=1)
    return float((pred == batch.labels).mean())
