"""The online orchestrator: per-arrival incremental alignment, ensemble
prediction (always before any update), then one sliding-window adaptation
step per model, plus multi-session continual operation.

The emitted label for trial a depends only on the source data, the config
and trials 1..a; identical inputs give bit-identical label sequences.
"""

import logging
import time
from collections import deque
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from . import classifier, ensemble, ttaloss
from .alignment import RunningCovariance, TrialBatch, align_offline, iea_transform, iea_update
from .errors import ConfigError, LabelError, ShapeError
from .metrics import SessionResult, TrialRecord, summarize_session

log = logging.getLogger(__name__)

SESSION_MODES = ("source", "tta1", "tta2", "tta1+2")


@dataclass
class TtaConfig:
    """Hyper-parameter bundle for source training and streaming adaptation."""

    n_models: int = 5  # M, ensemble size
    window_size: int = 8  # B, sliding batch size
    temperature: float = 2.0  # T
    tau: float = 0.7  # pseudo-label confidence threshold
    c: int = 4  # count-smoothing constant in the recalibration
    lr: float = 1e-3
    ensemble_mode: str = "sml-soft"
    sml_interval: int = 1  # recompute weights every this many arrivals
    use_cem: bool = True
    use_mdr: bool = True
    use_temperature: bool = True
    exact_sml: bool = False
    featurizer: str = "logvar"
    arch: str = "linear"
    hidden_dim: int = 32
    epochs: int = 100
    train_batch_size: int = 32
    seed: int = 0

    def validate(self):
        if self.n_models < 1:
            raise ConfigError("n_models must be >= 1")
        if self.window_size < 1:
            raise ConfigError("window_size must be >= 1")
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")
        if not 0.5 <= self.tau < 1.0:
            raise ConfigError("tau must lie in [0.5, 1.0)")
        if self.c < 1:
            raise ConfigError("c must be >= 1")
        if self.sml_interval < 1:
            raise ConfigError("sml_interval must be >= 1")
        if self.ensemble_mode not in ensemble.ENSEMBLE_MODES:
            raise ConfigError("unknown ensemble_mode %r" % self.ensemble_mode)
        if self.featurizer not in classifier.FEATURIZERS:
            raise ConfigError("unknown featurizer %r" % self.featurizer)
        if self.arch not in classifier.ARCHS:
            raise ConfigError("unknown arch %r" % self.arch)
        return self


@dataclass
class EngineState:
    """Everything the stream loop touches; single-writer per stream."""

    config: TtaConfig
    models: List[classifier.ClassifierParams]
    adam: List[classifier.AdamState]
    n_classes: int
    ch: int
    running_cov: RunningCovariance = field(default_factory=RunningCovariance)
    history: ensemble.PredictionHistory = None
    weights: Optional[ensemble.SmlWeights] = None
    window: deque = None
    raw_trials: Optional[list] = None  # kept only in exact-recompute mode
    a: int = 0

    def __post_init__(self):
        if self.history is None:
            self.history = ensemble.PredictionHistory(len(self.models), self.n_classes)
        if self.window is None:
            self.window = deque(maxlen=self.config.window_size)
        if self.raw_trials is None and self.config.exact_sml:
            self.raw_trials = []

    def clone(self):
        """Fresh stream state around copies of the models and optimizers."""
        return EngineState(
            config=self.config,
            models=[m.copy() for m in self.models],
            adam=[a.copy() for a in self.adam],
            n_classes=self.n_classes,
            ch=self.ch,
        )

    def reset_stream(self):
        """Drop alignment, history and window; keep models and optimizers."""
        self.running_cov = RunningCovariance()
        self.history = ensemble.PredictionHistory(len(self.models), self.n_classes)
        self.weights = None
        self.window = deque(maxlen=self.config.window_size)
        self.raw_trials = [] if self.config.exact_sml else None
        self.a = 0


def init(source_batches, config):
    """Align each source subject independently, pool, and train the ensemble.

    Every member gets its own child seed for weight init and shuffling, so
    members are pairwise distinct while the whole procedure stays
    deterministic in config.seed.
    """
    config.validate()
    if not source_batches:
        raise ConfigError("need at least one source subject")
    for b in source_batches:
        if b.labels is None:
            raise LabelError("source batch %r has no labels" % b.subject_id)
    ch, ts = source_batches[0].ch, source_batches[0].ts
    for b in source_batches:
        if (b.ch, b.ts) != (ch, ts):
            raise ShapeError("source subjects disagree on (ch, ts)")
    n_classes = int(max(b.labels.max() for b in source_batches)) + 1

    aligned = [align_offline(b) for b in source_batches]
    pooled = TrialBatch(
        np.concatenate([b.trials for b in aligned]),
        np.concatenate([b.labels for b in aligned]),
        subject_id="pooled",
    )

    children = np.random.SeedSequence(config.seed).spawn(2 * config.n_models)
    models, adam = [], []
    for m in range(config.n_models):
        params = classifier.init_params(
            config.featurizer,
            config.arch,
            ch,
            n_classes,
            hidden_dim=config.hidden_dim,
            seed=children[2 * m],
        )
        classifier.train_source(
            params,
            pooled,
            epochs=config.epochs,
            batch_size=config.train_batch_size,
            lr=config.lr,
            seed=children[2 * m + 1],
        )
        models.append(params)
        adam.append(classifier.adam_init(params, lr=config.lr))
    return EngineState(config=config, models=models, adam=adam, n_classes=n_classes, ch=ch)


def _exact_weights(state):
    """Re-evaluate every stored trial with the current whitener and models
    and rebuild the meta-learner statistics from scratch."""
    raw = np.stack(state.raw_trials)
    w = state.running_cov.whitener()
    aligned = np.einsum("cd,ndt->nct", w, raw)
    feats = classifier.featurize_batch(aligned, state.config.featurizer)
    probs = np.stack(
        [classifier.predict_probs(m, feats, 1.0) for m in state.models], axis=1
    )  # (a, M, K)
    return ensemble.weights_from_probs(probs)


def process_trial(state, x, update_enabled=True):
    """Handle one arriving trial: align, predict, then adapt.

    Returns a TrialRecord; the emitted label is fixed before any model
    update for this arrival starts. A failed update (non-finite loss or
    gradients) skips that member and never blocks the prediction path.
    """
    cfg = state.config
    t0 = time.perf_counter()
    iea_update(state.running_cov, x)
    xt = iea_transform(state.running_cov, x)
    state.a += 1
    state.window.append(np.asarray(x, dtype=np.float64))
    if state.raw_trials is not None:
        state.raw_trials.append(np.asarray(x, dtype=np.float64))
    t1 = time.perf_counter()

    feats = classifier.featurize_batch(xt[None], cfg.featurizer)
    probs = np.stack([classifier.predict_probs(m, feats, 1.0)[0] for m in state.models])
    state.history.record(probs)
    t2 = time.perf_counter()

    mode = "average"
    if state.a > cfg.n_models:
        if cfg.ensemble_mode in ("sml-soft", "sml-hard"):
            due = (state.a - cfg.n_models - 1) % cfg.sml_interval == 0
            if due or state.weights is None:
                state.weights = (
                    _exact_weights(state) if cfg.exact_sml else ensemble.sml_weights(state.history)
                )
            if state.weights.valid:
                mode = cfg.ensemble_mode
        else:
            mode = cfg.ensemble_mode
    label, scores = ensemble.ensemble_predict(probs, state.weights, mode)
    t3 = time.perf_counter()

    if update_enabled and (cfg.use_cem or cfg.use_mdr) and state.a >= cfg.window_size:
        whitener = state.running_cov.whitener()
        window = np.einsum("cd,ndt->nct", whitener, np.stack(state.window))
        wfeats = classifier.featurize_batch(window, cfg.featurizer)
        temp = cfg.temperature if cfg.use_temperature else 1.0
        for i, (params, adam) in enumerate(zip(state.models, state.adam)):
            loss, grads, _ = ttaloss.tta_loss_grad(
                params, wfeats, temp, cfg.tau, cfg.c, cfg.use_cem, cfg.use_mdr
            )
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                log.warning("skipping update of member %d at trial %d: non-finite loss/grads", i, state.a)
                continue
            classifier.adam_step(params, adam, grads)
    t4 = time.perf_counter()

    return TrialRecord(
        index=state.a,
        label=label,
        scores=scores,
        pre_ms=(t3 - t0) * 1e3,
        post_ms=(t4 - t3) * 1e3,
        align_ms=(t1 - t0) * 1e3,
        infer_ms=(t2 - t1) * 1e3,
        sml_ms=(t3 - t2) * 1e3,
    )


def _stream(state, batch, update_enabled, collect=True, on_trial=None):
    records = []
    for x in batch.trials:
        record = process_trial(state, x, update_enabled=update_enabled)
        if on_trial is not None:
            on_trial(record)
        if collect:
            records.append(record)
    return records


def run_session(state, stream, mode, prior_session=None, on_trial=None):
    """Run one session in one of the continual modes.

    source: frozen models, predictions only. tta1: adapt over the prior
    session, then freeze and predict the stream. tta2: adapt-and-predict on
    the stream directly. tta1+2: adapt over the prior session, keep adapting
    on the stream. Alignment and meta-learner state reset per session; model
    parameters (and their optimizers) persist across the two phases.

    The caller's state is never touched; each call starts from its models.
    """
    if mode not in SESSION_MODES:
        raise ConfigError("unknown session mode %r" % mode)
    if mode in ("tta1", "tta1+2") and prior_session is None:
        raise ConfigError("mode %s requires a prior session" % mode)
    work = state.clone()
    if mode in ("tta1", "tta1+2"):
        _stream(work, prior_session, update_enabled=True, collect=False)
        work.reset_stream()
    update_enabled = mode in ("tta2", "tta1+2")
    records = _stream(work, stream, update_enabled, on_trial=on_trial)
    return summarize_session(records, stream.labels)
