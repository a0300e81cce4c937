"""Synthetic multi-subject trial generation with controlled subject shift,
session drift and target class imbalance.

Each subject owns a spatial mixing matrix (orthogonal-ish rotation times a
diagonal gain); a trial of class y mixes a latent signal whose per-channel
variances follow the class profile, plus isotropic noise. Subjects are
generated from independent child seeds, so subject s's data is identical
no matter which subject plays the target.
"""

from dataclasses import dataclass

import numpy as np

from .alignment import TrialBatch
from .errors import ConfigError


@dataclass
class SynthSpec:
    """Generator parameters for one multi-subject dataset."""

    n_subjects: int = 8
    trials_per_subject: int = 150  # per session
    ch: int = 8
    ts: int = 128
    n_classes: int = 2
    subject_spread: float = 0.5  # deviation of each subject's rotation from identity
    gain_spread: float = 0.3  # relative spread of per-channel gains
    class_contrast: float = 2.0  # latent variance boost on a class's channel block
    profile_spread: float = 0.0  # per-subject log-normal jitter on the variance profiles
    class_tilt: float = 0.0  # per-subject spread of class-expression strengths
    expression_spread: float = 0.0  # per-trial variability of class-signal strength
    trial_jitter: float = 0.0  # per-trial global log-amplitude nuisance
    noise_level: float = 0.5
    imbalance_ratio: float = 1.0  # target sessions only; 1 = balanced
    n_sessions: int = 1
    session_drift: float = 0.0  # extra mixing perturbation per later session
    target_subject: int = -1
    seed: int = 0

    def validate(self):
        if min(self.n_subjects, self.trials_per_subject, self.ch, self.n_classes) < 1:
            raise ConfigError("all synth counts must be >= 1")
        if self.ts < 2:
            raise ConfigError("ts must be >= 2")
        if self.n_sessions < 1:
            raise ConfigError("n_sessions must be >= 1")
        if self.imbalance_ratio < 1.0:
            raise ConfigError("imbalance_ratio must be >= 1")
        if not -self.n_subjects <= self.target_subject < self.n_subjects:
            raise ConfigError("target_subject out of range")
        return self


def class_variance_profiles(n_classes, ch, contrast):
    """Per-class latent variance per channel: class y boosts its own
    round-robin channel block by the contrast factor."""
    profiles = np.ones((n_classes, ch))
    blocks = np.arange(ch) * n_classes // ch
    for y in range(n_classes):
        profiles[y, blocks == y] = contrast
    return profiles


def _orthogonalish(rng, ch, spread):
    q, r = np.linalg.qr(np.eye(ch) + spread * rng.standard_normal((ch, ch)))
    sign = np.sign(np.diag(r))
    sign[sign == 0] = 1.0
    return q * sign


def imbalanced_counts(n, ratio, n_classes):
    """Class counts summing to n with class 0 over-represented by `ratio`
    relative to every other class (largest-remainder rounding)."""
    weights = np.ones(n_classes)
    weights[0] = ratio
    exact = n * weights / weights.sum()
    counts = np.floor(exact).astype(int)
    remainder = exact - counts
    for k in np.argsort(-remainder, kind="stable")[: n - counts.sum()]:
        counts[k] += 1
    if counts.min() < 1:
        raise ConfigError(
            "imbalance ratio %g leaves a class empty with %d trials" % (ratio, n)
        )
    return counts


def _session_batch(rng, spec, mixing, profiles, labels, subject_id):
    n = len(labels)
    # Per-trial class-signal strength: weak-expression trials fall toward the
    # class midpoint, giving realistic boundary-region density.
    expression = np.exp(
        spec.expression_spread * rng.standard_normal(n) - 0.5 * spec.expression_spread**2
    )
    floor, boost = profiles
    variances = floor[None, :] * boost[labels] ** expression[:, None]
    amplitude = np.exp(spec.trial_jitter * rng.standard_normal(n))
    latent = rng.standard_normal((n, spec.ch, spec.ts))
    latent *= np.sqrt(variances)[:, :, None]
    latent += spec.noise_level * rng.standard_normal((n, spec.ch, spec.ts))
    latent *= amplitude[:, None, None]
    trials = np.einsum("cd,ndt->nct", mixing, latent)
    return TrialBatch(trials, labels, subject_id)


def generate_subject(spec, subject, imbalanced=False):
    """All sessions for one subject, as a list of TrialBatch.

    Deterministic in (spec.seed, subject, imbalanced); the subject's child
    seed is independent of every other subject's.
    """
    spec.validate()
    child = np.random.SeedSequence(spec.seed).spawn(spec.n_subjects)[subject]
    rng = np.random.default_rng(child)
    rotation = _orthogonalish(rng, spec.ch, spec.subject_spread)
    gains = 1.0 + spec.gain_spread * rng.uniform(-1.0, 1.0, spec.ch)
    # Per-subject channel strengths: the class-signal directions stay shared
    # (anatomy-like) while their per-channel expression varies per subject.
    # class_tilt makes a subject express some classes more strongly than
    # others; that asymmetry is class-conditional, so whitening by the mean
    # covariance cannot remove it, and a pooled model mispredicts its
    # marginal until adapted.
    floor = np.exp(spec.profile_spread * rng.standard_normal(spec.ch))
    strengths = np.exp(spec.class_tilt * rng.standard_normal(spec.n_classes))
    boost = class_variance_profiles(spec.n_classes, spec.ch, spec.class_contrast)
    boost = boost ** strengths[:, None]
    profiles = (floor, boost)

    n = spec.trials_per_subject
    ratio = spec.imbalance_ratio if imbalanced else 1.0
    counts = imbalanced_counts(n, ratio, spec.n_classes)

    sessions = []
    for s in range(spec.n_sessions):
        mixing = rotation @ np.diag(gains)
        if s > 0:
            drift_rot = _orthogonalish(rng, spec.ch, spec.session_drift)
            drift_gain = 1.0 + spec.session_drift * rng.uniform(-0.5, 0.5, spec.ch)
            mixing = rotation @ drift_rot @ np.diag(gains * drift_gain)
        labels = rng.permutation(np.repeat(np.arange(spec.n_classes), counts))
        sessions.append(_session_batch(rng, spec, mixing, profiles, labels, "s%02d" % subject))
    return sessions


def synth_generate(spec):
    """Generate (source subjects, target sessions).

    Sources are every other subject's first session, balanced; the target
    subject's sessions carry the requested imbalance ratio.
    """
    spec.validate()
    target = spec.target_subject % spec.n_subjects
    sources = [
        generate_subject(spec, s)[0] for s in range(spec.n_subjects) if s != target
    ]
    target_sessions = generate_subject(spec, target, imbalanced=True)
    return sources, target_sessions
