"""Streaming test-time adaptation for multi-channel trial classification.

Pipeline: incremental covariance alignment of each arriving trial, ensemble
prediction through a spectral meta-learner, then per-member sliding-window
updates by conditional entropy minimization plus recalibrated marginal
diversity regularization.
"""

from .alignment import (
    RunningCovariance,
    TrialBatch,
    align_offline,
    iea_transform,
    iea_update,
    mean_covariance,
)
from .classifier import (
    AdamState,
    ClassifierParams,
    adam_init,
    adam_step,
    featurize,
    featurize_batch,
    forward,
    forward_batch,
    init_params,
    softmax_t,
    train_source,
)
from .engine import EngineState, TtaConfig, init, process_trial, run_session
from .ensemble import PredictionHistory, SmlWeights, ensemble_predict, sml_weights
from .matcore import EigPair, inv_sqrt, principal_eigenvector, sym_eig
from .metrics import SessionResult, TrialRecord, accuracy, auc, balanced_accuracy
from .synth import SynthSpec, synth_generate
from .ttaloss import BatchStats, cem_loss, class_frequency, mdr_loss, update_step

__version__ = "0.1.0"
