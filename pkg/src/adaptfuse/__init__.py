"""Adaptive multi-identifier score fusion for de-duplication.

Identifiers (biometric matchers, biographical string fields) are fused one
stage at a time; a bagged logistic veto ensemble decides after each stage
whether the current rank-1 candidate is already trustworthy.
"""

from .kernels import BACKEND
from .pipeline import (
    Baseline,
    ConfigurationError,
    DedupDecision,
    FusionModel,
    PipelineConfig,
    StopRule,
    dedup,
    dedup_probe,
    full_fusion,
    fuse_prefix,
    train_pipeline,
)
from .predictor import TrainConfig, TrainingError, VetoEnsemble, train_ensemble

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Baseline",
    "ConfigurationError",
    "DedupDecision",
    "FusionModel",
    "PipelineConfig",
    "StopRule",
    "TrainConfig",
    "TrainingError",
    "VetoEnsemble",
    "dedup",
    "dedup_probe",
    "full_fusion",
    "fuse_prefix",
    "train_ensemble",
    "train_pipeline",
]
