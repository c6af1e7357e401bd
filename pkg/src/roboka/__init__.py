"""KAN-based audio/text fusion for unwanted-call detection.

The package trains and evaluates spline-KAN fusion models (and the standard
fusion baselines) over precomputed per-call embedding sequences, with
group-level split protocols and deterministic, checkpointable training.
"""

__version__ = "0.1.0"

from .data import CallRecord, SplitPlan, load_dataset, make_split, synth_dataset
from .downstream import CnnHead
from .kan import KanLayer, MlpLayer
from .losses import ContrastiveConfig, UncertaintyParams, bce, combined_loss, cosine_sim, infonce
from .model import ARCH_TAGS, ModelParams, build_model, model_forward
from .spline import SplineGrid, basis_deriv, basis_eval
from .train import MetricsReport, TrainConfig, cross_validate, evaluate, train_model

__all__ = [
    "ARCH_TAGS",
    "CallRecord",
    "CnnHead",
    "ContrastiveConfig",
    "KanLayer",
    "MetricsReport",
    "MlpLayer",
    "ModelParams",
    "SplineGrid",
    "SplitPlan",
    "TrainConfig",
    "UncertaintyParams",
    "bce",
    "build_model",
    "combined_loss",
    "cosine_sim",
    "cross_validate",
    "evaluate",
    "infonce",
    "load_dataset",
    "make_split",
    "model_forward",
    "basis_deriv",
    "basis_eval",
    "synth_dataset",
    "train_model",
]
