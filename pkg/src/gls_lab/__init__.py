"""Generalized label smoothing for learning with noisy labels.

Smooth rates ``r <= 1`` interpolate between the one-hot label and the uniform
vector; ``r < 0`` gives negative smoothing. The package provides the losses,
noise models and closed-form rates, a small MLP trainer with an optional
compiled core, confidence and bias/variance metrics, numerical identity
checks and an experiment CLI.
"""

from .core_types import (
    EPS_CLAMP,
    LabeledDataset,
    NoiseSpec,
    SoftLabel,
    TransitionMatrix,
    build_transition,
    make_gls_label,
    make_onehot,
)
from .kernels import BACKEND
from .losses import LossSpec, gls_loss
from .noise_math import inject_noise, r_opt_binary, r_opt_multiclass

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "EPS_CLAMP",
    "LabeledDataset",
    "LossSpec",
    "NoiseSpec",
    "SoftLabel",
    "TransitionMatrix",
    "build_transition",
    "gls_loss",
    "inject_noise",
    "make_gls_label",
    "make_onehot",
    "r_opt_binary",
    "r_opt_multiclass",
]
