"""Learned profiling of dynamic-range audio effects.

Reference compressors, synthetic training audio, windowed datasets, a small
reverse-mode autodiff engine, the spectral autoencoder model, and its
trainer and diagnostics.
"""

__version__ = "0.1.0"

from .effects import (COMP4C, COMP4C_LARGE, EFFECTS, GAIN, LA2A, ControlVector, EffectSpec,
                      apply_streamed, apply_windowed, comp4c_process, denormalize_controls,
                      get_effect, normalize_controls)
from .errors import FxProfileError
from .kernels import BACKEND
from .model import Model, ModelConfig
from .train import LossConfig, TrainConfig, evaluate, loss, train

__all__ = [
    "BACKEND", "COMP4C", "COMP4C_LARGE", "EFFECTS", "GAIN", "LA2A", "ControlVector",
    "EffectSpec", "FxProfileError", "LossConfig", "Model", "ModelConfig", "TrainConfig",
    "apply_streamed", "apply_windowed", "comp4c_process", "denormalize_controls", "evaluate",
    "get_effect", "loss", "normalize_controls", "train",
]
