"""Small reverse-mode autodiff core: tensors, kernels, AdamW, 1-cycle."""

from . import ops
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import grad_check, numeric_grad, relative_error
from .optim import AdamW, AdamWState, OneCycleSchedule, adamw_step, one_cycle_lr
from .tensor import Parameter, Tensor, no_grad, resolve_dtype

__all__ = [
    "AdamW", "AdamWState", "OneCycleSchedule", "Parameter", "Tensor", "adamw_step",
    "grad_check", "load_checkpoint", "no_grad", "numeric_grad", "one_cycle_lr", "ops",
    "relative_error", "resolve_dtype", "save_checkpoint",
]
