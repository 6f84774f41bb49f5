"""AdamW with decoupled weight decay, and the 1-cycle learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError


@dataclass
class AdamWState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adamw_step(params, state: AdamWState, lr: float, lr_scale: dict | None = None) -> None:
    """One in-place AdamW update of every trainable parameter.

    Weight decay is applied to the weights directly (``w -= lr * wd * w``),
    never through the moment estimates. ``lr_scale`` optionally maps a
    parameter name to a multiplier on ``lr`` (missing names use 1).
    """
    if lr <= 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    trainable = [p for p in params if p.trainable]
    for p in trainable:
        if p.grad is None:
            raise ConfigError(f"trainable parameter {p.name!r} has no gradient")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p in trainable:
        w, g = p.data, p.grad
        p_lr = lr * lr_scale.get(p.name, 1.0) if lr_scale else lr
        m = state.m.get(p.name)
        if m is None:
            m = state.m[p.name] = np.zeros_like(w)
            state.v[p.name] = np.zeros_like(w)
        v = state.v[p.name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if state.weight_decay:
            w *= 1.0 - p_lr * state.weight_decay
        w -= (p_lr / c1) * m / (np.sqrt(v / c2) + state.eps)


class AdamW:
    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0,
                 lr_scale: dict | None = None):
        self.params = list(params)
        self.state = AdamWState(beta1, beta2, eps, weight_decay)
        self.lr_scale = dict(lr_scale or {})

    def step(self, lr: float) -> None:
        adamw_step(self.params, self.state, lr, self.lr_scale)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


@dataclass(frozen=True)
class OneCycleSchedule:
    lr_max: float
    total_steps: int
    warmup_fraction: float = 0.3
    div_factor: float = 25.0
    final_div_factor: float = 1e4

    def __post_init__(self):
        if not 0 < self.warmup_fraction < 1:
            raise ConfigError(f"warmup_fraction must be in (0, 1), got {self.warmup_fraction}")
        if self.lr_max <= 0 or self.total_steps < 1:
            raise ConfigError("lr_max and total_steps must be positive")
        if self.div_factor <= 0 or self.final_div_factor <= 0:
            raise ConfigError("div factors must be positive")

    @property
    def lr_start(self) -> float:
        return self.lr_max / self.div_factor

    @property
    def lr_end(self) -> float:
        return self.lr_max / (self.div_factor * self.final_div_factor)

    @property
    def warmup_steps(self) -> float:
        return self.warmup_fraction * self.total_steps


def _cos_interp(a, b, frac):
    w = 0.5 * (1.0 + math.cos(math.pi * frac))
    return a * w + b * (1.0 - w)


def one_cycle_lr(step: int, schedule: OneCycleSchedule) -> float:
    """Cosine warm-up from ``lr_max/div`` to ``lr_max``, then cosine anneal."""
    if not 0 <= step <= schedule.total_steps:
        raise ConfigError(f"step {step} outside [0, {schedule.total_steps}]")
    warm = schedule.warmup_steps
    if step <= warm:
        return _cos_interp(schedule.lr_start, schedule.lr_max, step / warm)
    return _cos_interp(schedule.lr_max, schedule.lr_end,
                       (step - warm) / (schedule.total_steps - warm))
