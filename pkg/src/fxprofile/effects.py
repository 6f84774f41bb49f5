"""Reference compressor effects and the knob-normalization contract.

The software compressors are a single-band, hard-knee, feed-forward design
with four knobs (threshold, ratio, attack, release). Per sample:

* level ``x_db = 20 log10(max(|x|, 1e-6))``
* static curve ``g_sc = T + (x_db - T) / R`` above threshold, else ``x_db``
* gain reduction ``g_r = min(g_sc - x_db, 0)``
* one-pole smoothing of ``g_r``: attack coefficient while the reduction is
  deepening (``g_r < g_prev``), release coefficient otherwise
* ``y = x * 10 ** (g_s / 20)``

Coefficients use the 10%-90% rise convention ``exp(-ln 9 / (fs * t))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, DataError, ValidationError

DEFAULT_FS = 44100.0


@dataclass(frozen=True)
class KnobSpec:
    name: str
    lo: float
    hi: float
    unit: str = ""

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ConfigError(f"knob {self.name!r}: lo must be < hi, got [{self.lo}, {self.hi}]")


@dataclass(frozen=True)
class EffectSpec:
    """An effect's name, its ordered knobs, and whether software can run it."""

    name: str
    knobs: tuple[KnobSpec, ...]
    invocable: bool = True
    kind: str = "compressor"  # or "gain"

    def __post_init__(self):
        if not self.knobs:
            raise ConfigError(f"effect {self.name!r} has no knobs")
        if self.kind not in ("compressor", "gain"):
            raise ConfigError(f"effect {self.name!r}: unknown kind {self.kind!r}")

    @property
    def n_knobs(self) -> int:
        return len(self.knobs)

    @property
    def knob_names(self) -> list[str]:
        return [k.name for k in self.knobs]

    def knob(self, name: str) -> KnobSpec:
        for k in self.knobs:
            if k.name == name:
                return k
        raise ConfigError(f"effect {self.name!r} has no knob {name!r}")


@dataclass(frozen=True)
class ControlVector:
    """A knob setting in raw physical units plus its [-0.5, 0.5] image."""

    effect: EffectSpec = field(repr=False)
    raw: tuple[float, ...]
    normalized: tuple[float, ...]

    def __getitem__(self, name: str) -> float:
        return self.raw[self.effect.knob_names.index(name)]

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.effect.knob_names, self.raw))


@dataclass
class CompressorState:
    gain_smooth_db: float = 0.0


COMP4C = EffectSpec("comp4c", (
    KnobSpec("threshold", -30.0, 0.0, "dB"),
    KnobSpec("ratio", 1.0, 5.0, ""),
    KnobSpec("attack", 0.001, 0.040, "s"),
    KnobSpec("release", 0.001, 0.040, "s"),
))

COMP4C_LARGE = EffectSpec("comp4c-large", (
    KnobSpec("threshold", -50.0, 0.0, "dB"),
    KnobSpec("ratio", 1.5, 10.0, ""),
    KnobSpec("attack", 0.001, 1.0, "s"),
    KnobSpec("release", 0.001, 1.0, "s"),
))

# Analog unit: no software model, only recorded input/output pairs.
LA2A = EffectSpec("la2a", (
    KnobSpec("peak_reduction", 0.0, 100.0, ""),
    KnobSpec("comp_lim", 0.0, 1.0, ""),
), invocable=False)

# Memoryless level change; the sanity target for training (exactly representable).
GAIN = EffectSpec("gain", (KnobSpec("gain_db", -12.0, 0.0, "dB"),), kind="gain")

EFFECTS = {e.name: e for e in (COMP4C, COMP4C_LARGE, LA2A, GAIN)}


def get_effect(name: str) -> EffectSpec:
    try:
        return EFFECTS[name.lower()]
    except KeyError:
        raise ConfigError(f"unknown effect {name!r}; known: {sorted(EFFECTS)}") from None


def normalize_controls(raw, spec: EffectSpec) -> ControlVector:
    raw = tuple(float(v) for v in raw)
    if len(raw) != spec.n_knobs:
        raise ValidationError(
            f"{spec.name} expects {spec.n_knobs} knob values, got {len(raw)}")
    norm = []
    for v, k in zip(raw, spec.knobs):
        if not (k.lo <= v <= k.hi):
            raise ValidationError(f"knob {k.name!r}={v} outside [{k.lo}, {k.hi}]")
        norm.append((v - k.lo) / (k.hi - k.lo) - 0.5)
    return ControlVector(spec, raw, tuple(norm))


def denormalize_controls(normalized, spec: EffectSpec) -> ControlVector:
    normalized = tuple(float(v) for v in normalized)
    if len(normalized) != spec.n_knobs:
        raise ValidationError(
            f"{spec.name} expects {spec.n_knobs} knob values, got {len(normalized)}")
    raw = []
    for v, k in zip(normalized, spec.knobs):
        if not (-0.5 <= v <= 0.5):
            raise ValidationError(f"normalized knob {k.name!r}={v} outside [-0.5, 0.5]")
        raw.append(min(max((v + 0.5) * (k.hi - k.lo) + k.lo, k.lo), k.hi))
    # recompute the normalized image from raw so the two always agree exactly
    return normalize_controls(raw, spec)


def controls_from_dict(values: dict, spec: EffectSpec) -> ControlVector:
    missing = [n for n in spec.knob_names if n not in values]
    extra = [n for n in values if n not in spec.knob_names]
    if missing or extra:
        raise ValidationError(f"{spec.name}: missing knobs {missing}, unknown knobs {extra}")
    return normalize_controls([values[n] for n in spec.knob_names], spec)


def smoothing_coeff(time_s: float, fs: float) -> float:
    """One-pole coefficient whose step response rises 10%->90% in ``time_s``."""
    if time_s <= 0 or fs <= 0:
        raise ValidationError(f"time constant and fs must be positive, got {time_s}, {fs}")
    return math.exp(-math.log(9.0) / (fs * time_s))


def static_curve_db(level_db, threshold, ratio):
    """Memoryless output level for an input level (both dB)."""
    level_db = np.asarray(level_db, dtype=float)
    return np.where(level_db > threshold, threshold + (level_db - threshold) / ratio, level_db)


def _comp_params(controls: ControlVector, fs: float):
    spec = controls.effect
    if not spec.invocable:
        raise ConfigError(f"{spec.name} has no software oracle; use recorded captures")
    if fs <= 0:
        raise ValidationError(f"fs must be positive, got {fs}")
    return (controls["threshold"], controls["ratio"],
            smoothing_coeff(controls["attack"], fs), smoothing_coeff(controls["release"], fs))


def _as_signal(x) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DataError(f"expected a 1-D sample sequence, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DataError("input contains non-finite samples")
    return x


def comp4c_process(x, controls: ControlVector, fs: float = DEFAULT_FS,
                   state: CompressorState | None = None):
    """Run the compressor over ``x`` starting from ``state``.

    Returns ``(y, new_state)``; feeding ``new_state`` into the next call makes
    chunked processing identical to processing the concatenation.
    """
    state = CompressorState() if state is None else state
    x = _as_signal(x)
    threshold, ratio, a_att, a_rel = _comp_params(controls, fs)
    if x.size == 0:
        return x.copy(), CompressorState(state.gain_smooth_db)
    y = np.empty_like(x)
    g = kernels.comp_run(x, y, threshold, ratio, a_att, a_rel, float(state.gain_smooth_db))
    return y, CompressorState(g)


def gain_process(x, controls: ControlVector) -> np.ndarray:
    """``y = x * 10 ** (gain_db / 20)``."""
    x = _as_signal(x)
    return x * 10.0 ** (controls["gain_db"] / 20.0)


def apply_streamed(effect: EffectSpec, x_full, controls: ControlVector,
                   fs: float = DEFAULT_FS) -> np.ndarray:
    if controls.effect != effect:
        raise ConfigError(f"controls are for {controls.effect.name}, not {effect.name}")
    if effect.kind == "gain":
        return gain_process(x_full, controls)
    return comp4c_process(x_full, controls, fs)[0]


def apply_windowed(effect: EffectSpec, window, controls: ControlVector,
                   fs: float, L_out: int) -> np.ndarray:
    """Process one window from a reset state and keep only its last ``L_out`` samples."""
    window = np.asarray(window)
    if L_out > window.shape[-1] or L_out < 0:
        raise ConfigError(f"L_out={L_out} must lie in [0, window length {window.shape[-1]}]")
    y = apply_streamed(effect, window, controls, fs)
    return y[y.size - L_out:]


def apply_windowed_rows(effect: EffectSpec, windows, controls, fs: float,
                        L_out: int) -> np.ndarray:
    """Batched ``apply_windowed``: one control setting per row.

    Bitwise identical to calling ``apply_windowed`` on each row.
    """
    windows = np.ascontiguousarray(windows, dtype=np.float64)
    if windows.ndim != 2:
        raise DataError(f"expected (n, L) windows, got shape {windows.shape}")
    if not np.all(np.isfinite(windows)):
        raise DataError("input contains non-finite samples")
    n, L = windows.shape
    if L_out > L or L_out < 0:
        raise ConfigError(f"L_out={L_out} must lie in [0, window length {L}]")
    if isinstance(controls, ControlVector):
        controls = [controls] * n
    if len(controls) != n:
        raise ConfigError(f"{n} windows but {len(controls)} control vectors")
    if effect.kind == "gain":
        return np.stack([apply_windowed(effect, w, c, fs, L_out) for w, c in zip(windows, controls)]
                        ) if n else np.empty((0, L_out))
    params = np.empty((4, n))
    for i, c in enumerate(controls):
        if c.effect != effect:
            raise ConfigError(f"controls are for {c.effect.name}, not {effect.name}")
        params[:, i] = _comp_params(c, fs)
    y = np.empty_like(windows)
    kernels.comp_run_rows(windows, y, params[0].copy(), params[1].copy(),
                          params[2].copy(), params[3].copy())
    return y[:, L - L_out:]
