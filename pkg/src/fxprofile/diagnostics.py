"""Step-response grids, power-spectrum comparison and raster plots.

The step signal is a sine carrier whose envelope sits at a low level, jumps
to a high level for the middle half of the window and drops back, giving one
attack and one release discontinuity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import welch

from .effects import DEFAULT_FS, EffectSpec, apply_streamed, normalize_controls
from .errors import ConfigError, DataError

STEP_BASE_DB = -40.0
STEP_HIGH_DB = 0.0
STEP_CARRIER_HZ = 1000.0


@dataclass(frozen=True)
class StepSignal:
    samples: np.ndarray
    edges: tuple[int, int]  # sample indices of the rising and falling discontinuities
    fs: float


def step_signal(L: int = 4096, fs: float = DEFAULT_FS, base_db: float = STEP_BASE_DB,
                high_db: float = STEP_HIGH_DB, carrier_hz: float = STEP_CARRIER_HZ) -> StepSignal:
    if L < 8:
        raise ConfigError(f"step signal needs at least 8 samples, got {L}")
    if not carrier_hz < fs / 2:
        raise ConfigError(f"carrier {carrier_hz} Hz above Nyquist for fs={fs}")
    rise, fall = L // 4, 3 * L // 4
    env = np.full(L, 10.0 ** (base_db / 20.0))
    env[rise:fall] = 10.0 ** (high_db / 20.0)
    t = np.arange(L) / fs
    return StepSignal(env * np.sin(2 * np.pi * carrier_hz * t), (rise, fall), fs)


def oracle_processor(effect: EffectSpec, fs: float = DEFAULT_FS):
    """``f(x, controls) -> y``: the effect run over the whole signal."""
    return lambda x, controls: apply_streamed(effect, x, controls, fs)


def model_processor(model):
    """``f(x, controls) -> y`` for a trained model, tiling the signal in L_out blocks."""
    return lambda x, controls: model.predict_stream(x, np.asarray(controls.normalized))


@dataclass
class StepCell:
    threshold: float
    attack_release: float
    ratio: float
    signal: StepSignal
    predicted: np.ndarray
    target: np.ndarray

    @property
    def diff(self) -> np.ndarray:
        return self.predicted - self.target

    def localized(self, window_ms: float = 5.0) -> bool:
        """Largest ``|diff|`` within ``window_ms`` of a discontinuity dominates the rest."""
        near = _near_edges(self.signal, window_ms)
        d = np.abs(self.diff)
        if near.all():
            return True
        return bool(d[near].max() >= d[~near].max())

    def plateau_level_db(self, which: str = "predicted", span: int = 512) -> float:
        """RMS level (dB) over the last ``span`` samples before the falling edge."""
        x = self.predicted if which == "predicted" else self.target
        fall = self.signal.edges[1]
        seg = x[max(fall - span, self.signal.edges[0]):fall]
        return 10.0 * math.log10(max(float(np.mean(seg ** 2)), 1e-30))

    def onset_error_db(self, span: int = 512) -> float:
        return self.plateau_level_db("predicted", span) - self.plateau_level_db("target", span)


def _near_edges(sig: StepSignal, window_ms: float) -> np.ndarray:
    w = int(round(window_ms * 1e-3 * sig.fs))
    idx = np.arange(sig.samples.size)
    near = np.zeros(sig.samples.size, dtype=bool)
    for e in sig.edges:
        near |= np.abs(idx - e) <= w
    return near


def step_response_diag(processor, reference, effect: EffectSpec, T_values, AR_values,
                       ratio: float = 3.0, L: int = 4096, fs: float = DEFAULT_FS,
                       base_db: float = STEP_BASE_DB, high_db: float = STEP_HIGH_DB):
    """Run ``processor`` and ``reference`` over the step signal for each (T, A=R) cell.

    Returns a row-major list of :class:`StepCell` (thresholds outer).
    """
    if "threshold" not in effect.knob_names:
        raise ConfigError(f"{effect.name} has no threshold/ratio/attack/release knobs")
    sig = step_signal(L, fs, base_db, high_db)
    cells = []
    for T in T_values:
        for ar in AR_values:
            ctl = normalize_controls((T, ratio, ar, ar), effect)
            pred = np.asarray(processor(sig.samples, ctl), dtype=np.float64)
            tgt = np.asarray(reference(sig.samples, ctl), dtype=np.float64)
            if pred.shape != sig.samples.shape or tgt.shape != sig.samples.shape:
                raise DataError(f"processor returned {pred.shape}/{tgt.shape}, expected ({L},)")
            cells.append(StepCell(float(T), float(ar), float(ratio), sig, pred, tgt))
    return cells


def write_step_csv(path, cells) -> None:
    lines = ["threshold,attack_release,ratio,n,input,predicted,target,diff"]
    for c in cells:
        d = c.diff
        for n in range(c.signal.samples.size):
            lines.append(f"{c.threshold:g},{c.attack_release:g},{c.ratio:g},{n},"
                         f"{c.signal.samples[n]:.9e},{c.predicted[n]:.9e},"
                         f"{c.target[n]:.9e},{d[n]:.9e}")
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# power spectra
# ---------------------------------------------------------------------------

@dataclass
class SpectraPair:
    freq: np.ndarray
    db_a: np.ndarray
    db_b: np.ndarray

    def band_mean_db(self, lo: float, hi: float) -> tuple[float, float]:
        sel = (self.freq >= lo) & (self.freq < hi)
        if not sel.any():
            raise ConfigError(f"no spectrum bins in [{lo}, {hi}) Hz")
        return float(self.db_a[sel].mean()), float(self.db_b[sel].mean())


def spectra_diag(a, b, fs: float = DEFAULT_FS, nperseg: int = 4096) -> SpectraPair:
    """Averaged periodograms (Hann, 50% overlap) of two equal-length signals, in dB."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or a.shape != b.shape:
        raise DataError(f"spectra need two equal-length 1-D signals, got {a.shape} and {b.shape}")
    if a.size < 2 * fs:
        raise DataError(f"spectra need at least 2 s of audio, got {a.size / fs:.3f} s")
    kw = dict(fs=fs, window="hann", nperseg=nperseg, noverlap=nperseg // 2)
    f, pa = welch(a, **kw)
    _, pb = welch(b, **kw)
    tiny = 1e-30
    return SpectraPair(f, 10.0 * np.log10(pa + tiny), 10.0 * np.log10(pb + tiny))


def write_spectra_csv(path, sp: SpectraPair) -> None:
    lines = ["freq,dB_a,dB_b"]
    lines += [f"{f:.6f},{x:.6f},{y:.6f}" for f, x, y in zip(sp.freq, sp.db_a, sp.db_b)]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# raster plots (binary PPM, no plotting dependency)
# ---------------------------------------------------------------------------

_COLORS = [(31, 119, 180), (214, 39, 40), (44, 160, 44), (255, 127, 14), (148, 103, 189)]


def plot_lines_ppm(path, series, width: int = 800, height: int = 300, log_y: bool = False) -> None:
    """Draw each 1-D array in ``series`` as a polyline on a shared y-scale."""
    if not series:
        raise ConfigError("nothing to plot")
    ys = [np.asarray(s, dtype=np.float64) for s in series]
    if log_y:
        ys = [np.log10(np.maximum(y, 1e-30)) for y in ys]
    lo = min(float(y.min()) for y in ys)
    hi = max(float(y.max()) for y in ys)
    if hi == lo:
        hi = lo + 1.0
    img = np.full((height, width, 3), 255, dtype=np.uint8)
    for k, y in enumerate(ys):
        color = _COLORS[k % len(_COLORS)]
        xs = np.linspace(0, width - 1, y.size) if y.size > 1 else np.zeros(1)
        rows = (height - 1) - (y - lo) / (hi - lo) * (height - 1)
        cols = np.clip(np.round(xs).astype(int), 0, width - 1)
        rows = np.clip(np.round(rows).astype(int), 0, height - 1)
        for i in range(len(cols)):
            r0 = rows[i - 1] if i else rows[i]
            a, b = sorted((r0, rows[i]))
            img[a:b + 1, cols[i]] = color
    header = f"P6 {width} {height} 255\n".encode("ascii")
    Path(path).write_bytes(header + img.tobytes())


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P6":
        raise DataError(f"{path}: not a binary PPM")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4], dtype=np.uint8)[:w * h * 3].reshape(h, w, 3)
