"""Window sampling for training: software effects on the fly, or recorded captures.

Two target modes:

* ``ST`` (streamed): the target is the slice of the effect applied to the
  whole stream, aligned with the last ``L_out`` input samples.
* ``WT`` (windowed): the effect restarts at the window start and only the
  last ``L_out`` samples are kept.
"""

from __future__ import annotations

import itertools
import logging
import math
import re
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .effects import (DEFAULT_FS, ControlVector, EffectSpec, apply_streamed, apply_windowed_rows,
                      denormalize_controls, normalize_controls)
from .errors import ConfigError, DataError
from .wavio import read_wav

log = logging.getLogger(__name__)


@dataclass
class DatasetSpec:
    L_in: int = 4096
    L_out: int = 0  # 0 -> L_in // 4
    target_mode: str = "WT"
    knob_sampling: str = "uniform"  # or "grid"
    grid_n: int = 10
    fs: float = DEFAULT_FS
    phase_flip: bool = True

    def __post_init__(self):
        if self.L_out == 0:
            self.L_out = self.L_in // 4
        if not 0 < self.L_out <= self.L_in:
            raise ConfigError(f"need 0 < L_out <= L_in, got {self.L_out}, {self.L_in}")
        if self.target_mode not in ("ST", "WT"):
            raise ConfigError(f"target_mode must be ST or WT, got {self.target_mode!r}")
        if self.knob_sampling not in ("grid", "uniform"):
            raise ConfigError(f"knob_sampling must be grid or uniform, got {self.knob_sampling!r}")
        if self.grid_n < 2:
            raise ConfigError("grid_n must be >= 2")

    @property
    def lookback(self) -> int:
        return self.L_in - self.L_out


@dataclass
class WindowPair:
    input: np.ndarray
    target: np.ndarray
    controls: ControlVector
    item: int = -1
    start: int = -1


@dataclass
class Batch:
    inputs: np.ndarray  # (B, L_in)
    targets: np.ndarray  # (B, L_out)
    knobs: np.ndarray  # (B, n_knobs), normalized
    pairs: list = field(default_factory=list, repr=False)

    def __len__(self):
        return self.inputs.shape[0]


# ---------------------------------------------------------------------------
# knob grids
# ---------------------------------------------------------------------------


def knob_grid(spec: EffectSpec, n) -> list[ControlVector]:
    """Cartesian grid, endpoints included, equally spaced in raw units.

    ``n`` is a count per knob, or one count for every knob.
    """
    counts = [n] * spec.n_knobs if isinstance(n, int) else list(n)
    if len(counts) != spec.n_knobs or any(c < 2 for c in counts):
        raise ConfigError(f"need one count >= 2 per knob of {spec.name}, got {n}")
    axes = [np.linspace(k.lo, k.hi, c) for k, c in zip(spec.knobs, counts)]
    return [normalize_controls(vals, spec) for vals in itertools.product(*axes)]


def draw_controls(effect: EffectSpec, spec: DatasetSpec, rng) -> ControlVector:
    if spec.knob_sampling == "grid":
        idx = rng.integers(spec.grid_n, size=effect.n_knobs)
        raw = [np.linspace(k.lo, k.hi, spec.grid_n)[i] for k, i in zip(effect.knobs, idx)]
        return normalize_controls(raw, effect)
    return denormalize_controls(rng.uniform(-0.5, 0.5, effect.n_knobs), effect)


# ---------------------------------------------------------------------------
# sources
# ---------------------------------------------------------------------------


class EffectSource:
    """A software effect applied on the fly to an in-memory corpus.

    ``fixed_controls`` pins every window to one setting (single-setting runs).
    ``st_cache`` keeps that many whole-item streamed outputs for reuse.
    """

    def __init__(self, effect: EffectSpec, corpus, fs: float = DEFAULT_FS,
                 fixed_controls: ControlVector | None = None, st_cache: int = 0, name: str = ""):
        if not effect.invocable:
            raise ConfigError(f"{effect.name} has no software oracle; use a CaptureSource")
        self.effect = effect
        self.corpus = [np.ascontiguousarray(c, dtype=np.float64) for c in corpus]
        if not self.corpus:
            raise DataError("empty corpus")
        self.fs = fs
        self.fixed_controls = fixed_controls
        self.name = name or "effect"
        self.draw_log: list | None = None
        self._st = OrderedDict()
        self._st_cache = st_cache

    @property
    def n_knobs(self):
        return self.effect.n_knobs

    def streamed(self, item: int, controls: ControlVector, stop: int) -> np.ndarray:
        """Streamed output of corpus item ``item`` up to sample ``stop``."""
        if self._st_cache:
            key = (item, controls.raw)
            y = self._st.get(key)
            if y is None:
                y = apply_streamed(self.effect, self.corpus[item], controls, self.fs)
                self._st[key] = y
                if len(self._st) > self._st_cache:
                    self._st.popitem(last=False)
            else:
                self._st.move_to_end(key)
            return y[:stop]
        # causal: the prefix of the streamed output only needs the prefix input
        return apply_streamed(self.effect, self.corpus[item][:stop], controls, self.fs)

    def fingerprints(self) -> set:
        return {hash(c.tobytes()) for c in self.corpus}


@dataclass
class PairedCapture:
    input: np.ndarray
    output: np.ndarray
    controls: ControlVector
    alignment_offset: int = 0
    name: str = ""

    def __post_init__(self):
        n = min(self.input.size, self.output.size - self.alignment_offset)
        if n <= 0:
            raise DataError(f"capture {self.name!r}: no overlap after offset {self.alignment_offset}")
        self.input = np.ascontiguousarray(self.input[:n], dtype=np.float64)
        self.output = np.ascontiguousarray(
            self.output[self.alignment_offset:self.alignment_offset + n], dtype=np.float64)


_KV = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)=(.+)$")


def parse_capture_name(path, effect: EffectSpec) -> ControlVector:
    """Controls from ``<stem>__<knob>=<value>__...wav``."""
    parts = Path(path).stem.split("__")[1:]
    values = {}
    for part in parts:
        m = _KV.match(part)
        if not m:
            raise DataError(f"{path}: malformed metadata field {part!r}")
        values[m.group(1)] = float(m.group(2))
    missing = [k for k in effect.knob_names if k not in values]
    if missing:
        raise DataError(f"{path}: missing knob values {missing}")
    return normalize_controls([values[k] for k in effect.knob_names], effect)


def capture_name(stem: str, controls: ControlVector) -> str:
    fields_ = "__".join(f"{k}={v:g}" for k, v in controls.as_dict().items())
    return f"{stem}__{fields_}.wav"


def estimate_offset(x, y, max_lag: int = 4096, n: int = 1 << 17) -> int:
    """Lag (samples) by which ``y`` trails ``x``, from cross-correlation."""
    from scipy.signal import correlate

    n = min(n, x.size, y.size - max_lag) if y.size > max_lag else min(n, x.size)
    a = np.asarray(x[:n], dtype=np.float64)
    b = np.asarray(y[:n + max_lag], dtype=np.float64)
    c = correlate(b, a, mode="valid", method="fft")
    return int(np.argmax(np.abs(c[:max_lag + 1])))


class CaptureSource:
    """Recorded input/output pairs, e.g. an analog unit at several settings."""

    def __init__(self, effect: EffectSpec, captures: list[PairedCapture], name: str = ""):
        if not captures:
            raise DataError("no captures")
        self.effect = effect
        self.captures = captures
        self.name = name or "captures"
        self.draw_log: list | None = None

    @property
    def n_knobs(self):
        return self.effect.n_knobs

    @classmethod
    def from_manifest(cls, path, effect: EffectSpec, align: bool = False, max_lag: int = 4096):
        """Manifest lines: ``input.wav<TAB>output.wav[<TAB>offset]``.

        Controls come from the output filename. With ``align`` and no explicit
        offset, the offset is estimated by cross-correlation.
        """
        base = Path(path).parent
        caps = []
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) not in (2, 3):
                raise DataError(f"{path}:{lineno}: expected input, output[, offset]")
            ip, op = (base / parts[0]), (base / parts[1])
            x, fx = read_wav(ip)
            y, fy = read_wav(op)
            if fx != fy:
                raise DataError(f"{path}:{lineno}: sample rates differ ({fx} vs {fy})")
            if len(parts) == 3:
                off = int(parts[2])
            else:
                off = estimate_offset(x, y, max_lag) if align else 0
            caps.append(PairedCapture(x, y, parse_capture_name(op, effect), off, op.name))
        return cls(effect, caps, name=str(path))

    def fingerprints(self) -> set:
        return {hash(c.input.tobytes()) for c in self.captures}


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def _lengths(source):
    if isinstance(source, EffectSource):
        return [c.size for c in source.corpus]
    return [c.input.size for c in source.captures]


def _draw(source, spec: DatasetSpec, rng, controls=None):
    """Pick (item, start, controls, flip) for one window."""
    lengths = np.asarray(_lengths(source))
    valid = lengths - spec.L_in + 1
    if np.all(valid <= 0):
        raise DataError(f"window length {spec.L_in} exceeds every source item "
                        f"(longest {lengths.max()})")
    valid = np.maximum(valid, 0)
    item = int(rng.choice(valid.size, p=valid / valid.sum())) if valid.size > 1 else 0
    start = int(rng.integers(valid[item]))
    if controls is None:
        if isinstance(source, EffectSource):
            controls = source.fixed_controls or draw_controls(source.effect, spec, rng)
        else:
            controls = source.captures[item].controls
    flip = bool(rng.random() < 0.5) if spec.phase_flip else False
    return item, start, controls, flip


def _materialize(source, spec: DatasetSpec, draws) -> list[WindowPair]:
    if source.draw_log is not None:
        source.draw_log.extend((source.name, d[0], d[1]) for d in draws)
    pairs = []
    if isinstance(source, CaptureSource):
        if spec.target_mode != "ST":
            raise ConfigError("recorded captures only provide streamed (ST) targets")
        for item, start, ctl, _ in draws:
            cap = source.captures[item]
            x = cap.input[start:start + spec.L_in].copy()
            y = cap.output[start + spec.lookback:start + spec.L_in].copy()
            pairs.append(WindowPair(x, y, ctl, item, start))
    elif spec.target_mode == "WT":
        inputs = np.stack([source.corpus[i][s:s + spec.L_in] for i, s, _, _ in draws])
        targets = apply_windowed_rows(source.effect, inputs, [d[2] for d in draws],
                                      source.fs, spec.L_out)
        pairs = [WindowPair(inputs[j].copy(), targets[j].copy(), d[2], d[0], d[1])
                 for j, d in enumerate(draws)]
    else:
        for item, start, ctl, _ in draws:
            x = source.corpus[item][start:start + spec.L_in].copy()
            y = source.streamed(item, ctl, start + spec.L_in)[-spec.L_out:].copy()
            pairs.append(WindowPair(x, y, ctl, item, start))
    for pair, d in zip(pairs, draws):
        if d[3]:
            pair.input = -pair.input
            pair.target = -pair.target
    return pairs


def sample_window(source, spec: DatasetSpec, rng) -> WindowPair:
    return _materialize(source, spec, [_draw(source, spec, rng)])[0]


def _to_batch(pairs) -> Batch:
    return Batch(np.stack([p.input for p in pairs]), np.stack([p.target for p in pairs]),
                 np.array([p.controls.normalized for p in pairs]), pairs)


_warned_sequential = False


def make_batch(source, spec: DatasetSpec, batch_size: int, rng, sequential: bool = False) -> Batch:
    """Draw a mini-batch.

    The default is maximal shuffling: every window gets its own location and
    its own freshly drawn controls. ``sequential=True`` instead slices
    consecutive windows from one place at one setting; it is kept only as
    the known-unstable baseline for comparison.
    """
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    if not sequential:
        draws = [_draw(source, spec, rng) for _ in range(batch_size)]
        return _to_batch(_materialize(source, spec, draws))

    global _warned_sequential
    if not _warned_sequential:
        log.warning("sequential fixed-knob batches are the unstable baseline mode")
        _warned_sequential = True
    span = spec.L_in + (batch_size - 1) * spec.L_out
    lengths = np.asarray(_lengths(source))
    if np.all(lengths < span):
        raise DataError(f"sequential batch needs {span} samples; longest item has {lengths.max()}")
    probe = DatasetSpec(span, spec.L_out, spec.target_mode, spec.knob_sampling, spec.grid_n,
                        spec.fs, spec.phase_flip)
    item, start, ctl, flip = _draw(source, probe, rng)
    draws = [(item, start + j * spec.L_out, ctl, flip) for j in range(batch_size)]
    return _to_batch(_materialize(source, spec, draws))


def phase_flip_augment(pair: WindowPair, rng, force: bool | None = None) -> WindowPair:
    """Negate input and target together with probability 1/2."""
    flip = (rng.random() < 0.5) if force is None else force
    if not flip:
        return pair
    return WindowPair(-pair.input, -pair.target, pair.controls, pair.item, pair.start)


def fixed_batches(source, spec: DatasetSpec, n_batches: int, batch_size: int, seed: int):
    """A reproducible list of batches (validation sets)."""
    rng = np.random.default_rng(seed)
    return [make_batch(source, spec, batch_size, rng) for _ in range(n_batches)]


# ---------------------------------------------------------------------------
# streamed vs windowed error
# ---------------------------------------------------------------------------


def lookback_error_curve(effect: EffectSpec, controls: ControlVector, corpus, lookbacks,
                         L_out: int, fs: float = DEFAULT_FS, min_seconds: float = 60.0,
                         chunk: int = 64):
    """MAE between windowed and streamed targets for each lookback.

    Every lookback is evaluated on the same output blocks: consecutive
    ``L_out`` blocks starting after the largest lookback.
    """
    lookbacks = [int(v) for v in lookbacks]
    if lookbacks != sorted(lookbacks) or (lookbacks and lookbacks[0] < 0):
        raise ConfigError("lookbacks must be non-negative and sorted ascending")
    x = np.ascontiguousarray(corpus, dtype=np.float64)
    first = max(lookbacks)
    n_blocks = (x.size - first) // L_out
    if n_blocks * L_out < min_seconds * fs:
        raise DataError(f"corpus gives {n_blocks * L_out / fs:.1f} s of output blocks; "
                        f"need >= {min_seconds} s")
    st = apply_streamed(effect, x, controls, fs)
    starts = first + L_out * np.arange(n_blocks)
    ref = np.stack([st[s:s + L_out] for s in starts])
    curve = []
    for lb in lookbacks:
        err = 0.0
        for c0 in range(0, n_blocks, chunk):
            blk = starts[c0:c0 + chunk]
            wins = np.stack([x[s - lb:s + L_out] for s in blk])
            wt = apply_windowed_rows(effect, wins, controls, fs, L_out)
            err += float(np.abs(wt - ref[c0:c0 + chunk]).sum())
        curve.append((lb, err / ref.size))
    return curve


def fit_exponential(curve, floor: float = 1e-12, lo: float = 1e-8, hi: float = 1e-2):
    """Least-squares fit of ``MAE ~ C exp(-k * lookback)`` in log space.

    Only points with ``lo <= MAE <= hi`` (the clean exponential regime, above
    rounding noise and past the initial transient) enter the fit.
    """
    pts = [(lb, m) for lb, m in curve if max(lo, floor) <= m <= hi]
    if len(pts) < 2:
        raise DataError("fewer than two curve points in the fitting range")
    lb = np.array([p[0] for p in pts], dtype=float)
    logm = np.log([p[1] for p in pts])
    slope, icept = np.polyfit(lb, logm, 1)
    return math.exp(icept), -slope


def recommend_lookback(C: float, k: float, target: float) -> int:
    """Smallest lookback at which the fitted curve drops to ``target``."""
    if k <= 0:
        raise DataError("fitted curve does not decay")
    return max(0, int(math.ceil(math.log(C / target) / k)))


def write_curve_csv(path, curve) -> None:
    with open(path, "w") as f:
        f.write("lookback,mae\n")
        for lb, m in curve:
            f.write(f"{lb},{m:.9e}\n")
