"""Randomized probe signals and capture-corpus assembly.

The synthetic catalog supplies what a compressor needs to learn from:
large transients (steps, gates, bursts) across a wide dynamic range, and
broadband content (white/pink noise, sweeps). Every generated sample is
bounded by unit magnitude by construction: envelopes never exceed the
drawn amplitude (at most 1), noise is uniform in [-1, 1] and only passed
through convex (one-pole) smoothing, and pink noise is peak-normalized.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .effects import DEFAULT_FS
from .errors import ConfigError, DataError, ShortfallError
from .wavio import read_wav, write_wav

log = logging.getLogger(__name__)

KINDS = (
    "decaying-sine",
    "swept-sine",
    "noise-burst",
    "amplitude-ramp",
    "step-gate",
    "pink-noise-segment",
)

# Ranges the random catalog draws from. Levels are dB re full scale and
# drawn uniformly in dB; frequencies and cutoffs are drawn log-uniformly.
RANGES = {
    "level_db": (-60.0, 0.0),
    "freq_hz": (20.0, 20000.0),
    "cutoff_hz": (100.0, 20000.0),
    "decay_rate": (10.0, 100.0),  # 1/s -> 10-100 ms tails
    "onset": (0.0, 0.5),  # fraction of the signal length
    "duration": (0.1, 0.6),  # fraction of the signal length
    "noise_mix": (0.0, 1.0),
}

CORPUS_SECONDS = 900.0


@dataclass
class SynthSpec:
    kind: str
    params: dict = field(default_factory=dict)
    length: int = 8192
    fs: float = DEFAULT_FS


@dataclass(frozen=True)
class CorpusFile:
    path: Path
    duration: float
    fs: float
    provenance: str  # "music" or "synthetic"
    sha256: str = ""


def _db(level_db):
    return 10.0 ** (level_db / 20.0)


def _uniform_noise(rng, n):
    return rng.uniform(-1.0, 1.0, n)


def _one_pole_lowpass(x, cutoff_hz, fs):
    from scipy.signal import lfilter

    a = math.exp(-2.0 * math.pi * min(cutoff_hz, 0.49 * fs) / fs)
    # y[n] = (1 - a) x[n] + a y[n-1]: a convex combination, so |y| <= max|x|
    return lfilter([1.0 - a], [1.0, -a], x)


def _pink(rng, n):
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.arange(spec.size, dtype=float)
    f[0] = 1.0
    spec /= np.sqrt(f)
    spec[0] = 0.0
    x = np.fft.irfft(spec, n)
    peak = np.max(np.abs(x))
    return x / peak if peak > 0 else x


def _gen_decaying_sine(p, t, rng):
    t0 = p["onset"] * t[-1] if t.size else 0.0
    tau = np.maximum(t - t0, 0.0)
    env = p["amplitude"] * np.exp(-p["decay_rate"] * tau) * (t >= t0)
    return env * np.sin(2 * np.pi * p["freq"] * tau + p["phase"])


def _gen_swept_sine(p, t, rng):
    T = max(t[-1], 1e-12)
    f0, f1 = p["start_freq"], p["end_freq"]
    k = math.log(f1 / f0) / T
    if abs(k) < 1e-12:
        phase = 2 * np.pi * f0 * t
    else:
        phase = 2 * np.pi * f0 * (np.exp(k * t) - 1.0) / k
    a0, a1 = p["start_amplitude"], p["end_amplitude"]
    env = a0 * (a1 / a0) ** (t / T)
    return env * np.sin(phase + p["phase"])


def _gen_noise_burst(p, t, rng):
    n = t.size
    x = _one_pole_lowpass(_uniform_noise(rng, n), p["cutoff"], p["fs"])
    t0 = p["onset"] * t[-1]
    t1 = t0 + p["duration"] * t[-1]
    gate = (t >= t0) & (t < t1)
    env = p["noise_level"] * np.exp(-p["decay_rate"] * np.maximum(t - t0, 0.0))
    return x * env * gate


def _gen_amplitude_ramp(p, t, rng):
    T = max(t[-1], 1e-12)
    t0 = p["onset"] * T
    t1 = min(t0 + p["duration"] * T, T)
    frac = np.clip((t - t0) / max(t1 - t0, 1e-12), 0.0, 1.0)
    a0, a1 = p["start_amplitude"], p["end_amplitude"]
    env = a0 * (a1 / a0) ** frac
    return env * np.sin(2 * np.pi * p["freq"] * t + p["phase"])


def _gen_step_gate(p, t, rng):
    T = max(t[-1], 1e-12)
    t0 = p["onset"] * T
    t1 = t0 + p["duration"] * T
    env = np.where((t >= t0) & (t < t1), p["high_amplitude"], p["low_amplitude"])
    m = p["noise_mix"]
    carrier = (1.0 - m) * np.sin(2 * np.pi * p["freq"] * t + p["phase"])
    if m > 0:
        carrier = carrier + m * _uniform_noise(rng, t.size)
    return env * carrier


def _gen_pink_segment(p, t, rng):
    T = max(t[-1], 1e-12)
    t0 = p["onset"] * T
    t1 = t0 + p["duration"] * T
    gate = (t >= t0) & (t < t1)
    return p["noise_level"] * _pink(rng, t.size) * gate


_GENERATORS = {
    "decaying-sine": _gen_decaying_sine,
    "swept-sine": _gen_swept_sine,
    "noise-burst": _gen_noise_burst,
    "amplitude-ramp": _gen_amplitude_ramp,
    "step-gate": _gen_step_gate,
    "pink-noise-segment": _gen_pink_segment,
}


def gen_signal(spec: SynthSpec, seed: int = 0) -> np.ndarray:
    """Render ``spec``; identical ``(spec, seed)`` gives identical samples."""
    if spec.kind not in _GENERATORS:
        raise ConfigError(f"unknown synth kind {spec.kind!r}; known: {list(KINDS)}")
    if spec.length <= 0 or spec.fs <= 0:
        raise ConfigError(f"length and fs must be positive, got {spec.length}, {spec.fs}")
    rng = np.random.default_rng(seed)
    t = np.arange(spec.length) / spec.fs
    p = dict(spec.params, fs=spec.fs)
    y = _GENERATORS[spec.kind](p, t, rng)
    return np.asarray(y, dtype=np.float64)


def _log_uniform(rng, lo, hi):
    return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))


def random_synth_spec(rng, length: int = 8192, fs: float = DEFAULT_FS) -> SynthSpec:
    kind = KINDS[int(rng.integers(len(KINDS)))]
    fmax = min(RANGES["freq_hz"][1], 0.45 * fs)
    fmin = min(RANGES["freq_hz"][0], fmax / 2)
    level = lambda: _db(rng.uniform(*RANGES["level_db"]))  # noqa: E731
    freq = lambda: _log_uniform(rng, fmin, fmax)  # noqa: E731
    phase = lambda: float(rng.uniform(0.0, 2 * np.pi))  # noqa: E731
    onset = lambda: float(rng.uniform(*RANGES["onset"]))  # noqa: E731
    duration = lambda: float(rng.uniform(*RANGES["duration"]))  # noqa: E731

    if kind == "decaying-sine":
        params = dict(amplitude=level(), freq=freq(), phase=phase(), onset=onset(),
                      decay_rate=float(rng.uniform(*RANGES["decay_rate"])))
    elif kind == "swept-sine":
        params = dict(start_amplitude=level(), end_amplitude=level(),
                      start_freq=freq(), end_freq=freq(), phase=phase())
    elif kind == "noise-burst":
        params = dict(noise_level=level(), onset=onset(), duration=duration(),
                      cutoff=_log_uniform(rng, RANGES["cutoff_hz"][0], min(RANGES["cutoff_hz"][1], 0.49 * fs)),
                      decay_rate=float(rng.uniform(*RANGES["decay_rate"])))
    elif kind == "amplitude-ramp":
        params = dict(start_amplitude=level(), end_amplitude=level(), freq=freq(),
                      phase=phase(), onset=onset(), duration=duration())
    elif kind == "step-gate":
        a, b = sorted((level(), level()))
        params = dict(low_amplitude=a, high_amplitude=b, onset=onset(), duration=duration(),
                      freq=freq(), phase=phase(),
                      noise_mix=float(rng.uniform(*RANGES["noise_mix"])))
    else:
        params = dict(noise_level=level(), onset=onset(), duration=duration())
    return SynthSpec(kind, params, length, fs)


def synth_stream(rng, seconds: float, fs: float = DEFAULT_FS,
                 piece_seconds=(0.1, 1.0)) -> np.ndarray:
    """Concatenate random catalog signals until ``seconds`` of audio exist."""
    total = int(round(seconds * fs))
    pieces, have = [], 0
    while have < total:
        n = int(rng.uniform(*piece_seconds) * fs)
        n = max(1, min(n, total - have))
        spec = random_synth_spec(rng, n, fs)
        pieces.append(gen_signal(spec, int(rng.integers(2**63))))
        have += n
    return np.concatenate(pieces) if pieces else np.zeros(0)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def assemble_corpus(sources, synth_count: int, rng, out_dir, *, fs: float | None = None,
                    file_seconds: float = CORPUS_SECONDS, synth_seconds=(1.0, 10.0),
                    format: str = "float32") -> list[CorpusFile]:
    """Concatenate music files and synthetic signals, cut into fixed-length files.

    Material is shuffled at the item level, concatenated, and divided into
    unique files of exactly ``file_seconds``; any remainder is logged and
    dropped. Writes ``manifest.txt`` next to the files.
    """
    items = []
    for src in sources:
        x, src_fs = read_wav(src)
        if fs is None:
            fs = src_fs
        elif src_fs != fs:
            raise DataError(f"{src}: sample rate {src_fs} differs from corpus rate {fs}")
        items.append((x, "music"))
    fs = DEFAULT_FS if fs is None else fs
    for _ in range(synth_count):
        n = max(1, int(rng.uniform(*synth_seconds) * fs))
        spec = random_synth_spec(rng, n, fs)
        items.append((gen_signal(spec, int(rng.integers(2**63))), "synthetic"))

    order = rng.permutation(len(items)) if items else []
    stream = [items[i][0] for i in order]
    labels = [np.full(items[i][0].size, items[i][1] == "music") for i in order]
    total = sum(x.size for x in stream)
    per_file = int(round(file_seconds * fs))
    n_files = total // per_file
    if n_files == 0:
        raise ShortfallError(
            f"need {per_file} samples ({file_seconds} s) for one file, have {total}")
    remainder = total - n_files * per_file
    if remainder:
        log.info("discarding %d samples (%.3f s) of remainder", remainder, remainder / fs)

    audio = np.concatenate(stream)
    is_music = np.concatenate(labels)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for i in range(n_files):
        seg = slice(i * per_file, (i + 1) * per_file)
        path = out_dir / f"corpus_{i:04d}.wav"
        write_wav(path, audio[seg], fs, format)
        prov = "music" if 2 * int(is_music[seg].sum()) >= per_file else "synthetic"
        files.append(CorpusFile(path, per_file / fs, fs, prov, _sha256(path)))
    write_manifest(out_dir / "manifest.txt", files)
    return files


def write_manifest(path, files) -> None:
    with open(path, "w") as f:
        for cf in files:
            f.write(f"{cf.path}\t{cf.duration:.6f}\t{cf.provenance}\t{cf.sha256}\n")


def read_manifest(path) -> list[CorpusFile]:
    files = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise DataError(f"{path}:{lineno}: expected 4 tab-separated fields")
        p, dur, prov, sha = parts
        if prov not in ("music", "synthetic"):
            raise DataError(f"{path}:{lineno}: unknown provenance {prov!r}")
        fs = read_wav(p)[1] if Path(p).exists() else float("nan")
        files.append(CorpusFile(Path(p), float(dur), fs, prov, sha))
    return files
