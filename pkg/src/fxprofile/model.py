"""Conditioned spectral autoencoder operating end to end on waveforms.

Layout::

    x (L_in) --conv1d(cos/sin banks)--> re, im --> |.|, angle
         mag  --FC path (frames -> 64 -> 32 -> 16 | +knobs merge | 16 -> 32 -> 64 -> F_out)
                --> mask, times cropped input mag      (multiplicative skip)
         phase--FC path (same shape)                   + cropped input phase (additive skip)
    mag*cos(phase), mag*sin(phase) --conv1d_transpose--> overlap-add --> last L_out samples

FC layers act along the frame axis and share weights across frequency bins.
Analysis frames are right-aligned to the input, so the last frame ends on
the last input sample; the output frames are the last ``F_out`` of them.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .autodiff import Parameter, Tensor, load_checkpoint, no_grad, ops, resolve_dtype, save_checkpoint
from .errors import ConfigError, DataError, ValidationError


@dataclass
class ModelConfig:
    L_in: int = 4096
    L_out: int = 1024
    n_knobs: int = 4
    frame: int = 1024
    hop: int = 384
    base_width: int = 64
    depth: int = 7
    knob_hidden: int = 0  # 0 -> bottleneck width
    knob_encoding: str = "continuous"  # or "onehot"
    onehot_levels: int = 10
    eps: float = 1e-7
    out_init_scale: float = 0.1  # mag path; the phase path output starts at zero
    phase_out_init_scale: float = 0.0
    # FC paths see mag * (2 / frame), so a full-scale sinusoid reads ~1
    normalize_mag_features: bool = True
    precision: int = 32
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.L_out < self.L_in:
            raise ConfigError(f"need 0 < L_out < L_in, got L_in={self.L_in}, L_out={self.L_out}")
        if not 1 <= self.hop < self.frame:
            raise ConfigError(f"need 1 <= hop < frame, got hop={self.hop}, frame={self.frame}")
        if self.L_in < self.frame:
            raise ConfigError(f"L_in={self.L_in} shorter than one frame ({self.frame})")
        if self.depth < 3 or self.depth % 2 == 0:
            raise ConfigError(f"depth must be odd and >= 3, got {self.depth}")
        if self.base_width >> (self.n_encoder - 1) < 1:
            raise ConfigError(f"base_width {self.base_width} too small for depth {self.depth}")
        if self.knob_encoding not in ("continuous", "onehot"):
            raise ConfigError(f"unknown knob_encoding {self.knob_encoding!r}")
        resolve_dtype(self.precision)

    @property
    def n_encoder(self) -> int:
        return (self.depth - 1) // 2

    @property
    def widths(self) -> list[int]:
        return [self.base_width >> i for i in range(self.n_encoder)]

    @property
    def bottleneck(self) -> int:
        return self.widths[-1]

    @property
    def merge_width(self) -> int:
        return self.knob_hidden or self.bottleneck

    @property
    def n_bins(self) -> int:
        return self.frame // 2 + 1

    @property
    def frames_in(self) -> int:
        return (self.L_in - self.frame) // self.hop + 1

    @property
    def frame_offset(self) -> int:
        return (self.L_in - self.frame) % self.hop

    @property
    def frames_out(self) -> int:
        return min(self.frames_in, -(-self.L_out // self.hop))

    @property
    def knob_features(self) -> int:
        return self.n_knobs * (self.onehot_levels if self.knob_encoding == "onehot" else 1)

    @property
    def dtype(self):
        return resolve_dtype(self.precision)

    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in asdict(self).items())

    @classmethod
    def from_text(cls, text: str) -> "ModelConfig":
        types = {f.name: f.type for f in fields(cls)}
        kw = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, val = line.partition("=")
            key = key.strip()
            if not sep or key not in types:
                raise ConfigError(f"model config line {lineno}: unknown or malformed {line!r}")
            kw[key] = _coerce(types[key], val.strip())
        return cls(**kw)


def _coerce(typ, val):
    typ = typ if isinstance(typ, str) else typ.__name__
    if typ == "int":
        return int(val)
    if typ == "float":
        return float(val)
    if typ == "bool":
        if val not in ("True", "False"):
            raise ConfigError(f"expected True or False, got {val!r}")
        return val == "True"
    return val


def dft_banks(frame: int):
    """Analysis banks (cos, -sin) of shape (frame/2+1, frame).

    Row ``k`` correlates with ``exp(-2*pi*i*k*n/frame)``; the two banks give
    the real and imaginary parts of the DFT.
    """
    k = np.arange(frame // 2 + 1)[:, None]
    n = np.arange(frame)[None, :]
    ang = 2 * np.pi * ((k * n) % frame) / frame
    return np.cos(ang), -np.sin(ang)


def idft_banks(frame: int):
    """Synthesis banks inverting ``dft_banks`` for real signals."""
    cos_b, msin_b = dft_banks(frame)
    w = np.full(frame // 2 + 1, 2.0 / frame)
    w[0] = 1.0 / frame
    if frame % 2 == 0:
        w[-1] = 1.0 / frame
    # x[n] = sum_k w_k (re_k cos - im_k sin) with im_k = -sum x sin
    return cos_b * w[:, None], msin_b * w[:, None]


def init_dft_weights(frame: int):
    """(analysis cos, analysis sin, synthesis cos, synthesis sin)."""
    ac, asn = dft_banks(frame)
    sc, ss = idft_banks(frame)
    return ac, asn, sc, ss


def param_count(cfg: ModelConfig) -> int:
    banks = 4 * cfg.n_bins * cfg.frame
    per_path = 0
    prev = cfg.frames_in
    for w in cfg.widths:
        per_path += prev * w + w
        prev = w
    per_path += (prev + cfg.knob_features) * cfg.merge_width + cfg.merge_width
    prev = cfg.merge_width
    for w in list(reversed(cfg.widths))[1:]:
        per_path += prev * w + w
        prev = w
    per_path += prev * cfg.frames_out + cfg.frames_out
    return banks + 2 * per_path


class SpectralPlanes:
    __slots__ = ("mag", "phase")

    def __init__(self, mag: Tensor, phase: Tensor):
        self.mag = mag
        self.phase = phase


class Model:
    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        dt = cfg.dtype
        rng = np.random.default_rng(cfg.seed)
        ac, asn, sc, ss = init_dft_weights(cfg.frame)
        self.params: dict[str, Parameter] = {}
        self._add("analysis.cos", ac.astype(dt))
        self._add("analysis.sin", asn.astype(dt))
        for path in ("mag", "phase"):
            self._init_path(path, rng)
        self._add("synthesis.cos", sc.astype(dt))
        self._add("synthesis.sin", ss.astype(dt))
        span = (cfg.frames_out - 1) * cfg.hop + cfg.frame
        count = np.zeros(span)
        for f in range(cfg.frames_out):
            count[f * cfg.hop:f * cfg.hop + cfg.frame] += 1
        self._ola_norm = (1.0 / count).astype(dt)

    def _add(self, name, arr):
        if name in self.params:
            raise ConfigError(f"duplicate parameter {name!r}")
        self.params[name] = Parameter(np.ascontiguousarray(arr, dtype=self.cfg.dtype), name)

    def _linear(self, name, n_in, n_out, rng, scale=1.0):
        # variance-preserving init for ELU stacks
        std = scale * math.sqrt(2.0 / (n_in + n_out))
        self._add(f"{name}.W", rng.standard_normal((n_in, n_out)) * std)
        self._add(f"{name}.b", np.zeros(n_out))

    def _init_path(self, path, rng):
        cfg = self.cfg
        prev = cfg.frames_in
        for i, w in enumerate(cfg.widths):
            self._linear(f"{path}.enc{i}", prev, w, rng)
            prev = w
        self._linear(f"{path}.merge", prev + cfg.knob_features, cfg.merge_width, rng)
        prev = cfg.merge_width
        for i, w in enumerate(list(reversed(cfg.widths))[1:]):
            self._linear(f"{path}.dec{i}", prev, w, rng)
            prev = w
        scale = cfg.out_init_scale if path == "mag" else cfg.phase_out_init_scale
        self._linear(f"{path}.out", prev, cfg.frames_out, rng, scale=scale)

    # ------------------------------------------------------------------

    @property
    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def n_params(self) -> int:
        return sum(p.size for p in self.params.values() if p.trainable)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def _p(self, name):
        return self.params[name]

    def analysis(self, x: Tensor) -> SpectralPlanes:
        cfg = self.cfg
        if x.ndim != 2 or x.shape[1] != cfg.L_in:
            raise DataError(f"analysis expects (batch, {cfg.L_in}) input, got {x.shape}")
        re = ops.conv1d(x, self._p("analysis.cos"), cfg.hop, cfg.frame_offset)
        im = ops.conv1d(x, self._p("analysis.sin"), cfg.hop, cfg.frame_offset)
        power = ops.add(ops.hadamard(re, re), ops.hadamard(im, im))
        mag = ops.sqrt_eps(power, cfg.eps)
        phase = ops.atan2(im, re, cfg.eps)
        return SpectralPlanes(mag, phase)

    def knob_features(self, knobs) -> np.ndarray:
        cfg = self.cfg
        k = np.asarray(knobs, dtype=np.float64)
        if k.ndim != 2 or k.shape[1] != cfg.n_knobs:
            raise ValidationError(f"expected knobs of shape (batch, {cfg.n_knobs}), got {k.shape}")
        if np.any(k < -0.5) or np.any(k > 0.5) or not np.all(np.isfinite(k)):
            raise ValidationError("normalized knob values must lie in [-0.5, 0.5]")
        if cfg.knob_encoding == "onehot":
            lv = cfg.onehot_levels
            idx = np.rint((k + 0.5) * (lv - 1)).astype(int)
            oh = np.zeros((k.shape[0], cfg.n_knobs, lv))
            np.put_along_axis(oh, idx[..., None], 1.0, axis=2)
            k = oh.reshape(k.shape[0], -1)
        return k.astype(cfg.dtype)

    def autoencoder_path(self, path: str, plane: Tensor, knobs: Tensor) -> Tensor:
        """Run one FC path; returns the raw (pre-skip) output plane (B, bins, F_out)."""
        cfg = self.cfg
        if plane.ndim != 3 or plane.shape[2] != cfg.frames_in:
            raise DataError(f"{path} path expects (batch, bins, {cfg.frames_in}), got {plane.shape}")
        p = self._p
        h = plane
        skips = []
        for i in range(cfg.n_encoder):
            h = ops.elu(ops.affine(h, p(f"{path}.enc{i}.W"), p(f"{path}.enc{i}.b")))
            skips.append(h)
        kexp = ops.expand(knobs, 1, plane.shape[1])
        h = ops.elu(ops.affine(ops.concat([h, kexp], axis=-1),
                               p(f"{path}.merge.W"), p(f"{path}.merge.b")))
        if h.shape == skips[-1].shape:
            h = ops.add(h, skips[-1])
        for i, skip in enumerate(reversed(skips[:-1])):
            h = ops.elu(ops.affine(h, p(f"{path}.dec{i}.W"), p(f"{path}.dec{i}.b")))
            h = ops.add(h, skip)
        return ops.affine(h, p(f"{path}.out.W"), p(f"{path}.out.b"))

    def synthesis(self, mag: Tensor, phase: Tensor) -> Tensor:
        cfg = self.cfg
        want = (cfg.n_bins, cfg.frames_out)
        if mag.shape[1:] != want or phase.shape != mag.shape:
            raise DataError(f"synthesis expects planes (batch, {want[0]}, {want[1]})")
        re = ops.hadamard(mag, ops.cos(phase))
        im = ops.hadamard(mag, ops.sin(phase))
        y = ops.add(ops.conv1d_transpose(re, self._p("synthesis.cos"), cfg.hop),
                    ops.conv1d_transpose(im, self._p("synthesis.sin"), cfg.hop))
        y = ops.mul_const(y, self._ola_norm)
        return ops.slice(y, (slice(None), slice(y.shape[1] - cfg.L_out, None)))

    def forward(self, x, knobs):
        """Return ``(y_hat, M)``: (B, L_out) waveform and (B, bins, F_out) magnitude plane."""
        cfg = self.cfg
        x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=cfg.dtype))
        if x.ndim == 1:
            x = Tensor(x.data[None, :])
        kf = Tensor(self.knob_features(knobs))
        if kf.shape[0] != x.shape[0]:
            raise ValidationError(f"{x.shape[0]} inputs but {kf.shape[0]} knob vectors")
        planes = self.analysis(x)
        crop = (slice(None), slice(None), slice(cfg.frames_in - cfg.frames_out, None))
        feat = ops.scale(planes.mag, 2.0 / cfg.frame) if cfg.normalize_mag_features else planes.mag
        mask = ops.add_const(ops.elu(self.autoencoder_path("mag", feat, kf)), 1.0)
        mag_out = ops.hadamard(mask, ops.slice(planes.mag, crop))
        phase_out = ops.add(self.autoencoder_path("phase", planes.phase, kf),
                            ops.slice(planes.phase, crop))
        return self.synthesis(mag_out, phase_out), mag_out

    __call__ = forward

    def predict(self, x, knobs, batch_size: int = 64) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x))
        knobs = np.atleast_2d(np.asarray(knobs))
        out = []
        with no_grad():
            for i in range(0, x.shape[0], batch_size):
                y, _ = self.forward(x[i:i + batch_size], knobs[i:i + batch_size])
                out.append(y.data)
        return np.concatenate(out).astype(np.float64)

    def predict_stream(self, x, knobs) -> np.ndarray:
        """Tile a long signal: each L_out block is predicted from its own window
        (zero-padded on the left for the first blocks)."""
        cfg = self.cfg
        x = np.asarray(x, dtype=np.float64)
        n = x.size
        n_blocks = -(-n // cfg.L_out)
        look = cfg.L_in - cfg.L_out
        padded = np.concatenate([np.zeros(look), x, np.zeros(n_blocks * cfg.L_out - n)])
        wins = np.stack([padded[b * cfg.L_out:b * cfg.L_out + cfg.L_in] for b in range(n_blocks)])
        kn = np.repeat(np.atleast_2d(knobs), n_blocks, axis=0)
        return self.predict(wins, kn).reshape(-1)[:n]

    # ------------------------------------------------------------------

    def save(self, path, opt_state=None) -> Path:
        path = Path(path)
        save_checkpoint(path, self.parameters, opt_state)
        path.with_suffix(".cfg").write_text(self.cfg.to_text())
        return path

    def load_weights(self, path):
        arrays, opt_state = load_checkpoint(path)
        missing = set(self.params) - set(arrays)
        if missing:
            raise DataError(f"checkpoint lacks parameters {sorted(missing)}")
        for name, p in self.params.items():
            if arrays[name].shape != p.shape:
                raise DataError(f"{name}: checkpoint shape {arrays[name].shape} != {p.shape}")
            p.data = arrays[name].astype(self.cfg.dtype)
        return opt_state

    @classmethod
    def load(cls, path) -> "Model":
        path = Path(path)
        cfg = ModelConfig.from_text(path.with_suffix(".cfg").read_text())
        model = cls(cfg)
        model.load_weights(path)
        return model
