"""Flat ``key=value`` run configuration.

Top-level keys name the effect, seed and data; dotted keys reach into one of
the section dataclasses (``dataset.L_in``, ``model.base_width``,
``loss.lam``, ``train.epochs``) or pin a knob (``controls.threshold``, raw
units). Geometry, knob count and seeds of the model and trainer are derived
from the other sections so they cannot disagree.
"""

from __future__ import annotations

import dataclasses
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

from .dataset import DatasetSpec
from .effects import ControlVector, controls_from_dict, get_effect
from .errors import ConfigError
from .model import ModelConfig
from .train import LossConfig, TrainConfig

DATA_ENV = "FXPROFILE_DATA"

SECTIONS = {"dataset": DatasetSpec, "model": ModelConfig, "loss": LossConfig, "train": TrainConfig}
# filled in from other keys, never set directly
DERIVED = {"model": {"L_in", "L_out", "n_knobs", "seed"}, "train": {"seed"}}


@dataclass
class RunConfig:
    effect: str = "comp4c"
    seed: int = 0
    # corpus manifests (forge format) or capture manifests (input<TAB>output[<TAB>offset])
    train_manifest: str = ""
    val_manifest: str = ""
    capture_manifest: str = ""
    val_capture_manifest: str = ""
    align_captures: bool = False
    # used when no manifest is given: synthetic audio, val drawn from another seed
    synth_train_seconds: float = 60.0
    synth_val_seconds: float = 20.0
    run_root: str = "runs"
    controls: dict = field(default_factory=dict)
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        self._explicit: set[str] = set()
        self._sync()

    # ------------------------------------------------------------------

    def _sync(self):
        eff = get_effect(self.effect)
        self.model = dataclasses.replace(self.model, L_in=self.dataset.L_in,
                                         L_out=self.dataset.L_out, n_knobs=eff.n_knobs,
                                         seed=self.seed)
        self.train = dataclasses.replace(self.train, seed=self.seed)
        if self.controls:
            controls_from_dict(self.controls, eff)  # validate now

    def set(self, key: str, value: str) -> None:
        key, value = key.strip(), value.strip()
        if key.startswith("controls."):
            knob = key.split(".", 1)[1]
            get_effect(self.effect)  # effect must be valid before knobs
            self.controls[knob] = _coerce("float", value, key)
            return
        if "." in key:
            section, name = key.split(".", 1)
            cls = SECTIONS.get(section)
            if cls is None:
                raise ConfigError(f"unknown config section {section!r} in key {key!r}")
            types = {f.name: f.type for f in dataclasses.fields(cls)}
            if name not in types:
                raise ConfigError(f"unknown config key {key!r}")
            if name in DERIVED.get(section, ()):
                raise ConfigError(f"{key} is derived from other keys and cannot be set")
            changes = {name: _coerce(types[name], value, key)}
            if key == "dataset.L_in" and "dataset.L_out" not in self._explicit:
                changes["L_out"] = 0  # re-derive the default L_in // 4
            setattr(self, section, dataclasses.replace(getattr(self, section), **changes))
            self._explicit.add(key)
            return
        types = {f.name: f.type for f in dataclasses.fields(self)
                 if f.name not in SECTIONS and f.name != "controls"}
        if key not in types:
            raise ConfigError(f"unknown config key {key!r}")
        setattr(self, key, _coerce(types[key], value, key))

    def apply_lines(self, text: str, origin: str = "<config>") -> "RunConfig":
        """Apply ``key=value`` lines.

        Line order does not matter: top-level keys (the effect) go first and
        ``dataset.L_in`` before the rest, so ``L_out`` is checked against the
        final input length.
        """
        items = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{origin}:{lineno}: expected key=value, got {raw!r}")
            k, v = line.split("=", 1)
            rank = 0 if "." not in k else 1 if k.strip() == "dataset.L_in" else 2
            items.append((rank, lineno, k, v))
        for _, lineno, k, v in sorted(items, key=lambda t: t[:2]):
            try:
                self.set(k, v)
            except ConfigError as exc:
                raise ConfigError(f"{origin}:{lineno}: {exc}") from None
        self._sync()
        return self

    @classmethod
    def parse(cls, text: str, origin: str = "<config>") -> "RunConfig":
        return cls().apply_lines(text, origin)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        return cls.parse(Path(path).read_text(), str(path))

    def to_text(self) -> str:
        """Every key with its resolved value; parsing it back gives an equal config."""
        lines = []
        for f in dataclasses.fields(self):
            if f.name in SECTIONS or f.name == "controls":
                continue
            lines.append(f"{f.name}={getattr(self, f.name)}")
        for k in sorted(self.controls):
            lines.append(f"controls.{k}={self.controls[k]!r}")
        for section in SECTIONS:
            obj = getattr(self, section)
            for f in dataclasses.fields(obj):
                if f.name in DERIVED.get(section, ()):
                    continue
                lines.append(f"{section}.{f.name}={getattr(obj, f.name)!r}".replace("'", ""))
        return "\n".join(lines) + "\n"

    # ------------------------------------------------------------------

    def fixed_controls(self) -> ControlVector | None:
        if not self.controls:
            return None
        return controls_from_dict(self.controls, get_effect(self.effect))

    def resolve_path(self, p: str) -> Path | None:
        """Relative data paths resolve against ``$FXPROFILE_DATA`` when it is set."""
        if not p:
            return None
        path = Path(p)
        base = os.environ.get(DATA_ENV)
        if not path.is_absolute() and base:
            path = Path(base) / path
        return path

    def new_run_dir(self, root: str | None = None) -> Path:
        stamp = time.strftime("%Y%m%d-%H%M%S")
        base = Path(root or self.run_root)
        d = base / f"{stamp}-seed{self.seed}"
        n = 1
        while d.exists():
            n += 1
            d = base / f"{stamp}-seed{self.seed}-{n}"
        d.mkdir(parents=True)
        return d


def _coerce(typ, value: str, key: str):
    typ = typ if isinstance(typ, str) else typ.__name__
    try:
        if typ == "int":
            return int(value)
        if typ == "float":
            return float(value)
        if typ == "bool":
            low = value.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(value)
    except ValueError:
        raise ConfigError(f"{key}: cannot read {value!r} as {typ}") from None
    return value
