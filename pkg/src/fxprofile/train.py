"""Loss, training loop and evaluation."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import AdamW, OneCycleSchedule, Tensor, no_grad, one_cycle_lr, ops
from .dataset import Batch, DatasetSpec, make_batch
from .effects import EffectSpec, apply_windowed_rows, denormalize_controls
from .errors import ConfigError, NonFiniteError, TrainingDiverged

log = logging.getLogger(__name__)


@dataclass
class LossConfig:
    lam: float = 2e-5
    alpha: float = 1.0

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError(f"lam must be >= 0, got {self.lam}")
        if self.alpha not in (0.0, 1.0):
            raise ConfigError(f"alpha must be 0 or 1, got {self.alpha}")


def freq_weights(n_bins: int, alpha: float) -> np.ndarray:
    """``exp(f_k ** alpha)`` with bin position ``f_k = k / (n_bins - 1)`` in [0, 1]."""
    f = np.arange(n_bins) / (n_bins - 1)
    return np.exp(f ** alpha)


def loss(y_hat: Tensor, y, M: Tensor | None, cfg: LossConfig) -> Tensor:
    """Mean log-cosh waveform error plus the frequency-weighted L1 of ``M``.

    ``M`` is (batch, bins, frames); its L1 term is a weighted mean so the
    scale of ``lam`` does not depend on the geometry.
    """
    y = y.data if isinstance(y, Tensor) else np.asarray(y)
    if y_hat.shape != y.shape:
        raise ConfigError(f"loss: prediction {y_hat.shape} vs target {y.shape}")
    err = ops.add_const(y_hat, -y.astype(y_hat.dtype))
    total = ops.mean(ops.logcosh(err))
    if M is None or cfg.lam == 0:
        return total
    if M.ndim != 3:
        raise ConfigError(f"loss: magnitude plane must be (batch, bins, frames), got {M.shape}")
    w = freq_weights(M.shape[1], cfg.alpha)[None, :, None]
    reg = ops.mean(ops.mul_const(ops.absolute(M), w))
    return ops.add(total, ops.scale(reg, cfg.lam))


@dataclass
class TrainConfig:
    batch_size: int = 200
    batches_per_epoch: int = 1000
    epochs: int = 1
    lr_max: float = 7e-4
    weight_decay: float = 1e-5
    warmup_fraction: float = 0.3
    div_factor: float = 25.0
    final_div_factor: float = 1e4
    seed: int = 0
    val_batches: int = 4
    sequential_batches: bool = False
    # multiplier on lr for the DFT-initialized analysis/synthesis banks
    bank_lr_scale: float = 1.0

    def __post_init__(self):
        for name in ("batch_size", "batches_per_epoch", "val_batches"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.epochs < 0 or self.lr_max <= 0:
            raise ConfigError("epochs must be >= 0 and lr_max > 0")
        if self.bank_lr_scale < 0:
            raise ConfigError("bank_lr_scale must be >= 0")

    def schedule(self) -> OneCycleSchedule:
        return OneCycleSchedule(self.lr_max, max(1, self.epochs * self.batches_per_epoch),
                                self.warmup_fraction, self.div_factor, self.final_div_factor)


@dataclass
class RunRecord:
    rows: list = field(default_factory=list)  # (epoch, train_loss, val_loss, lr, seconds)

    HEADER = "epoch,train_loss,val_loss,lr,seconds"

    def add(self, epoch, train_loss, val_loss, lr, seconds):
        self.rows.append((epoch, train_loss, val_loss, lr, seconds))

    @property
    def val_losses(self) -> np.ndarray:
        return np.array([r[2] for r in self.rows])

    @property
    def train_losses(self) -> np.ndarray:
        return np.array([r[1] for r in self.rows])

    def to_csv(self) -> str:
        lines = [self.HEADER]
        lines += [f"{e},{tl:.9e},{vl:.9e},{lr:.9e},{s:.3f}" for e, tl, vl, lr, s in self.rows]
        return "\n".join(lines) + "\n"

    def write(self, path):
        Path(path).write_text(self.to_csv())

    @classmethod
    def read(cls, path) -> "RunRecord":
        rec = cls()
        for line in Path(path).read_text().splitlines()[1:]:
            e, tl, vl, lr, s = line.split(",")
            rec.add(int(e), float(tl), float(vl), float(lr), float(s))
        return rec


class OracleModel:
    """Stands in for a trained model: runs the effect on each window (WT)."""

    def __init__(self, effect: EffectSpec, fs: float, L_out: int):
        self.effect, self.fs, self.L_out = effect, fs, L_out

    def predict(self, inputs, knobs):
        ctl = [denormalize_controls(k, self.effect) for k in np.atleast_2d(knobs)]
        return apply_windowed_rows(self.effect, np.atleast_2d(inputs), ctl, self.fs, self.L_out)


def _batch_loss(model, batch: Batch, loss_cfg: LossConfig):
    if hasattr(model, "forward"):
        y_hat, M = model.forward(batch.inputs, batch.knobs)
        return loss(y_hat, batch.targets, M, loss_cfg), y_hat.data
    pred = model.predict(batch.inputs, batch.knobs)
    return loss(Tensor(pred), batch.targets, None, loss_cfg), pred


def evaluate(model, batches, loss_cfg: LossConfig | None = None):
    """Mean loss and MAE over fixed batches; never mutates the model."""
    loss_cfg = loss_cfg or LossConfig()
    tot_loss = tot_abs = 0.0
    n = 0
    with no_grad():
        for b in batches:
            L, pred = _batch_loss(model, b, loss_cfg)
            tot_loss += float(L.data) * len(b)
            tot_abs += float(np.abs(pred - b.targets).mean()) * len(b)
            n += len(b)
    return tot_loss / n, tot_abs / n


def _check_disjoint(source, val_batches, val_source):
    if val_source is None:
        return
    if hasattr(source, "fingerprints") and hasattr(val_source, "fingerprints"):
        if source.fingerprints() & val_source.fingerprints():
            raise ConfigError("validation source shares audio with the training source")


def train(model, source, spec: DatasetSpec, train_cfg: TrainConfig, loss_cfg: LossConfig,
          schedule: OneCycleSchedule | None = None, val_batches=None, val_source=None,
          run_dir=None, on_epoch=None):
    """Train ``model`` in place; return ``(model, RunRecord)``.

    One AdamW step per mini-batch, learning rate from the 1-cycle schedule
    over the whole run. With ``run_dir``, writes ``init.stck`` (before any
    step), ``best.stck`` (lowest validation loss), ``final.stck`` and
    ``history.csv``.
    """
    if val_batches is None:
        if val_source is None:
            raise ConfigError("train needs val_batches or a separate val_source")
        val_batches = _fixed(val_source, spec, train_cfg)
    _check_disjoint(source, val_batches, val_source)
    schedule = schedule or train_cfg.schedule()
    rng = np.random.default_rng(train_cfg.seed)
    bank_scale = {p.name: train_cfg.bank_lr_scale for p in model.parameters
                  if p.name.startswith(("analysis.", "synthesis."))}
    opt = AdamW(model.parameters, weight_decay=train_cfg.weight_decay, lr_scale=bank_scale)
    record = RunRecord()
    run_dir = Path(run_dir) if run_dir is not None else None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        model.save(run_dir / "init.stck")

    best = math.inf
    step = 0
    t0 = time.perf_counter()
    lr = one_cycle_lr(0, schedule)
    for epoch in range(1, train_cfg.epochs + 1):
        running = 0.0
        for _ in range(train_cfg.batches_per_epoch):
            lr = one_cycle_lr(min(step, schedule.total_steps), schedule)
            batch = make_batch(source, spec, train_cfg.batch_size, rng,
                               sequential=train_cfg.sequential_batches)
            try:
                L, _ = _batch_loss(model, batch, loss_cfg)
                value = float(L.data)
                if not math.isfinite(value):
                    raise NonFiniteError("loss is not finite")
                model.zero_grad()
                L.backward()
                opt.step(lr)
            except NonFiniteError as exc:
                raise TrainingDiverged(
                    f"non-finite values at epoch {epoch}, step {step} "
                    f"(lr={lr:.3e}, seed={train_cfg.seed}): {exc}") from exc
            running += value
            step += 1
        val_loss, _ = evaluate(model, val_batches, loss_cfg)
        record.add(epoch, running / train_cfg.batches_per_epoch, val_loss, lr,
                   time.perf_counter() - t0)
        log.info("epoch %d train %.4e val %.4e lr %.3e", epoch, record.rows[-1][1], val_loss, lr)
        if run_dir is not None:
            if val_loss < best:
                best = val_loss
                model.save(run_dir / "best.stck", opt.state)
            record.write(run_dir / "history.csv")
        if on_epoch is not None:
            on_epoch(epoch, record)
    if run_dir is not None:
        model.save(run_dir / "final.stck", opt.state)
        record.write(run_dir / "history.csv")
    return model, record


def _fixed(source, spec, cfg: TrainConfig):
    rng = np.random.default_rng(cfg.seed + 1_000_003)
    return [make_batch(source, spec, cfg.batch_size, rng) for _ in range(cfg.val_batches)]


def run_config_dict(cfg) -> dict:
    return asdict(cfg)
