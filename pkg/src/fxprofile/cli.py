"""Command-line entry point: ``fxprofile <subcommand> ...``.

Knob values are given in raw physical units (dB, ratio, seconds). Any
failure prints one line ``error: category=<name> message=<text>`` to stderr
and exits with status 2.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .dataset import (CaptureSource, DatasetSpec, EffectSource, capture_name, fit_exponential,
                      fixed_batches, knob_grid, lookback_error_curve, recommend_lookback,
                      write_curve_csv)
from .diagnostics import (model_processor, oracle_processor, plot_lines_ppm, spectra_diag,
                          step_response_diag, write_spectra_csv, write_step_csv)
from .effects import (DEFAULT_FS, EFFECTS, apply_streamed, apply_windowed_rows, get_effect,
                      normalize_controls)
from .errors import ConfigError, FxProfileError
from .forge import assemble_corpus, read_manifest, synth_stream
from .model import Model
from .train import OracleModel, evaluate, train
from .wavio import read_wav, write_wav

log = logging.getLogger("fxprofile")

EXIT_ERROR = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail("usage", message)


def _fail(category: str, message: str):
    msg = " ".join(str(message).split())
    print(f"error: category={category} message={msg}", file=sys.stderr)
    raise SystemExit(EXIT_ERROR)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def _all_knob_names():
    names = []
    for eff in EFFECTS.values():
        for k in eff.knob_names:
            if k not in names:
                names.append(k)
    return names


def _add_knob_flags(p):
    for name in _all_knob_names():
        p.add_argument(f"--{name.replace('_', '-')}", dest=f"knob_{name}", type=float,
                       metavar="RAW", help=f"{name} (raw units)")


def _controls_from_args(args, effect, default_mid: bool = False):
    values = {k: getattr(args, f"knob_{k}", None) for k in effect.knob_names}
    stray = [k for k in _all_knob_names()
             if k not in effect.knob_names and getattr(args, f"knob_{k}", None) is not None]
    if stray:
        raise ConfigError(f"{effect.name} has no knobs {stray}")
    missing = [k for k, v in values.items() if v is None]
    if missing and default_mid:
        for k in missing:
            spec = effect.knob(k)
            values[k] = 0.5 * (spec.lo + spec.hi)
    elif missing:
        raise ConfigError(f"{effect.name} needs values for {missing}")
    return normalize_controls([values[k] for k in effect.knob_names], effect)


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = getattr(args, "set", None) or []
    if overrides:
        cfg.apply_lines("\n".join(overrides), "--set")
    return cfg


def _corpus(cfg: RunConfig, manifest: str):
    files = read_manifest(cfg.resolve_path(manifest))
    out = []
    for f in files:
        x, fs = read_wav(f.path)
        if fs != cfg.dataset.fs:
            raise ConfigError(f"{f.path}: sample rate {fs} != dataset.fs {cfg.dataset.fs}")
        out.append(x)
    return out


def build_sources(cfg: RunConfig):
    """(train_source, val_source) as described by the config's data keys."""
    eff = get_effect(cfg.effect)
    if cfg.capture_manifest:
        if not cfg.val_capture_manifest:
            raise ConfigError("capture_manifest needs a separate val_capture_manifest")
        tr = CaptureSource.from_manifest(cfg.resolve_path(cfg.capture_manifest), eff,
                                         align=cfg.align_captures)
        va = CaptureSource.from_manifest(cfg.resolve_path(cfg.val_capture_manifest), eff,
                                         align=cfg.align_captures)
        return tr, va
    fixed = cfg.fixed_controls()
    fs = cfg.dataset.fs
    if cfg.train_manifest:
        if not cfg.val_manifest:
            raise ConfigError("train_manifest needs a separate val_manifest")
        tr_audio, va_audio = _corpus(cfg, cfg.train_manifest), _corpus(cfg, cfg.val_manifest)
    else:
        tr_audio = [synth_stream(np.random.default_rng([cfg.seed, 0]), cfg.synth_train_seconds, fs)]
        va_audio = [synth_stream(np.random.default_rng([cfg.seed, 1]), cfg.synth_val_seconds, fs)]
    return (EffectSource(eff, tr_audio, fs, fixed, name="train"),
            EffectSource(eff, va_audio, fs, fixed, name="val"))


def _val_batches(cfg: RunConfig, val_source):
    return fixed_batches(val_source, cfg.dataset, cfg.train.val_batches, cfg.train.batch_size,
                         seed=cfg.seed + 1)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args):
    rng = np.random.default_rng(args.seed)
    files = assemble_corpus(args.sources, args.count, rng, args.out, fs=args.fs,
                            file_seconds=args.file_seconds,
                            synth_seconds=(args.min_seconds, args.max_seconds), format=args.format)
    print(json.dumps({"files": len(files), "manifest": str(Path(args.out) / "manifest.txt")}))


def cmd_apply(args):
    eff = get_effect(args.effect)
    ctl = _controls_from_args(args, eff)
    x, fs = read_wav(args.input)
    if args.mode == "ST":
        y = apply_streamed(eff, x, ctl, fs)
    else:
        L_out = args.L_out or args.L_in // 4
        spec = DatasetSpec(args.L_in, L_out, fs=fs)
        n_blocks = -(-x.size // L_out)
        padded = np.concatenate([np.zeros(spec.lookback), x, np.zeros(n_blocks * L_out - x.size)])
        wins = np.stack([padded[b * L_out:b * L_out + args.L_in] for b in range(n_blocks)])
        y = apply_windowed_rows(eff, wins, ctl, fs, L_out).reshape(-1)[:x.size]
    write_wav(args.output, y, fs, args.format)


def cmd_lookback(args):
    eff = get_effect(args.effect)
    ctl = _controls_from_args(args, eff, default_mid=True)
    if args.input:
        x, fs = read_wav(args.input)
    else:
        fs = args.fs
        need = args.seconds + (args.max_lookback + args.L_out) / fs
        x = synth_stream(np.random.default_rng(args.seed), need, fs)
    lookbacks = list(range(0, args.max_lookback + 1, args.step))
    curve = lookback_error_curve(eff, ctl, x, lookbacks, args.L_out, fs,
                                 min_seconds=args.seconds)
    write_curve_csv(args.out, curve)
    result = {"csv": str(args.out), "points": len(curve)}
    try:
        C, k = fit_exponential(curve)
        result.update(C=C, k=k, recommended_lookback=recommend_lookback(C, k, args.target))
    except FxProfileError as exc:
        result["fit"] = str(exc)
    print(json.dumps(result))


def cmd_train(args):
    cfg = _load_config(args)
    run_dir = cfg.new_run_dir(args.run_root)
    (run_dir / "config.txt").write_text(cfg.to_text())
    tr, va = build_sources(cfg)
    model = Model(cfg.model)
    _, record = train(model, tr, cfg.dataset, cfg.train, cfg.loss,
                      val_batches=_val_batches(cfg, va), val_source=va, run_dir=run_dir)
    plot_path = None
    if record.rows:
        plot_path = run_dir / "loss.ppm"
        plot_lines_ppm(plot_path, [record.train_losses, record.val_losses], log_y=True)
    print(json.dumps({"run_dir": str(run_dir), "epochs": len(record.rows),
                      "final_val_loss": record.rows[-1][2] if record.rows else None}))


def cmd_eval(args):
    cfg = _load_config(args)
    _, va = build_sources(cfg)
    if args.oracle:
        predictor = OracleModel(get_effect(cfg.effect), cfg.dataset.fs, cfg.dataset.L_out)
    else:
        predictor = Model.load(args.checkpoint)
        if (predictor.cfg.L_in, predictor.cfg.L_out) != (cfg.dataset.L_in, cfg.dataset.L_out):
            raise ConfigError("checkpoint geometry does not match dataset.L_in/L_out")
    loss_value, mae = evaluate(predictor, _val_batches(cfg, va), cfg.loss)
    result = {"loss": loss_value, "mae": mae}
    if args.out:
        Path(args.out).write_text(json.dumps(result) + "\n")
    print(json.dumps(result))


def cmd_diag_step(args):
    eff = get_effect(args.effect)
    reference = oracle_processor(eff, args.fs)
    processor = reference if args.checkpoint is None else model_processor(Model.load(args.checkpoint))
    cells = step_response_diag(processor, reference, eff, _floats(args.thresholds),
                               _floats(args.attack_release), args.ratio, args.length, args.fs)
    write_step_csv(args.out, cells)
    if args.plot:
        c = cells[0]
        plot_lines_ppm(args.plot, [c.target, c.predicted, c.diff])
    print(json.dumps([{"threshold": c.threshold, "attack_release": c.attack_release,
                       "max_abs_diff": float(np.abs(c.diff).max()),
                       "onset_error_db": c.onset_error_db(), "localized": c.localized()}
                      for c in cells]))


def cmd_diag_spectra(args):
    a, fa = read_wav(args.a)
    b, fb = read_wav(args.b)
    if fa != fb:
        raise ConfigError(f"sample rates differ: {fa} vs {fb}")
    sp = spectra_diag(a, b, fa)
    write_spectra_csv(args.out, sp)
    if args.plot:
        plot_lines_ppm(args.plot, [sp.db_a, sp.db_b])
    print(json.dumps({"csv": str(args.out), "bins": int(sp.freq.size)}))


def cmd_gridgen(args):
    eff = get_effect(args.effect)
    counts = [int(v) for v in args.steps.split(",")]
    grid = knob_grid(eff, counts[0] if len(counts) == 1 else counts)
    lines = [capture_name(args.stem, c) for c in grid]
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(json.dumps({"settings": len(lines), "worklist": str(args.out)}))


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fxprofile", description="Profile audio effects with a learned model.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="assemble a corpus of synthetic (and music) audio")
    s.add_argument("--out", required=True)
    s.add_argument("--count", type=int, default=100, help="number of synthetic items")
    s.add_argument("--sources", nargs="*", default=[], help="music WAV files to mix in")
    s.add_argument("--file-seconds", type=float, default=900.0)
    s.add_argument("--min-seconds", type=float, default=1.0)
    s.add_argument("--max-seconds", type=float, default=10.0)
    s.add_argument("--fs", type=float, default=None)
    s.add_argument("--format", choices=("float32", "pcm16"), default="float32")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("apply", help="run an effect over a WAV file")
    s.add_argument("--effect", default="comp4c")
    _add_knob_flags(s)
    s.add_argument("--mode", choices=("ST", "WT"), default="ST")
    s.add_argument("--L-in", dest="L_in", type=int, default=4096)
    s.add_argument("--L-out", dest="L_out", type=int, default=0)
    s.add_argument("--format", choices=("float32", "pcm16"), default="float32")
    s.add_argument("input")
    s.add_argument("output")
    s.set_defaults(func=cmd_apply)

    s = sub.add_parser("lookback", help="windowed-vs-streamed error against lookback (CSV)")
    s.add_argument("--effect", default="comp4c")
    _add_knob_flags(s)
    s.add_argument("--input", help="WAV to use instead of synthetic audio")
    s.add_argument("--seconds", type=float, default=60.0)
    s.add_argument("--L-out", dest="L_out", type=int, default=4096)
    s.add_argument("--max-lookback", type=int, default=16384)
    s.add_argument("--step", type=int, default=1024)
    s.add_argument("--target", type=float, default=10 ** -4.5)
    s.add_argument("--fs", type=float, default=DEFAULT_FS)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_lookback)

    for name, func, hlp in (("train", cmd_train, "train a model"),
                            ("eval", cmd_eval, "evaluate a checkpoint on the validation set")):
        s = sub.add_parser(name, help=hlp)
        s.add_argument("--config", help="key=value run config file")
        s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        if name == "train":
            s.add_argument("--run-root", default=None, help="parent of the run directory")
        else:
            g = s.add_mutually_exclusive_group(required=True)
            g.add_argument("--checkpoint")
            g.add_argument("--oracle", action="store_true", help="score the effect itself (WT)")
            s.add_argument("--out")
        s.set_defaults(func=func)

    s = sub.add_parser("diag-step", help="step-response grid against the oracle (CSV)")
    s.add_argument("--effect", default="comp4c")
    s.add_argument("--checkpoint", help="model checkpoint; omit to compare the oracle with itself")
    s.add_argument("--thresholds", default="-30,-20,-10")
    s.add_argument("--attack-release", default="0.001,0.01,0.04")
    s.add_argument("--ratio", type=float, default=3.0)
    s.add_argument("--length", type=int, default=4096)
    s.add_argument("--fs", type=float, default=DEFAULT_FS)
    s.add_argument("--out", required=True)
    s.add_argument("--plot", help="PPM plot of the first cell")
    s.set_defaults(func=cmd_diag_step)

    s = sub.add_parser("diag-spectra", help="power spectra of two WAV files (CSV)")
    s.add_argument("a")
    s.add_argument("b")
    s.add_argument("--out", required=True)
    s.add_argument("--plot")
    s.set_defaults(func=cmd_diag_spectra)

    s = sub.add_parser("gridgen", help="capture worklist from a knob grid")
    s.add_argument("--effect", default="la2a")
    s.add_argument("--steps", default="21,2", help="grid points per knob (one value for all)")
    s.add_argument("--stem", default="take")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gridgen)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except FxProfileError as exc:
        _fail(exc.category, str(exc))
    except FileNotFoundError as exc:
        _fail("io", f"{exc.filename}: not found")
    except OSError as exc:
        _fail("io", str(exc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
