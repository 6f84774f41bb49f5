"""Compare the Cython and pure-Python compressor kernels.

Usage::

    python benchmarks/bench_kernels.py [--seconds 20] [--repeats 3]

Prints seconds per run for each backend, the speed-up, and confirms that the
two backends produce bitwise-identical output.
"""

import argparse
import time

import numpy as np

from fxprofile import _pykernels
from fxprofile.effects import COMP4C, DEFAULT_FS, normalize_controls, smoothing_coeff

try:
    from fxprofile import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seconds", type=float, default=20.0)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    x = rng.uniform(-1.0, 1.0, int(args.seconds * DEFAULT_FS))
    ctl = normalize_controls((-20.0, 4.0, 0.005, 0.02), COMP4C)
    params = (ctl["threshold"], ctl["ratio"], smoothing_coeff(ctl["attack"], DEFAULT_FS),
              smoothing_coeff(ctl["release"], DEFAULT_FS), 0.0)

    y_py = np.empty_like(x)
    t_py = _time(lambda: _pykernels.comp_run(x, y_py, *params), args.repeats)
    print(f"python : {t_py:8.4f} s for {args.seconds:g} s of audio")
    if _ckernels is None:
        print("cython : extension not built (pip install -e . --no-build-isolation)")
        return
    y_c = np.empty_like(x)
    t_c = _time(lambda: _ckernels.comp_run(x, y_c, *params), args.repeats)
    print(f"cython : {t_c:8.4f} s for {args.seconds:g} s of audio")
    print(f"speed-up {t_py / t_c:6.1f}x, identical output: {np.array_equal(y_py, y_c)}")


if __name__ == "__main__":
    main()
