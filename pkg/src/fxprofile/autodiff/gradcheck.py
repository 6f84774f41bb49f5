"""Finite-difference gradient checking."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def relative_error(analytic, numeric, floor=1e-12) -> float:
    """``max|a - n| / max(max|a|, max|n|, floor)`` over all entries."""
    a = np.concatenate([np.ravel(x) for x in analytic])
    n = np.concatenate([np.ravel(x) for x in numeric])
    scale = max(np.max(np.abs(a), initial=0.0), np.max(np.abs(n), initial=0.0), floor)
    return float(np.max(np.abs(a - n), initial=0.0) / scale)


def numeric_grad(f, arrays, h=1e-6, entries=None):
    """Central differences of scalar ``f(*arrays)`` w.r.t. every (or chosen) entry.

    ``entries`` optionally maps array index -> flat indices to probe; the
    returned gradients then only hold those entries.
    """
    grads = []
    for k, arr in enumerate(arrays):
        flat = arr.reshape(-1)
        idx = range(flat.size) if entries is None else entries.get(k, [])
        g = np.zeros(len(idx))
        for j, i in enumerate(idx):
            old = flat[i]
            flat[i] = old + h
            fp = f(*arrays)
            flat[i] = old - h
            fm = f(*arrays)
            flat[i] = old
            g[j] = (fp - fm) / (2 * h)
        grads.append(g)
    return grads


def grad_check(kernel, input_shapes, trials=100, rng=None, h=1e-6, sampler=None) -> float:
    """Worst relative error between analytic and central-difference gradients.

    ``kernel`` maps Tensors to a Tensor. Each trial draws fresh float64
    inputs (``sampler(rng, shape)``, default standard normal) and checks the
    gradient of ``sum(kernel(*inputs) * R)`` for a random projection ``R``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    sampler = sampler or (lambda r, shape: r.standard_normal(shape))
    worst = 0.0
    for _ in range(trials):
        arrays = [np.asarray(sampler(rng, s), dtype=np.float64) for s in input_shapes]
        tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
        out = kernel(*tensors)
        R = rng.standard_normal(out.shape)
        out.backward(R)
        analytic = [t.grad.reshape(-1) for t in tensors]

        def f(*xs):
            return float(np.sum(kernel(*[Tensor(x) for x in xs]).data * R))

        numeric = numeric_grad(f, arrays, h)
        worst = max(worst, relative_error(analytic, numeric))
    return worst
