"""Differentiable kernels.

Each kernel computes its forward result with numpy and registers a closure
returning exact analytic gradients for its inputs. Shapes must match
exactly; the only broadcasting is the bias in ``affine``, the constant in
``mul_const`` and the explicit ``expand``.
"""

from __future__ import annotations

import builtins
import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError
from .tensor import Tensor, as_tensor, make

LN2 = math.log(2.0)


def _same_shape(kernel, a, b):
    if a.shape != b.shape:
        raise ShapeError(kernel, a.shape, b.shape)


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return make(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return make(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("hadamard", a, b)
    ad, bd = a.data, b.data
    return make(ad * bd, (a, b), lambda g: (g * bd, g * ad), "hadamard")


def scale(x: Tensor, c: float) -> Tensor:
    c = x.dtype.type(c)
    return make(x.data * c, (x,), lambda g: (g * c,), "scale")


def mul_const(x: Tensor, c) -> Tensor:
    """Multiply by a non-differentiable array broadcastable to ``x``."""
    c = np.asarray(c, dtype=x.dtype)
    try:
        out = x.data * c
    except ValueError:
        raise ShapeError("mul_const", x.shape, c.shape) from None
    if out.shape != x.shape:
        raise ShapeError("mul_const", x.shape, c.shape, detail="constant must broadcast to x")
    return make(out, (x,), lambda g: (g * c,), "mul_const")


def add_const(x: Tensor, c) -> Tensor:
    c = np.asarray(c, dtype=x.dtype)
    out = x.data + c
    if out.shape != x.shape:
        raise ShapeError("add_const", x.shape, c.shape, detail="constant must broadcast to x")
    return make(out, (x,), lambda g: (g,), "add_const")


def elu(x: Tensor) -> Tensor:
    d = x.data
    pos = d > 0
    e = np.exp(np.minimum(d, 0))
    out = np.where(pos, d, e - 1)
    return make(out, (x,), lambda g: (g * np.where(pos, 1, e).astype(d.dtype),), "elu")


def sqrt_eps(x: Tensor, eps: float) -> Tensor:
    """``sqrt(x + eps**2)``; finite gradient at ``x = 0``."""
    out = np.sqrt(x.data + x.dtype.type(eps) ** 2)
    return make(out, (x,), lambda g: (g * 0.5 / out,), "sqrt_eps")


def logcosh(x: Tensor) -> Tensor:
    """Overflow-safe ``log(cosh(x)) = |x| - ln 2 + log1p(exp(-2|x|))``."""
    d = x.data
    a = np.abs(d)
    out = a - d.dtype.type(LN2) + np.log1p(np.exp(-2 * a))
    return make(out, (x,), lambda g: (g * np.tanh(d),), "logcosh")


def absolute(x: Tensor) -> Tensor:
    d = x.data
    return make(np.abs(d), (x,), lambda g: (g * np.sign(d),), "abs")


def cos(x: Tensor) -> Tensor:
    d = x.data
    return make(np.cos(d), (x,), lambda g: (-g * np.sin(d),), "cos")


def sin(x: Tensor) -> Tensor:
    d = x.data
    return make(np.sin(d), (x,), lambda g: (g * np.cos(d),), "sin")


def atan2(y: Tensor, x: Tensor, eps: float = 0.0) -> Tensor:
    """Angle of ``x + iy``. ``eps`` regularizes the gradient at the origin."""
    _same_shape("atan2", y, x)
    yd, xd = y.data, x.data
    out = np.arctan2(yd, xd)

    def back(g):
        r2 = xd * xd + yd * yd + y.dtype.type(eps) ** 2
        r2 = np.where(r2 > 0, r2, 1)
        return g * xd / r2, -g * yd / r2

    return make(out, (y, x), back, "atan2")


# ---------------------------------------------------------------------------
# structural
# ---------------------------------------------------------------------------


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = list(tensors)
    ref = tensors[0]
    ax = axis % ref.ndim
    for t in tensors[1:]:
        if t.ndim != ref.ndim or any(
                s1 != s2 for i, (s1, s2) in enumerate(zip(t.shape, ref.shape)) if i != ax):
            raise ShapeError("concat", *(t.shape for t in tensors), detail=f"axis={axis}")
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum([0] + sizes)
    out = np.concatenate([t.data for t in tensors], axis=ax)

    def back(g):
        idx = [builtins.slice(None)] * g.ndim
        parts = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            idx[ax] = builtins.slice(lo, hi)
            parts.append(g[tuple(idx)])
        return tuple(parts)

    return make(out, tuple(tensors), back, "concat")


def slice(x: Tensor, index) -> Tensor:  # noqa: A001 - mirrors the kernel name
    """Basic (view) indexing; the gradient is scattered back into zeros."""
    parts = index if isinstance(index, tuple) else (index,)
    if not all(isinstance(i, (int, np.integer, builtins.slice, type(Ellipsis))) or i is None
               for i in parts):
        raise ShapeError("slice", x.shape, detail="only basic slicing is differentiable")
    out = x.data[index]

    def back(g):
        gx = np.zeros_like(x.data)
        gx[index] = g
        return (gx,)

    return make(out.copy(), (x,), back, "slice")


def expand(x: Tensor, axis: int, n: int) -> Tensor:
    """Insert a new axis of length ``n`` by repetition."""
    out = np.repeat(np.expand_dims(x.data, axis), n, axis=axis)
    return make(out, (x,), lambda g: (g.sum(axis=axis),), "expand")


def mean(x: Tensor) -> Tensor:
    n = x.size
    out = np.asarray(x.data.mean(), dtype=x.dtype)
    return make(out, (x,), lambda g: (np.full_like(x.data, g / n),), "mean")


def total(x: Tensor) -> Tensor:
    out = np.asarray(x.data.sum(), dtype=x.dtype)
    return make(out, (x,), lambda g: (np.full_like(x.data, g),), "sum")


# ---------------------------------------------------------------------------
# linear maps
# ---------------------------------------------------------------------------


def affine(x: Tensor, W: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ W + b`` over the last axis of ``x``; leading axes are batch."""
    if W.ndim != 2 or x.shape[-1] != W.shape[0] or (b is not None and b.shape != (W.shape[1],)):
        raise ShapeError("affine", x.shape, W.shape, () if b is None else b.shape)
    xd, Wd = x.data, W.data
    out = xd @ Wd
    if b is not None:
        out = out + b.data

    def back(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = g @ Wd.T
        gW = xd.reshape(-1, xd.shape[-1]).T @ g2
        return (gx, gW) if b is None else (gx, gW, g2.sum(axis=0))

    parents = (x, W) if b is None else (x, W, b)
    return make(out, parents, back, "affine")


def n_frames(length: int, frame: int, hop: int, offset: int = 0) -> int:
    return (length - offset - frame) // hop + 1 if length - offset >= frame else 0


def _frames(x, frame, hop, offset):
    return sliding_window_view(x, frame, axis=-1)[..., offset::hop, :]


def _overlap_add(frames, hop, length):
    """Sum ``(B, F, N)`` frames at stride ``hop`` into ``(B, length)``."""
    B, F, N = frames.shape
    chunks = -(-N // hop)
    buf = np.zeros((B, (F + chunks) * hop), dtype=frames.dtype)
    chunk = np.zeros((B, F, hop), dtype=frames.dtype)
    for j in range(chunks):
        w = min(hop, N - j * hop)
        chunk[:, :, :w] = frames[:, :, j * hop:j * hop + w]
        chunk[:, :, w:] = 0
        buf[:, j * hop:(j + F) * hop] += chunk.reshape(B, F * hop)
    return buf[:, :length]


def conv1d(x: Tensor, K: Tensor, hop: int, offset: int = 0) -> Tensor:
    """Strided correlation of ``x`` (B, L) with each row of ``K`` (C, N).

    Frame ``f`` starts at ``offset + f * hop``. Result is (B, C, F).
    """
    if x.ndim != 2 or K.ndim != 2 or hop < 1 or offset < 0:
        raise ShapeError("conv1d", x.shape, K.shape, detail=f"hop={hop}, offset={offset}")
    B, L = x.shape
    C, N = K.shape
    F = n_frames(L, N, hop, offset)
    if F < 1:
        raise ShapeError("conv1d", x.shape, K.shape, detail=f"input shorter than frame {N}")
    fr = _frames(x.data, N, hop, offset)[:, :F]
    Kd = K.data
    out = np.ascontiguousarray((fr @ Kd.T).transpose(0, 2, 1))

    def back(g):
        gt = g.transpose(0, 2, 1)  # (B, F, C)
        gK = gt.reshape(-1, C).T @ fr.reshape(-1, N)
        gfr = gt @ Kd  # (B, F, N)
        gx = np.zeros_like(x.data)
        gx[:, offset:] = _overlap_add(gfr, hop, L - offset)
        return gx, gK

    return make(out, (x, K), back, "conv1d")


def conv1d_transpose(y: Tensor, K: Tensor, hop: int) -> Tensor:
    """Adjoint of ``conv1d``: overlap-add of ``K``-weighted frames.

    ``y`` is (B, C, F); the result is (B, (F - 1) * hop + N).
    """
    if y.ndim != 3 or K.ndim != 2 or y.shape[1] != K.shape[0] or hop < 1:
        raise ShapeError("conv1d_transpose", y.shape, K.shape, detail=f"hop={hop}")
    B, C, F = y.shape
    N = K.shape[1]
    L = (F - 1) * hop + N
    yd, Kd = y.data, K.data
    yt = yd.transpose(0, 2, 1)  # (B, F, C)
    out = _overlap_add(yt @ Kd, hop, L)

    def back(g):
        gfr = _frames(g, N, hop, 0)[:, :F]  # (B, F, N)
        gy = np.ascontiguousarray((gfr @ Kd.T).transpose(0, 2, 1))
        gK = yt.reshape(-1, C).T @ gfr.reshape(-1, N)
        return gy, gK

    return make(out, (y, K), back, "conv1d_transpose")


__all__ = [
    "absolute", "add", "add_const", "affine", "as_tensor", "atan2", "concat", "conv1d",
    "conv1d_transpose", "cos", "elu", "expand", "hadamard", "logcosh", "mean", "mul_const",
    "n_frames", "scale", "sin", "slice", "sqrt_eps", "sub", "total",
]
