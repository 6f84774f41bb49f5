"""Tensor container and the reverse-mode engine."""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from ..errors import NonFiniteError

# Every op result is checked for NaN/Inf when this is on.
CHECK_FINITE = True
_GRAD_ENABLED = True

DTYPES = {"float32": np.float32, "float64": np.float64, 32: np.float32, 64: np.float64}


def resolve_dtype(precision) -> type:
    try:
        return DTYPES[precision]
    except KeyError:
        raise ValueError(f"precision must be 32 or 64, got {precision!r}") from None


class Tensor:
    """An n-d array that remembers how it was computed.

    ``backward_fn`` maps the upstream gradient to a tuple of gradients, one
    per entry of ``parents`` (``None`` where no gradient flows).
    """

    __slots__ = ("data", "grad", "requires_grad", "parents", "backward_fn", "op")

    def __init__(self, data, requires_grad=False, parents=(), backward_fn=None, op=""):
        self.data = np.asarray(data)
        if self.data.dtype.kind != "f":
            self.data = self.data.astype(np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.parents = parents
        self.backward_fn = backward_fn
        self.op = op

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self.op!r})"

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into ``.grad`` of every leaf that requires it."""
        if not self.requires_grad:
            raise RuntimeError("backward() on a tensor that does not require grad")
        if grad is None:
            if self.size != 1:
                raise RuntimeError("grad must be given for non-scalar outputs")
            grad = np.ones_like(self.data)
        grads = {id(self): np.asarray(grad, dtype=self.dtype)}
        for node in reversed(_topo(self)):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.backward_fn is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node.parents, node.backward_fn(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # operator sugar
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __mul__(self, other):
        from . import ops
        return ops.hadamard(self, other) if isinstance(other, Tensor) else ops.scale(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)

    def __getitem__(self, index):
        from . import ops
        return ops.slice(self, index)


class Parameter(Tensor):
    """A named leaf tensor owned by a model."""

    __slots__ = ("name", "trainable")

    def __init__(self, data, name, trainable=True):
        super().__init__(data, requires_grad=trainable)
        self.name = name
        self.trainable = trainable

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape}, dtype={self.dtype})"


def _topo(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def make(data, parents, backward_fn, op):
    """Wrap an op result, wiring the graph only if some parent needs grad."""
    if CHECK_FINITE and not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{op}: produced non-finite values")
    needs = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    return Tensor(data, needs, parents if needs else (), backward_fn if needs else None, op)


@contextmanager
def no_grad():
    """Build no graph inside the block (inference)."""
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype if dtype is not None else np.float64))
