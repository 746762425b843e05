"""Minimal reverse-mode differentiation over dense float64 arrays.

Operations applied while a :class:`Tape` is active, with at least one input
that requires gradients, are appended to the tape together with a closure
computing the vector-Jacobian product. ``Tape.backward`` then walks the
record in reverse creation order, which is a valid topological order.

Outside of an active tape every primitive is a plain numpy evaluation and
returns an untracked :class:`Value`.
"""
from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

DTYPE = np.float64


class DomainError(ValueError):
    """Raised when a primitive is evaluated outside its domain."""


class ShapeError(ValueError):
    pass


class Value:
    """A dense array that can take part in a differentiation record."""

    __array_priority__ = 1000  # make ndarray <op> Value dispatch to Value

    __slots__ = ("data", "grad", "requires_grad", "parents", "vjp", "node_id")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.parents: tuple[Value, ...] = ()
        self.vjp: Callable | None = None
        self.node_id: int | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return self.vjp is None

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Value(shape={self.shape}{flag})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __neg__(self):
        return neg(self)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None):
        return vsum(self, axis)

    def mean(self, axis=None):
        return vmean(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


@dataclass
class Tape:
    """Ordered record of primitive applications."""

    nodes: list[Value] = field(default_factory=list)

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.remove(self)

    def __len__(self) -> int:
        return len(self.nodes)

    def backward(self, root: Value) -> None:
        """Accumulate d(root)/d(leaf) into ``leaf.grad`` for every tracked leaf."""
        if root.data.size != 1:
            raise ShapeError(f"backward needs a scalar root, got shape {root.shape}")
        if root.is_leaf:
            if root.requires_grad:
                root.grad = _accumulate(root.grad, np.ones_like(root.data))
            return
        if root.node_id is None or root.node_id >= len(self.nodes) or self.nodes[root.node_id] is not root:
            raise ValueError("root was not recorded on this tape")

        grads: dict[int, np.ndarray] = {root.node_id: np.ones_like(root.data)}
        for node in reversed(self.nodes[: root.node_id + 1]):
            g = grads.pop(node.node_id, None)
            if g is None:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if parent.is_leaf:
                    parent.grad = _accumulate(parent.grad, pg)
                else:
                    grads[parent.node_id] = _accumulate(grads.get(parent.node_id), pg)


_ACTIVE: list[Tape] = []


def active_tape() -> Tape | None:
    return _ACTIVE[-1] if _ACTIVE else None


@contextmanager
def no_record() -> Iterator[None]:
    """Evaluate primitives without recording, even inside an active tape."""
    saved = _ACTIVE[:]
    _ACTIVE.clear()
    try:
        yield
    finally:
        _ACTIVE.extend(saved)


def backward(tape: Tape, root: Value) -> None:
    tape.backward(root)


def _accumulate(current, g):
    if current is None:
        return np.array(g, dtype=DTYPE, copy=True)
    current += g
    return current


def as_value(x) -> Value:
    return x if isinstance(x, Value) else Value(x)


def record(data: np.ndarray, parents: Sequence[Value], vjp: Callable) -> Value:
    """Create the output of a primitive; ``vjp(g)`` returns one gradient per parent.

    This is the extension point for new primitives.
    """
    out = Value.__new__(Value)
    out.data = np.asarray(data, dtype=DTYPE)
    out.grad, out.requires_grad = None, False
    out.parents, out.vjp, out.node_id = (), None, None
    tape = active_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = tuple(parents)
        out.vjp = vjp
        out.node_id = len(tape.nodes)
        tape.nodes.append(out)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_broadcast(a: Value, b: Value, name: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{name}: shapes {a.shape} and {b.shape} do not broadcast") from None


# elementwise binary ---------------------------------------------------------

def add(a, b) -> Value:
    a, b = as_value(a), as_value(b)
    _check_broadcast(a, b, "add")
    return record(a.data + b.data, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Value:
    a, b = as_value(a), as_value(b)
    _check_broadcast(a, b, "sub")
    return record(a.data - b.data, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a, b) -> Value:
    a, b = as_value(a), as_value(b)
    _check_broadcast(a, b, "mul")
    return record(a.data * b.data, (a, b),
                  lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Value:
    a, b = as_value(a), as_value(b)
    _check_broadcast(a, b, "div")
    if np.any(b.data == 0):
        raise DomainError("division by zero")
    out = a.data / b.data

    def vjp(g):
        return (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape))

    return record(out, (a, b), vjp)


def neg(a) -> Value:
    a = as_value(a)
    return record(-a.data, (a,), lambda g: (-g,))


# linear algebra and structure -------------------------------------------------

def _rowwise_matmul(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    # einsum without BLAS keeps every output row independent of its position,
    # which makes node permutations commute with the forward pass bit for bit
    return np.einsum("ij,jk->ik", x, w, optimize=False)


def matmul(a, b) -> Value:
    a, b = as_value(a), as_value(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    return record(_rowwise_matmul(a.data, b.data), (a, b),
                  lambda g: (g @ b.data.T, a.data.T @ g))


def concat(values: Sequence, axis: int = -1) -> Value:
    vals = [as_value(v) for v in values]
    try:
        out = np.concatenate([v.data for v in vals], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from None
    sizes = np.cumsum([v.shape[axis] for v in vals])[:-1]
    return record(out, vals, lambda g: tuple(np.split(g, sizes, axis=axis)))


def vsum(a, axis: int | None = None) -> Value:
    a = as_value(a)
    out = a.data.sum(axis=axis)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return record(out, (a,), vjp)


def vmean(a, axis: int | None = None) -> Value:
    a = as_value(a)
    count = a.data.size if axis is None else a.shape[axis]
    if count == 0:
        raise ShapeError("mean over an empty axis")
    return vsum(a, axis) * (1.0 / count)


def reshape(a, shape) -> Value:
    a = as_value(a)
    return record(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def getitem(a, index) -> Value:
    a = as_value(a)

    def vjp(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return record(a.data[index], (a,), vjp)


def gather_rows(a, index) -> Value:
    """Rows ``a[index]``; the backward pass scatter-adds into the source rows."""
    a = as_value(a)
    index = np.asarray(index, dtype=np.int64)
    if a.ndim != 2:
        raise ShapeError("gather_rows expects a matrix")

    return record(a.data[index], (a,), lambda g: (index_add(a.shape[0], index, g),))


def segment_sum(values: np.ndarray, index: np.ndarray, num_rows: int) -> np.ndarray:
    """Sum rows of ``values`` into ``num_rows`` buckets given by ``index``.

    Rows inside a bucket are added in the order of their raw bytes, so the
    result depends only on the multiset of contributions and not on the
    order of the edge list.
    """
    values = np.asarray(values, dtype=DTYPE)
    out = np.zeros((num_rows,) + values.shape[1:], dtype=DTYPE)
    m = len(index)
    if m == 0:
        return out
    flat = np.ascontiguousarray(values.reshape(m, -1))
    width = 8 + flat.shape[1] * 8
    key = np.empty((m, width), dtype=np.uint8)
    key[:, :8] = np.asarray(index, dtype=">u8").view(np.uint8).reshape(m, 8)
    key[:, 8:] = flat.view(np.uint8).reshape(m, -1)
    order = np.argsort(key.view(np.dtype((np.void, width))).ravel())
    keys = np.asarray(index)[order]
    starts = np.flatnonzero(np.r_[True, keys[1:] != keys[:-1]])
    out.reshape(num_rows, -1)[keys[starts]] = np.add.reduceat(flat[order], starts, axis=0)
    return out


def index_add(num_rows: int, index: np.ndarray, g: np.ndarray) -> np.ndarray:
    """``out[index[e]] += g[e]`` (the adjoint of a row gather)."""
    out = np.zeros((num_rows,) + g.shape[1:], dtype=DTYPE)
    if len(index) == 0:
        return out
    order = np.argsort(index, kind="stable")
    keys = index[order]
    starts = np.flatnonzero(np.r_[True, keys[1:] != keys[:-1]])
    out[keys[starts]] = np.add.reduceat(g[order], starts, axis=0)
    return out


def scatter_add(a, index, num_rows: int) -> Value:
    """Row ``r`` of the output is the sum of rows ``a[e]`` with ``index[e] == r``."""
    a = as_value(a)
    index = np.asarray(index, dtype=np.int64)
    if a.ndim < 1 or len(index) != a.shape[0]:
        raise ShapeError(f"scatter_add: {len(index)} indices for {a.shape[0]} rows")
    if len(index) and (index.min() < 0 or index.max() >= num_rows):
        raise ShapeError("scatter_add: index out of range")
    return record(segment_sum(a.data, index, num_rows), (a,), lambda g: (g[index],))


# elementwise unary ----------------------------------------------------------

def sqrt(a) -> Value:
    """Square root; at exactly zero the derivative is taken as 0 (subgradient)."""
    a = as_value(a)
    if np.any(a.data < 0):
        raise DomainError("sqrt of a negative input")
    out = np.sqrt(a.data)

    def vjp(g):
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, g / (2.0 * safe), 0.0),)

    return record(out, (a,), vjp)


def log(a) -> Value:
    a = as_value(a)
    if np.any(a.data <= 0):
        raise DomainError("log of a non-positive input")
    return record(np.log(a.data), (a,), lambda g: (g / a.data,))


def exp(a) -> Value:
    a = as_value(a)
    out = np.exp(a.data)
    return record(out, (a,), lambda g: (g * out,))


def tanh(a) -> Value:
    a = as_value(a)
    out = np.tanh(a.data)
    return record(out, (a,), lambda g: (g * (1.0 - out * out),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(a) -> Value:
    a = as_value(a)
    out = _sigmoid(a.data)
    return record(out, (a,), lambda g: (g * out * (1.0 - out),))


def softplus(a) -> Value:
    a = as_value(a)
    x = a.data
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return record(out, (a,), lambda g: (g * _sigmoid(x),))


def relu(a) -> Value:
    a = as_value(a)
    mask = a.data > 0
    return record(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def maximum(a, c: float) -> Value:
    """Elementwise max with a constant; gradient is 0 at and below the kink."""
    a = as_value(a)
    mask = a.data > c
    return record(np.where(mask, a.data, c), (a,), lambda g: (g * mask,))


def minimum(a, c: float) -> Value:
    a = as_value(a)
    mask = a.data < c
    return record(np.where(mask, a.data, c), (a,), lambda g: (g * mask,))


def clip(a, lo: float, hi: float) -> Value:
    return minimum(maximum(a, lo), hi)


def dropout(a, rate: float, rng: np.random.Generator) -> Value:
    """Inverted dropout; the sampled mask is captured for the backward pass."""
    a = as_value(a)
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return a
    mask = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return record(a.data * mask, (a,), lambda g: (g * mask,))


def logsumexp_rows(a) -> Value:
    """Row-wise log-sum-exp with max subtraction."""
    a = as_value(a)
    m = a.data.max(axis=1, keepdims=True)
    shifted = sub(a, m)
    return add(log(vsum(exp(shifted), axis=1)), m[:, 0])


def scale_grad(a, factor: float) -> Value:
    """Identity in the forward pass, gradient multiplied by ``factor``.

    Only used to plant deliberately wrong gradients in negative controls.
    """
    a = as_value(a)
    return record(a.data.copy(), (a,), lambda g: (g * factor,))


# gradient checking ----------------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_error: float
    passed: bool
    worst_index: int
    analytic: np.ndarray
    numeric: np.ndarray


def gradient(f: Callable[[Value], Value], x0) -> tuple[float, np.ndarray]:
    """Value and gradient of a scalar function of one flat parameter vector."""
    x = Value(np.asarray(x0, dtype=DTYPE), requires_grad=True)
    with Tape() as tape:
        root = f(x)
    tape.backward(root)
    grad = x.grad if x.grad is not None else np.zeros_like(x.data)
    return float(root.data), grad


def finite_difference_check(
    f: Callable[[Value], Value],
    x0,
    step: float = 1e-4,
    tol: float = 1e-5,
) -> GradCheckReport:
    """Compare ``backward`` against central differences, coordinate by coordinate.

    The relative error of coordinate k is
    ``|a_k - n_k| / max(1, |a_k|, |n_k|)``.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x0 = np.asarray(x0, dtype=DTYPE).ravel()
    _, analytic = gradient(f, x0)
    numeric = np.empty_like(x0)
    probe = x0.copy()
    with no_record():
        for k in range(x0.size):
            probe[k] = x0[k] + step
            fp = float(f(Value(probe)).data)
            probe[k] = x0[k] - step
            fm = float(f(Value(probe)).data)
            probe[k] = x0[k]
            numeric[k] = (fp - fm) / (2.0 * step)
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    rel = np.abs(analytic - numeric) / denom
    worst = int(np.argmax(rel)) if rel.size else -1
    max_rel = float(rel.max()) if rel.size else 0.0
    return GradCheckReport(max_rel, bool(max_rel < tol), worst, analytic, numeric)
