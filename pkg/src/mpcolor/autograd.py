"""Minimal reverse-mode automatic differentiation over numpy float64 arrays.

The model here is small and fixed-architecture, so this deliberately supports
only the operations the coloring network and its losses need: dense affine
maps, a few elementwise nonlinearities, row softmax, gathers, column/overall
reductions, and per-destination segment aggregation for message passing.
Scalars are plain Python floats; everything else is a float64 ndarray.

Gradients are checked against central finite differences in the test suite;
every new op must keep that oracle green.
"""
from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

Array = np.ndarray

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable tape construction; values still compute, gradients do not."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _shape(v) -> tuple[int, ...]:
    return v.shape if isinstance(v, np.ndarray) else ()


def _unbroadcast(g, shape: tuple[int, ...]):
    """Reduce a broadcasted gradient back to the originating shape."""
    if not isinstance(g, np.ndarray):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    if shape == ():
        return float(g)
    return g


class Tensor:
    """A value plus the closure that routes its gradient to its parents."""

    __slots__ = ("value", "grad", "_parents", "_bw")

    def __init__(self, value, parents: tuple = (), bw: Callable | None = None):
        if isinstance(value, np.ndarray):
            if value.dtype != np.float64:
                value = value.astype(np.float64)
        elif not isinstance(value, float):
            value = float(value)
        self.value = value
        self.grad = None
        if _GRAD_ENABLED:
            self._parents = parents
            self._bw = bw
        else:
            self._parents = ()
            self._bw = None

    @property
    def shape(self) -> tuple[int, ...]:
        return _shape(self.value)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if isinstance(x, np.ndarray):
        return Tensor(x)
    return Tensor(float(x))


def _accum(t: Tensor, g) -> None:
    t.grad = g if t.grad is None else t.grad + g


def backward(t: Tensor) -> None:
    """Accumulate d(t)/d(node) into ``.grad`` over the whole tape feeding ``t``.

    Grads on the tape are reset first, so calling backward twice (e.g. for two
    losses sharing a forward pass) never double-counts; snapshot any gradient
    you need before the second call.
    """
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(t, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    for node in topo:
        node.grad = None
    t.grad = np.ones_like(t.value) if isinstance(t.value, np.ndarray) else 1.0
    for node in reversed(topo):
        if node._bw is not None and node.grad is not None:
            node._bw(node.grad)


# ---------------------------------------------------------------------------
# Elementwise / broadcasting arithmetic

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape

    def bw(g):
        _accum(a, _unbroadcast(g, sa))
        _accum(b, _unbroadcast(g, sb))

    return Tensor(a.value + b.value, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape

    def bw(g):
        _accum(a, _unbroadcast(g, sa))
        _accum(b, _unbroadcast(-g, sb))

    return Tensor(a.value - b.value, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape

    def bw(g):
        _accum(a, _unbroadcast(g * b.value, sa))
        _accum(b, _unbroadcast(g * a.value, sb))

    return Tensor(a.value * b.value, (a, b), bw)


def neg(a) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        _accum(a, -g)

    return Tensor(-a.value, (a,), bw)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.value.shape[-1] != b.value.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def bw(g):
        _accum(a, g @ b.value.T)
        _accum(b, a.value.T @ g)

    return Tensor(a.value @ b.value, (a, b), bw)


def affine(x, w, b) -> Tensor:
    """``x @ w + b`` as a single tape node; ``b`` broadcasts over rows."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.value.shape[-1] != w.value.shape[0]:
        raise ValueError(f"affine shape mismatch: {x.shape} @ {w.shape}")

    def bw(g):
        _accum(b, g.sum(axis=0))
        _accum(w, x.value.T @ g)
        _accum(x, g @ w.value.T)

    out = x.value @ w.value
    out += b.value
    return Tensor(out, (x, w, b), bw)


# ---------------------------------------------------------------------------
# Nonlinearities

def leaky_relu(a, slope: float = 0.01) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        scaled = g * slope
        np.copyto(scaled, g, where=a.value > 0)
        _accum(a, scaled)

    # max(x, slope*x) equals leaky relu for slope in [0, 1]
    out = a.value * slope
    np.maximum(a.value, out, out=out)
    return Tensor(out, (a,), bw)


def relu(a) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        _accum(a, g * (a.value > 0))

    return Tensor(np.maximum(a.value, 0.0), (a,), bw)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    s = 1.0 / (1.0 + np.exp(-a.value))

    def bw(g):
        _accum(a, g * s * (1.0 - s))

    return Tensor(s, (a,), bw)


def softmax_rows(a) -> Tensor:
    """Row-wise softmax of a 2-d array."""
    a = as_tensor(a)
    z = a.value - a.value.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=1, keepdims=True)

    def bw(g):
        _accum(a, (g - (g * s).sum(axis=1, keepdims=True)) * s)

    return Tensor(s, (a,), bw)


def log(a) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        _accum(a, g / a.value)

    return Tensor(np.log(a.value), (a,), bw)


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    s = np.sqrt(a.value)

    def bw(g):
        _accum(a, g * (0.5 / s))

    return Tensor(s, (a,), bw)


def abs_(a) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        _accum(a, g * np.sign(a.value))

    return Tensor(np.abs(a.value), (a,), bw)


def xlogx(a) -> Tensor:
    """x * log(x) with the 0 log 0 = 0 convention (and zero gradient there)."""
    a = as_tensor(a)
    pos = a.value > 0

    def bw(g):
        _accum(a, g * np.where(pos, np.log(np.where(pos, a.value, 1.0)) + 1.0, 0.0))

    val = np.where(pos, a.value * np.log(np.where(pos, a.value, 1.0)), 0.0)
    return Tensor(val, (a,), bw)


# ---------------------------------------------------------------------------
# Shape ops and reductions

def concat_cols(parts: Sequence) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    widths = [p.value.shape[1] for p in parts]
    offsets = np.cumsum([0] + widths)

    def bw(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            _accum(p, g[:, lo:hi])

    return Tensor(np.concatenate([p.value for p in parts], axis=1), tuple(parts), bw)


def gather_rows(a, idx: Array) -> Tensor:
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)

    def bw(g):
        z = np.zeros_like(a.value)
        if g.ndim == 2 and g.shape[1] <= 8:
            # bincount beats ufunc.at by a wide margin for narrow matrices
            for c in range(g.shape[1]):
                z[:, c] = np.bincount(idx, weights=g[:, c], minlength=z.shape[0])
        else:
            np.add.at(z, idx, g)
        _accum(a, z)

    return Tensor(a.value[idx], (a,), bw)


def gather_elems(a, rows: Array, cols: Array) -> Tensor:
    a = as_tensor(a)
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)

    def bw(g):
        z = np.zeros_like(a.value)
        np.add.at(z, (rows, cols), g)
        _accum(a, z)

    return Tensor(a.value[rows, cols], (a,), bw)


def sum_all(a) -> Tensor:
    a = as_tensor(a)
    shape = a.shape

    def bw(g):
        _accum(a, np.full(shape, g) if shape else g)

    return Tensor(float(np.sum(a.value)), (a,), bw)


def mean_all(a) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    size = int(np.prod(shape)) if shape else 1

    def bw(g):
        _accum(a, np.full(shape, g / size) if shape else g / size)

    return Tensor(float(np.mean(a.value)), (a,), bw)


def col_sums(a) -> Tensor:
    """Sum a 2-d array over rows, giving one total per column."""
    a = as_tensor(a)
    n = a.value.shape[0]

    def bw(g):
        _accum(a, np.broadcast_to(g, (n, g.shape[0])).copy())

    return Tensor(a.value.sum(axis=0), (a,), bw)


# ---------------------------------------------------------------------------
# Segment aggregation (messages grouped by destination node)

@dataclass(frozen=True)
class SegmentSpec:
    """Contiguous segments of an edge axis, one per destination node.

    Built from a dst array sorted non-decreasingly. Nodes with no incoming
    edges are simply absent from ``active`` and aggregate to zero rows.
    """

    n_rows: int
    active: Array   # node ids with >= 1 incoming edge
    starts: Array   # reduceat boundaries into the edge axis
    counts: Array   # segment lengths, aligned with active
    expand: Array   # per-edge index into active

    @classmethod
    def from_sorted_dst(cls, dst: Array, n_rows: int) -> "SegmentSpec":
        dst = np.asarray(dst, dtype=np.int64)
        if dst.size and np.any(np.diff(dst) < 0):
            raise ValueError("dst must be sorted non-decreasingly")
        active, counts = np.unique(dst, return_counts=True)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64)
        expand = np.repeat(np.arange(len(active), dtype=np.int64), counts)
        return cls(n_rows=n_rows, active=active, starts=starts, counts=counts, expand=expand)


def _scatter_rows(spec: SegmentSpec, rows: Array, width: int) -> Array:
    out = np.zeros((spec.n_rows, width))
    out[spec.active] = rows
    return out


def _segment_empty(a: Tensor, spec: SegmentSpec, width: int) -> Tensor:
    def bw(g):
        _accum(a, np.zeros_like(a.value))

    return Tensor(np.zeros((spec.n_rows, width)), (a,), bw)


def segment_sum(a, spec: SegmentSpec) -> Tensor:
    a = as_tensor(a)
    width = a.value.shape[1]
    if spec.active.size == 0:
        return _segment_empty(a, spec, width)

    def bw(g):
        _accum(a, g[spec.active][spec.expand])

    sums = np.add.reduceat(a.value, spec.starts, axis=0)
    return Tensor(_scatter_rows(spec, sums, width), (a,), bw)


def segment_mean(a, spec: SegmentSpec) -> Tensor:
    a = as_tensor(a)
    width = a.value.shape[1]
    if spec.active.size == 0:
        return _segment_empty(a, spec, width)
    inv = 1.0 / spec.counts[:, None]

    def bw(g):
        _accum(a, (g[spec.active] * inv)[spec.expand])

    means = np.add.reduceat(a.value, spec.starts, axis=0) * inv
    return Tensor(_scatter_rows(spec, means, width), (a,), bw)


def _segment_extreme(a, spec: SegmentSpec, ufunc) -> Tensor:
    a = as_tensor(a)
    width = a.value.shape[1]
    if spec.active.size == 0:
        return _segment_empty(a, spec, width)

    ext = ufunc.reduceat(a.value, spec.starts, axis=0)

    def bw(g):
        # Split the gradient evenly among tied extreme positions; with
        # continuous inputs ties only occur for identical messages.
        mask = a.value == ext[spec.expand]
        ties = np.add.reduceat(mask.astype(np.float64), spec.starts, axis=0)
        _accum(a, mask * ((g[spec.active] / ties)[spec.expand]))

    return Tensor(_scatter_rows(spec, ext, width), (a,), bw)


def segment_max(a, spec: SegmentSpec) -> Tensor:
    return _segment_extreme(a, spec, np.maximum)


def segment_min(a, spec: SegmentSpec) -> Tensor:
    return _segment_extreme(a, spec, np.minimum)
