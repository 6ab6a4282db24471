"""Dense tensors with reverse-mode automatic differentiation.

A Tensor wraps a row-major (C-contiguous) numpy float buffer.  Every
operation that involves at least one ``requires_grad`` input records a
tape node holding references to its inputs and a backward rule; calling
:meth:`Tensor.backward` on a scalar replays the recorded nodes once each,
in reverse topological order, accumulating gradients into ``.grad``
buffers of the same shape as their tensors.

Tensors are treated as immutable after creation (gradient accumulation
excepted), so read-only inference over a built model is safe from many
threads; recording can be suspended with :func:`inference_mode`, which is
tracked per-thread.
"""

from __future__ import annotations

import math
import threading
from typing import Optional, Sequence

import numpy as np

from ..errors import DimensionError, UsageError

DEFAULT_DTYPE = np.float32

_state = threading.local()


def _recording_enabled() -> bool:
    return getattr(_state, "record", True)


class inference_mode:
    """Context manager that suspends tape recording on the current thread."""

    def __enter__(self):
        self._prev = _recording_enabled()
        _state.record = False
        return self

    def __exit__(self, *exc):
        _state.record = self._prev
        return False


class TapeNode:
    """One recorded operation: inputs, output, and its backward rule."""

    __slots__ = ("op", "parents", "backward")

    def __init__(self, op, parents, backward):
        self.op = op
        self.parents = parents
        self.backward = backward


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "node")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else None)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = np.ascontiguousarray(arr)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.node: Optional[TapeNode] = None

    # -- basic introspection ------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    # -- gradient machinery --------------------------------------------------

    def accumulate_grad(self, g: np.ndarray):
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self):
        """Backpropagate from this scalar through the recorded tape."""
        if self.data.size != 1:
            raise UsageError(f"backward() requires a scalar loss, got shape {self.data.shape}")
        tape = _topo_order(self)
        self.accumulate_grad(np.ones_like(self.data))
        for node_tensor in reversed(tape):
            node = node_tensor.node
            out_grad = node_tensor.grad
            if out_grad is None:
                continue
            grads = node.backward(out_grad)
            for parent, g in zip(node.parents, grads):
                if g is not None and parent.requires_grad:
                    parent.accumulate_grad(g)
            if node_tensor is not self:
                node_tensor.grad = None  # intermediates are single-use

    # -- operator sugar --------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_coerce(other, self.dtype), self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_coerce(other, self.dtype), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        from .ops import matmul

        return matmul(self, other)

    def __getitem__(self, idx):
        return narrow(self, idx)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes=None):
        return transpose(self, axes)


def _coerce(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


def _make(data: np.ndarray, op: str, parents, backward) -> Tensor:
    """Wrap an op result; record a tape node when gradients are needed."""
    out = Tensor(data)
    if _recording_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.node = TapeNode(op, tuple(parents), backward)
    return out


def _topo_order(root: Tensor):
    """Recorded nodes reachable from ``root``, in forward (topological) order."""
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if id(t) in seen or t.node is None:
            continue
        seen.add(id(t))
        stack.append((t, True))
        for p in t.node.parents:
            if p.node is not None and id(p) not in seen:
                stack.append((p, False))
    return order


def unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == tuple(shape):
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# -- elementwise arithmetic ------------------------------------------------


def add(a, b) -> Tensor:
    a = _coerce(a, getattr(b, "dtype", DEFAULT_DTYPE))
    b = _coerce(b, a.dtype)
    out = a.data + b.data

    def backward(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return _make(out, "add", (a, b), backward)


def sub(a, b) -> Tensor:
    a = _coerce(a, getattr(b, "dtype", DEFAULT_DTYPE))
    b = _coerce(b, a.dtype)
    out = a.data - b.data

    def backward(g):
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)

    return _make(out, "sub", (a, b), backward)


def mul(a, b) -> Tensor:
    a = _coerce(a, getattr(b, "dtype", DEFAULT_DTYPE))
    b = _coerce(b, a.dtype)
    out = a.data * b.data

    def backward(g):
        return unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)

    return _make(out, "mul", (a, b), backward)


def div(a, b) -> Tensor:
    a = _coerce(a, getattr(b, "dtype", DEFAULT_DTYPE))
    b = _coerce(b, a.dtype)
    out = a.data / b.data

    def backward(g):
        ga = unbroadcast(g / b.data, a.shape)
        gb = unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return _make(out, "div", (a, b), backward)


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, "neg", (a,), lambda g: (-g,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make(out, "exp", (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    out = np.log(a.data)
    return _make(out, "log", (a,), lambda g: (g / a.data,))


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return _make(out, "sqrt", (a,), lambda g: (g * (0.5 / out),))


def sigmoid(a: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-a.data))
    return _make(out, "sigmoid", (a,), lambda g: (g * out * (1.0 - out),))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a: Tensor) -> Tensor:
    """Tanh-approximated GELU (smooth, so finite-difference checks behave)."""
    x = a.data
    x2 = x * x
    t = np.tanh(_GELU_C * (x + 0.044715 * (x * x2)))
    out = 0.5 * x * (1.0 + t)

    def backward(g):
        dinner = _GELU_C * (1.0 + 0.134145 * x2)
        dout = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
        return (g * dout,)

    return _make(out, "gelu", (a,), backward)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    out = np.clip(a.data, lo, hi)
    inside = ((a.data > lo) & (a.data < hi)).astype(a.data.dtype)
    return _make(out, "clip", (a,), lambda g: (g * inside,))


def absval(a: Tensor) -> Tensor:
    out = np.abs(a.data)
    return _make(out, "abs", (a,), lambda g: (g * np.sign(a.data),))


def maximum(a, b) -> Tensor:
    a = _coerce(a, getattr(b, "dtype", DEFAULT_DTYPE))
    b = _coerce(b, a.dtype)
    out = np.maximum(a.data, b.data)

    def backward(g):
        pick_a = (a.data > b.data).astype(g.dtype) + 0.5 * (a.data == b.data)
        return unbroadcast(g * pick_a, a.shape), unbroadcast(g * (1.0 - pick_a), b.shape)

    return _make(out, "maximum", (a, b), backward)


def minimum(a, b) -> Tensor:
    a = _coerce(a, getattr(b, "dtype", DEFAULT_DTYPE))
    b = _coerce(b, a.dtype)
    out = np.minimum(a.data, b.data)

    def backward(g):
        pick_a = (a.data < b.data).astype(g.dtype) + 0.5 * (a.data == b.data)
        return unbroadcast(g * pick_a, a.shape), unbroadcast(g * (1.0 - pick_a), b.shape)

    return _make(out, "minimum", (a, b), backward)


# -- reductions --------------------------------------------------------------


def reduce_sum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).astype(a.dtype, copy=True),)
        gg = g
        if not keepdims:
            gg = np.expand_dims(gg, axis)
        return (np.broadcast_to(gg, a.shape).astype(a.dtype, copy=True),)

    return _make(out, "sum", (a,), backward)


def reduce_mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size if axis is None else a.data.shape[axis]

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g / count, a.shape).astype(a.dtype, copy=True),)
        gg = g
        if not keepdims:
            gg = np.expand_dims(gg, axis)
        return (np.broadcast_to(gg / count, a.shape).astype(a.dtype, copy=True),)

    return _make(out, "mean", (a,), backward)


# -- shape manipulation -------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    out = a.data.reshape(shape)
    return _make(out, "reshape", (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes=None) -> Tensor:
    out = np.ascontiguousarray(a.data.transpose(axes))
    inv = None if axes is None else np.argsort(axes)

    def backward(g):
        return (np.ascontiguousarray(g.transpose(inv)),)

    return _make(out, "transpose", (a,), backward)


def narrow(a: Tensor, idx) -> Tensor:
    """Basic (slice/int) indexing; fancy index arrays are not supported."""
    out = a.data[idx]
    if np.isscalar(out) or out.ndim == 0:
        out = np.asarray(out)

    def backward(g):
        gx = np.zeros_like(a.data)
        gx[idx] += g  # basic slices never alias, so += is a plain scatter
        return (gx,)

    return _make(out, "narrow", (a,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise DimensionError("concat requires at least one tensor")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return _make(out, "concat", tuple(tensors), backward)
