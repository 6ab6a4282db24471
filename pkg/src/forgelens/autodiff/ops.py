"""Differentiable operations built on the tape in :mod:`tensor`.

Attention follows the standard per-query orientation: each query row gets
a softmax over key indices, so every output row is a convex combination of
value rows.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from ..errors import ConfigError, DimensionError, NumericError
from . import kernels
from .tensor import Tensor, _make, mul, reshape, transpose


def _reduce_to(grad: np.ndarray, shape) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    return np.ascontiguousarray(grad)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs 2-D or higher operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def backward(g):
        ga = _reduce_to(g @ b.data.swapaxes(-1, -2), a.shape)
        gb = _reduce_to(a.data.swapaxes(-1, -2) @ g, b.shape)
        return ga, gb

    return _make(out, "matmul", (a, b), backward)


def linear(x: Tensor, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    out = matmul(x, w)
    if b is not None:
        out = out + b
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    if not np.isfinite(x.data).all():
        raise NumericError("softmax input contains NaN/Inf")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _make(out, "softmax", (x,), backward)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    if not np.isfinite(x.data).all():
        raise NumericError("log_softmax input contains NaN/Inf")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _make(out, "log_softmax", (x,), backward)


def attention(q: Tensor, k: Tensor, v: Tensor, mask: Optional[Tensor] = None) -> Tensor:
    """Scaled dot-product attention over 2-D (rows x features) operands."""
    if q.shape[-1] != k.shape[-1]:
        raise DimensionError(f"query/key feature dims disagree: {q.shape} vs {k.shape}")
    if k.shape[0] != v.shape[0]:
        raise DimensionError(f"key/value row counts disagree: {k.shape} vs {v.shape}")
    scale = 1.0 / math.sqrt(q.shape[-1])
    scores = mul(matmul(q, transpose(k)), scale)
    if mask is not None:
        scores = scores + mask
    return matmul(softmax(scores, axis=-1), v)


def multi_head_attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    heads: int,
    w_out: Tensor,
    b_out: Optional[Tensor] = None,
    mask: Optional[Tensor] = None,
) -> Tensor:
    """Attention per feature slice ("head"), concatenated, then projected.

    Heads are evaluated together as one batched matmul over a
    (heads, rows, dim/heads) view; results equal slicing the features
    per head and running :func:`attention` on each slice.
    """
    dim = q.shape[-1]
    if dim % heads != 0:
        raise ConfigError(f"feature dim {dim} not divisible by {heads} heads")
    if q.shape[-1] != k.shape[-1]:
        raise DimensionError(f"query/key feature dims disagree: {q.shape} vs {k.shape}")
    if k.shape[0] != v.shape[0]:
        raise DimensionError(f"key/value row counts disagree: {k.shape} vs {v.shape}")
    hd = dim // heads
    nq, nk = q.shape[0], k.shape[0]
    q3 = transpose(reshape(q, (nq, heads, hd)), (1, 0, 2))
    k3 = transpose(reshape(k, (nk, heads, hd)), (1, 0, 2))
    v3 = transpose(reshape(v, (nk, heads, hd)), (1, 0, 2))
    scores = mul(matmul(q3, transpose(k3, (0, 2, 1))), 1.0 / math.sqrt(hd))
    if mask is not None:
        scores = scores + mask
    out3 = matmul(softmax(scores, axis=-1), v3)
    merged = reshape(transpose(out3, (1, 0, 2)), (nq, dim))
    return linear(merged, w_out, b_out)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = xhat * gain.data + bias.data

    def backward(g):
        reduce_axes = tuple(range(g.ndim - 1))
        gg = g * gain.data
        gx = inv * (gg - gg.mean(axis=-1, keepdims=True) - xhat * (gg * xhat).mean(axis=-1, keepdims=True))
        ggain = (g * xhat).sum(axis=reduce_axes) if reduce_axes else g * xhat
        gbias = g.sum(axis=reduce_axes) if reduce_axes else g
        return gx.astype(x.dtype, copy=False), ggain, gbias

    return _make(out, "layer_norm", (x, gain, bias), backward)


def take_per_row(x: Tensor, cols) -> Tensor:
    """out[i] = x[i, cols[i]] for a 2-D tensor; rows are visited once each."""
    cols = np.asarray(cols, dtype=np.int64)
    rows = np.arange(cols.size)
    out = x.data[rows, cols]

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[rows, cols] = g
        return (gx,)

    return _make(out, "take_per_row", (x,), backward)


def embedding(table: Tensor, ids) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    out = table.data[ids]

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    return _make(out, "embedding", (table,), backward)


def l2_normalize(x: Tensor, eps: float = 1e-12) -> Tensor:
    """Normalize the last axis to unit Euclidean length."""
    from .tensor import reduce_sum, sqrt

    sq = reduce_sum(mul(x, x), axis=-1, keepdims=True)
    return x / sqrt(sq + eps)


def _common_dtype(x: Tensor, w: Tensor):
    dtype = np.result_type(x.dtype, w.dtype)
    xd = x.data if x.dtype == dtype else x.data.astype(dtype)
    wd = w.data if w.dtype == dtype else w.data.astype(dtype)
    return xd, wd, dtype


def conv2d(x: Tensor, w: Tensor, b: Optional[Tensor] = None, stride: int = 1) -> Tensor:
    """Valid (unpadded) strided convolution on a channels-last image."""
    if x.ndim != 3 or w.ndim != 4:
        raise DimensionError(f"conv2d expects (H,W,Ci) and (kh,kw,Ci,Co), got {x.shape}, {w.shape}")
    if x.shape[2] != w.shape[2]:
        raise DimensionError(f"conv2d channel mismatch: input {x.shape} vs kernel {w.shape}")
    xd, wd, dtype = _common_dtype(x, w)
    out = kernels.conv2d_forward(xd, wd, stride)

    def backward(g):
        gx, gw = kernels.conv2d_backward(xd, wd, np.ascontiguousarray(g, dtype=dtype), stride)
        return gx.astype(x.dtype, copy=False), gw.astype(w.dtype, copy=False)

    y = _make(np.asarray(out), "conv2d", (x, w), backward)
    if b is not None:
        y = y + b
    return y


def conv_transpose2d(x: Tensor, w: Tensor, b: Optional[Tensor] = None, stride: int = 1) -> Tensor:
    """Transposed convolution; output spatial size is (n-1)*stride + kernel."""
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    if x.ndim != 3 or w.ndim != 4:
        raise DimensionError(
            f"conv_transpose2d expects (h,w,Ci) and (kh,kw,Ci,Co), got {x.shape}, {w.shape}"
        )
    if x.shape[2] != w.shape[2]:
        raise DimensionError(f"conv_transpose2d channel mismatch: input {x.shape} vs kernel {w.shape}")
    xd, wd, dtype = _common_dtype(x, w)
    out = kernels.deconv2d_forward(xd, wd, stride)

    def backward(g):
        gx, gw = kernels.deconv2d_backward(xd, wd, np.ascontiguousarray(g, dtype=dtype), stride)
        return gx.astype(x.dtype, copy=False), gw.astype(w.dtype, copy=False)

    y = _make(np.asarray(out), "conv_transpose2d", (x, w), backward)
    if b is not None:
        y = y + b
    return y
