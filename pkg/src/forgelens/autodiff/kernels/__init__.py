"""Kernel backend selection.

Two implementations of the convolution kernels exist: a compiled Cython
loop nest and a numpy fallback built from strided-slice matmuls.  The
loop nest wins when the per-tap channel product is small (numpy call
overhead dominates there); the BLAS-backed fallback wins for wide
channels.  When the extension built, calls are routed by that measured
crossover (see benchmark.py); otherwise everything uses the fallback.
Setting FORGELENS_FORCE_REFERENCE=1 forces the fallback.
"""

import os

from . import reference

compiled = None
if os.environ.get("FORGELENS_FORCE_REFERENCE") != "1":
    try:
        from . import _convolve as compiled
    except ImportError:
        compiled = None

BACKEND = "compiled" if compiled is not None else "reference"

# Channel product below which the compiled loop nest beats BLAS slicing.
_SMALL = 512


def _route(w) -> "module":
    if compiled is None:
        return reference
    return compiled if w.shape[2] * w.shape[3] <= _SMALL else reference


def conv2d_forward(x, w, stride):
    return _route(w).conv2d_forward(x, w, stride)


def conv2d_backward(x, w, g, stride):
    return _route(w).conv2d_backward(x, w, g, stride)


def deconv2d_forward(x, w, stride):
    return _route(w).deconv2d_forward(x, w, stride)


def deconv2d_backward(x, w, g, stride):
    return _route(w).deconv2d_backward(x, w, g, stride)


__all__ = [
    "BACKEND",
    "compiled",
    "conv2d_forward",
    "conv2d_backward",
    "deconv2d_forward",
    "deconv2d_backward",
    "reference",
]
