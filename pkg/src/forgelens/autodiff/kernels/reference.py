"""Numpy reference implementations of the convolution kernels.

These are the import-time fallback for the compiled extension.  Both
backends implement the same six entry points on channels-last arrays:

    conv2d_forward(x, w, stride)            (H, W, Ci), (kh, kw, Ci, Co) -> (OH, OW, Co)
    conv2d_backward(x, w, g, stride)        -> (gx, gw)
    deconv2d_forward(x, w, stride)          (h, w, Ci), (kh, kw, Ci, Co) -> (OH, OW, Co)
    deconv2d_backward(x, w, g, stride)      -> (gx, gw)

No padding: conv output is floor((H - kh)/stride) + 1 per axis, transposed
conv output is (h - 1)*stride + kh.  The numpy versions loop only over the
(kh, kw) kernel taps; everything inside is a strided-slice matmul, so they
stay vectorized for the tap counts used here.
"""

import numpy as np

BACKEND = "reference"


def conv2d_forward(x, w, stride):
    kh, kw, ci, co = w.shape
    oh = (x.shape[0] - kh) // stride + 1
    ow = (x.shape[1] - kw) // stride + 1
    out = np.zeros((oh, ow, co), dtype=x.dtype)
    for ky in range(kh):
        for kx in range(kw):
            xs = x[ky : ky + stride * oh : stride, kx : kx + stride * ow : stride, :]
            out += xs @ w[ky, kx]
    return out


def conv2d_backward(x, w, g, stride):
    kh, kw, ci, co = w.shape
    oh, ow = g.shape[0], g.shape[1]
    gx = np.zeros_like(x)
    gw = np.zeros_like(w)
    g2 = g.reshape(oh * ow, co)
    for ky in range(kh):
        for kx in range(kw):
            xs = x[ky : ky + stride * oh : stride, kx : kx + stride * ow : stride, :]
            gw[ky, kx] = xs.reshape(oh * ow, ci).T @ g2
            gx[ky : ky + stride * oh : stride, kx : kx + stride * ow : stride, :] += g @ w[ky, kx].T
    return gx, gw


def deconv2d_forward(x, w, stride):
    kh, kw, ci, co = w.shape
    ih, iw = x.shape[0], x.shape[1]
    oh = (ih - 1) * stride + kh
    ow = (iw - 1) * stride + kw
    out = np.zeros((oh, ow, co), dtype=x.dtype)
    for ky in range(kh):
        for kx in range(kw):
            out[ky : ky + stride * ih : stride, kx : kx + stride * iw : stride, :] += x @ w[ky, kx]
    return out


def deconv2d_backward(x, w, g, stride):
    kh, kw, ci, co = w.shape
    ih, iw = x.shape[0], x.shape[1]
    gx = np.zeros_like(x)
    gw = np.zeros_like(w)
    x2 = x.reshape(ih * iw, ci)
    for ky in range(kh):
        for kx in range(kw):
            gs = g[ky : ky + stride * ih : stride, kx : kx + stride * iw : stride, :]
            gx += gs @ w[ky, kx].T
            gw[ky, kx] = x2.T @ gs.reshape(ih * iw, co)
    return gx, gw
