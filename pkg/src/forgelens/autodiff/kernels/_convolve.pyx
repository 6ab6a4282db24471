# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled convolution kernels (channels-last, no padding).

Mirrors kernels/reference.py; see that module for the contract.
"""

import numpy as np

ctypedef fused floating:
    float
    double

BACKEND = "compiled"


def conv2d_forward(floating[:, :, ::1] x, floating[:, :, :, ::1] w, int stride):
    cdef Py_ssize_t kh = w.shape[0], kw = w.shape[1], ci = w.shape[2], co = w.shape[3]
    cdef Py_ssize_t oh = (x.shape[0] - kh) // stride + 1
    cdef Py_ssize_t ow = (x.shape[1] - kw) // stride + 1
    if floating is float:
        out_np = np.zeros((oh, ow, co), dtype=np.float32)
    else:
        out_np = np.zeros((oh, ow, co), dtype=np.float64)
    cdef floating[:, :, ::1] out = out_np
    cdef Py_ssize_t oy, ox, ky, kx, c, o
    cdef floating xv
    with nogil:
        for oy in range(oh):
            for ox in range(ow):
                for ky in range(kh):
                    for kx in range(kw):
                        for c in range(ci):
                            xv = x[oy * stride + ky, ox * stride + kx, c]
                            for o in range(co):
                                out[oy, ox, o] += xv * w[ky, kx, c, o]
    return out_np


def conv2d_backward(floating[:, :, ::1] x, floating[:, :, :, ::1] w,
                    floating[:, :, ::1] g, int stride):
    cdef Py_ssize_t kh = w.shape[0], kw = w.shape[1], ci = w.shape[2], co = w.shape[3]
    cdef Py_ssize_t oh = g.shape[0], ow = g.shape[1]
    if floating is float:
        gx_np = np.zeros((x.shape[0], x.shape[1], x.shape[2]), dtype=np.float32)
        gw_np = np.zeros((kh, kw, ci, co), dtype=np.float32)
    else:
        gx_np = np.zeros((x.shape[0], x.shape[1], x.shape[2]), dtype=np.float64)
        gw_np = np.zeros((kh, kw, ci, co), dtype=np.float64)
    cdef floating[:, :, ::1] gx = gx_np
    cdef floating[:, :, :, ::1] gw = gw_np
    cdef Py_ssize_t oy, ox, ky, kx, c, o, iy, ix
    cdef floating xv, gv, acc
    with nogil:
        for oy in range(oh):
            for ox in range(ow):
                for ky in range(kh):
                    for kx in range(kw):
                        iy = oy * stride + ky
                        ix = ox * stride + kx
                        for c in range(ci):
                            xv = x[iy, ix, c]
                            acc = 0
                            for o in range(co):
                                gv = g[oy, ox, o]
                                gw[ky, kx, c, o] += xv * gv
                                acc += gv * w[ky, kx, c, o]
                            gx[iy, ix, c] += acc
    return gx_np, gw_np


def deconv2d_forward(floating[:, :, ::1] x, floating[:, :, :, ::1] w, int stride):
    cdef Py_ssize_t kh = w.shape[0], kw = w.shape[1], ci = w.shape[2], co = w.shape[3]
    cdef Py_ssize_t ih = x.shape[0], iw = x.shape[1]
    cdef Py_ssize_t oh = (ih - 1) * stride + kh
    cdef Py_ssize_t ow = (iw - 1) * stride + kw
    if floating is float:
        out_np = np.zeros((oh, ow, co), dtype=np.float32)
    else:
        out_np = np.zeros((oh, ow, co), dtype=np.float64)
    cdef floating[:, :, ::1] out = out_np
    cdef Py_ssize_t iy, ix, ky, kx, c, o, oy, ox
    cdef floating xv
    with nogil:
        for iy in range(ih):
            for ix in range(iw):
                for ky in range(kh):
                    for kx in range(kw):
                        oy = iy * stride + ky
                        ox = ix * stride + kx
                        for c in range(ci):
                            xv = x[iy, ix, c]
                            for o in range(co):
                                out[oy, ox, o] += xv * w[ky, kx, c, o]
    return out_np


def deconv2d_backward(floating[:, :, ::1] x, floating[:, :, :, ::1] w,
                      floating[:, :, ::1] g, int stride):
    cdef Py_ssize_t kh = w.shape[0], kw = w.shape[1], ci = w.shape[2], co = w.shape[3]
    cdef Py_ssize_t ih = x.shape[0], iw = x.shape[1]
    if floating is float:
        gx_np = np.zeros((ih, iw, ci), dtype=np.float32)
        gw_np = np.zeros((kh, kw, ci, co), dtype=np.float32)
    else:
        gx_np = np.zeros((ih, iw, ci), dtype=np.float64)
        gw_np = np.zeros((kh, kw, ci, co), dtype=np.float64)
    cdef floating[:, :, ::1] gx = gx_np
    cdef floating[:, :, :, ::1] gw = gw_np
    cdef Py_ssize_t iy, ix, ky, kx, c, o, oy, ox
    cdef floating xv, gv, acc
    with nogil:
        for iy in range(ih):
            for ix in range(iw):
                for ky in range(kh):
                    for kx in range(kw):
                        oy = iy * stride + ky
                        ox = ix * stride + kx
                        for c in range(ci):
                            xv = x[iy, ix, c]
                            acc = 0
                            for o in range(co):
                                gv = g[oy, ox, o]
                                gw[ky, kx, c, o] += xv * gv
                                acc += gv * w[ky, kx, c, o]
                            gx[iy, ix, c] += acc
    return gx_np, gw_np
