# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled convolution kernels.

Loops are ordered tap-outermost so the innermost loop walks output and
input rows contiguously with no bounds branches (the valid j-range per tap
is solved in advance). Semantics are identical to kernels.pure (SAME zero
padding, ceil output sizes); the test suite cross-checks the two backends
element for element.
"""

import numpy as np

cimport cython

from .common import same_geometry


cdef inline Py_ssize_t _j_lo(Py_ssize_t pad, Py_ssize_t v, Py_ssize_t stride) nogil:
    cdef Py_ssize_t d = pad - v
    if d <= 0:
        return 0
    return (d + stride - 1) // stride


cdef inline Py_ssize_t _j_hi(Py_ssize_t n, Py_ssize_t pad, Py_ssize_t v,
                             Py_ssize_t stride, Py_ssize_t limit) nogil:
    # largest j with j*stride + v - pad <= n-1
    cdef Py_ssize_t hi = (n - 1 + pad - v) // stride
    if hi > limit:
        return limit
    return hi


def conv2d_forward(double[:, :, ::1] x, double[:, :, :, ::1] kernel, int stride):
    cdef Py_ssize_t c_in = x.shape[0], h = x.shape[1], w = x.shape[2]
    cdef Py_ssize_t c_out = kernel.shape[0], kh = kernel.shape[2], kw = kernel.shape[3]
    oh_py, pt_py = same_geometry(h, kh, stride)
    ow_py, pl_py = same_geometry(w, kw, stride)
    cdef Py_ssize_t oh = oh_py, ow = ow_py, pt = pt_py, pl = pl_py
    out_arr = np.zeros((c_out, oh, ow))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t o, c, i, j, u, v, ii, j0, j1, base
    cdef double wt
    with nogil:
        for o in range(c_out):
            for c in range(c_in):
                for u in range(kh):
                    for v in range(kw):
                        wt = kernel[o, c, u, v]
                        j0 = _j_lo(pl, v, stride)
                        j1 = _j_hi(w, pl, v, stride, ow - 1)
                        base = v - pl
                        for i in range(oh):
                            ii = i * stride + u - pt
                            if ii < 0 or ii >= h:
                                continue
                            for j in range(j0, j1 + 1):
                                out[o, i, j] += wt * x[c, ii, j * stride + base]
    return out_arr


def conv2d_backward_input(double[:, :, ::1] gout, double[:, :, :, ::1] kernel,
                          int stride, int in_h, int in_w):
    cdef Py_ssize_t c_out = gout.shape[0], oh = gout.shape[1], ow = gout.shape[2]
    cdef Py_ssize_t c_in = kernel.shape[1], kh = kernel.shape[2], kw = kernel.shape[3]
    _, pt_py = same_geometry(in_h, kh, stride)
    _, pl_py = same_geometry(in_w, kw, stride)
    cdef Py_ssize_t pt = pt_py, pl = pl_py
    gx_arr = np.zeros((c_in, in_h, in_w))
    cdef double[:, :, ::1] gx = gx_arr
    cdef Py_ssize_t o, c, i, j, u, v, ii, j0, j1, base
    cdef double wt
    with nogil:
        for o in range(c_out):
            for c in range(c_in):
                for u in range(kh):
                    for v in range(kw):
                        wt = kernel[o, c, u, v]
                        j0 = _j_lo(pl, v, stride)
                        j1 = _j_hi(in_w, pl, v, stride, ow - 1)
                        base = v - pl
                        for i in range(oh):
                            ii = i * stride + u - pt
                            if ii < 0 or ii >= in_h:
                                continue
                            for j in range(j0, j1 + 1):
                                gx[c, ii, j * stride + base] += wt * gout[o, i, j]
    return gx_arr


def conv2d_backward_kernel(double[:, :, ::1] gout, double[:, :, ::1] x,
                           int kh, int kw, int stride):
    cdef Py_ssize_t c_out = gout.shape[0], oh = gout.shape[1], ow = gout.shape[2]
    cdef Py_ssize_t c_in = x.shape[0], h = x.shape[1], w = x.shape[2]
    _, pt_py = same_geometry(h, kh, stride)
    _, pl_py = same_geometry(w, kw, stride)
    cdef Py_ssize_t pt = pt_py, pl = pl_py
    gk_arr = np.zeros((c_out, c_in, kh, kw))
    cdef double[:, :, :, ::1] gk = gk_arr
    cdef Py_ssize_t o, c, i, j, u, v, ii, j0, j1, base
    cdef double acc
    with nogil:
        for o in range(c_out):
            for c in range(c_in):
                for u in range(kh):
                    for v in range(kw):
                        j0 = _j_lo(pl, v, stride)
                        j1 = _j_hi(w, pl, v, stride, ow - 1)
                        base = v - pl
                        acc = 0.0
                        for i in range(oh):
                            ii = i * stride + u - pt
                            if ii < 0 or ii >= h:
                                continue
                            for j in range(j0, j1 + 1):
                                acc += gout[o, i, j] * x[c, ii, j * stride + base]
                        gk[o, c, u, v] = acc
    return gk_arr


def depthwise_forward(double[:, :, ::1] x, double[:, :, ::1] kernel, int stride):
    cdef Py_ssize_t c_in = x.shape[0], h = x.shape[1], w = x.shape[2]
    cdef Py_ssize_t kh = kernel.shape[1], kw = kernel.shape[2]
    oh_py, pt_py = same_geometry(h, kh, stride)
    ow_py, pl_py = same_geometry(w, kw, stride)
    cdef Py_ssize_t oh = oh_py, ow = ow_py, pt = pt_py, pl = pl_py
    out_arr = np.zeros((c_in, oh, ow))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t c, i, j, u, v, ii, j0, j1, base
    cdef double wt
    with nogil:
        for c in range(c_in):
            for u in range(kh):
                for v in range(kw):
                    wt = kernel[c, u, v]
                    j0 = _j_lo(pl, v, stride)
                    j1 = _j_hi(w, pl, v, stride, ow - 1)
                    base = v - pl
                    for i in range(oh):
                        ii = i * stride + u - pt
                        if ii < 0 or ii >= h:
                            continue
                        for j in range(j0, j1 + 1):
                            out[c, i, j] += wt * x[c, ii, j * stride + base]
    return out_arr


def depthwise_backward_input(double[:, :, ::1] gout, double[:, :, ::1] kernel,
                             int stride, int in_h, int in_w):
    cdef Py_ssize_t c_in = gout.shape[0], oh = gout.shape[1], ow = gout.shape[2]
    cdef Py_ssize_t kh = kernel.shape[1], kw = kernel.shape[2]
    _, pt_py = same_geometry(in_h, kh, stride)
    _, pl_py = same_geometry(in_w, kw, stride)
    cdef Py_ssize_t pt = pt_py, pl = pl_py
    gx_arr = np.zeros((c_in, in_h, in_w))
    cdef double[:, :, ::1] gx = gx_arr
    cdef Py_ssize_t c, i, j, u, v, ii, j0, j1, base
    cdef double wt
    with nogil:
        for c in range(c_in):
            for u in range(kh):
                for v in range(kw):
                    wt = kernel[c, u, v]
                    j0 = _j_lo(pl, v, stride)
                    j1 = _j_hi(in_w, pl, v, stride, ow - 1)
                    base = v - pl
                    for i in range(oh):
                        ii = i * stride + u - pt
                        if ii < 0 or ii >= in_h:
                            continue
                        for j in range(j0, j1 + 1):
                            gx[c, ii, j * stride + base] += wt * gout[c, i, j]
    return gx_arr


def depthwise_backward_kernel(double[:, :, ::1] gout, double[:, :, ::1] x,
                              int kh, int kw, int stride):
    cdef Py_ssize_t c_in = gout.shape[0], oh = gout.shape[1], ow = gout.shape[2]
    cdef Py_ssize_t h = x.shape[1], w = x.shape[2]
    _, pt_py = same_geometry(h, kh, stride)
    _, pl_py = same_geometry(w, kw, stride)
    cdef Py_ssize_t pt = pt_py, pl = pl_py
    gk_arr = np.zeros((c_in, kh, kw))
    cdef double[:, :, ::1] gk = gk_arr
    cdef Py_ssize_t c, i, j, u, v, ii, j0, j1, base
    cdef double acc
    with nogil:
        for c in range(c_in):
            for u in range(kh):
                for v in range(kw):
                    j0 = _j_lo(pl, v, stride)
                    j1 = _j_hi(w, pl, v, stride, ow - 1)
                    base = v - pl
                    acc = 0.0
                    for i in range(oh):
                        ii = i * stride + u - pt
                        if ii < 0 or ii >= h:
                            continue
                        for j in range(j0, j1 + 1):
                            acc += gout[c, i, j] * x[c, ii, j * stride + base]
                    gk[c, u, v] = acc
    return gk_arr
