# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled direct-loop kernels for convolution and max pooling.

Signatures mirror numpy_kernels; dispatch happens in kernels.__init__.
"""

import numpy as np

cimport cython

ctypedef fused real:
    float
    double


def conv2d_forward(real[:, :, :, ::1] x, real[:, :, :, ::1] w, real[::1] b,
                   int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], ic = x.shape[1], h = x.shape[2], ww = x.shape[3]
    cdef Py_ssize_t oc = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t oh = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t ow = (ww + 2 * pad - kw) // stride + 1
    dtype = np.float32 if real is float else np.float64
    y_arr = np.empty((n, oc, oh, ow), dtype=dtype)
    cdef real[:, :, :, ::1] y = y_arr
    cdef Py_ssize_t bi, o, c, i, j, p, q, ii, jj
    cdef real acc
    for bi in range(n):
        for o in range(oc):
            for i in range(oh):
                for j in range(ow):
                    acc = b[o]
                    for c in range(ic):
                        for p in range(kh):
                            ii = i * stride + p - pad
                            if ii < 0 or ii >= h:
                                continue
                            for q in range(kw):
                                jj = j * stride + q - pad
                                if jj < 0 or jj >= ww:
                                    continue
                                acc = acc + x[bi, c, ii, jj] * w[o, c, p, q]
                    y[bi, o, i, j] = acc
    return y_arr


def conv2d_backward(real[:, :, :, ::1] x, real[:, :, :, ::1] w,
                    int stride, int pad, real[:, :, :, ::1] gy):
    cdef Py_ssize_t n = x.shape[0], ic = x.shape[1], h = x.shape[2], ww = x.shape[3]
    cdef Py_ssize_t oc = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t oh = gy.shape[2], ow = gy.shape[3]
    dtype = np.float32 if real is float else np.float64
    gx_arr = np.zeros((n, ic, h, ww), dtype=dtype)
    gw_arr = np.zeros((oc, ic, kh, kw), dtype=dtype)
    gb_arr = np.zeros(oc, dtype=dtype)
    cdef real[:, :, :, ::1] gx = gx_arr
    cdef real[:, :, :, ::1] gw = gw_arr
    cdef real[::1] gb = gb_arr
    cdef Py_ssize_t bi, o, c, i, j, p, q, ii, jj
    cdef real g
    for bi in range(n):
        for o in range(oc):
            for i in range(oh):
                for j in range(ow):
                    g = gy[bi, o, i, j]
                    gb[o] += g
                    for c in range(ic):
                        for p in range(kh):
                            ii = i * stride + p - pad
                            if ii < 0 or ii >= h:
                                continue
                            for q in range(kw):
                                jj = j * stride + q - pad
                                if jj < 0 or jj >= ww:
                                    continue
                                gw[o, c, p, q] += g * x[bi, c, ii, jj]
                                gx[bi, c, ii, jj] += g * w[o, c, p, q]
    return gx_arr, gw_arr, gb_arr


def maxpool_forward(real[:, :, :, ::1] x, int kh, int kw, int sh, int sw):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = (h - kh) // sh + 1
    cdef Py_ssize_t ow = (w - kw) // sw + 1
    dtype = np.float32 if real is float else np.float64
    y_arr = np.empty((n, c, oh, ow), dtype=dtype)
    arg_arr = np.empty((n, c, oh, ow), dtype=np.int64)
    cdef real[:, :, :, ::1] y = y_arr
    cdef long long[:, :, :, ::1] arg = arg_arr
    cdef Py_ssize_t bi, ch, i, j, p, q, best
    cdef real v, m
    for bi in range(n):
        for ch in range(c):
            for i in range(oh):
                for j in range(ow):
                    m = x[bi, ch, i * sh, j * sw]
                    best = 0
                    for p in range(kh):
                        for q in range(kw):
                            v = x[bi, ch, i * sh + p, j * sw + q]
                            if v > m:
                                m = v
                                best = p * kw + q
                    y[bi, ch, i, j] = m
                    arg[bi, ch, i, j] = best
    return y_arr, arg_arr


def maxpool_backward(xshape, long long[:, :, :, ::1] arg,
                     real[:, :, :, ::1] gy, int kh, int kw, int sh, int sw):
    cdef Py_ssize_t n = xshape[0], c = xshape[1], h = xshape[2], w = xshape[3]
    cdef Py_ssize_t oh = gy.shape[2], ow = gy.shape[3]
    dtype = np.float32 if real is float else np.float64
    gx_arr = np.zeros((n, c, h, w), dtype=dtype)
    cdef real[:, :, :, ::1] gx = gx_arr
    cdef Py_ssize_t bi, ch, i, j, a
    for bi in range(n):
        for ch in range(c):
            for i in range(oh):
                for j in range(ow):
                    a = arg[bi, ch, i, j]
                    gx[bi, ch, i * sh + a // kw, j * sw + a % kw] += gy[bi, ch, i, j]
    return gx_arr
