"""Pure NumPy reference kernels for the hot inner loops.

Convolution goes through im2col so the multiply-accumulate runs inside BLAS;
pooling uses strided window views.  The compiled backend in ``_fast`` mirrors
these signatures exactly.
"""

from __future__ import annotations

import numpy as np


def _im2col(x, kh, kw, stride, pad):
    n, c, h, w = x.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    s0, s1, s2, s3 = x.strides
    cols = np.lib.stride_tricks.as_strided(
        x,
        (n, c, kh, kw, oh, ow),
        (s0, s1, s2, s3, s2 * stride, s3 * stride),
        writeable=False,
    )
    return np.ascontiguousarray(cols).reshape(n, c * kh * kw, oh * ow), oh, ow


def _col2im(gcols, xshape, kh, kw, stride, pad):
    n, c, h, w = xshape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    gx = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=gcols.dtype)
    g6 = gcols.reshape(n, c, kh, kw, oh, ow)
    for i in range(kh):
        for j in range(kw):
            gx[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += g6[
                :, :, i, j
            ]
    if pad:
        gx = gx[:, :, pad : pad + h, pad : pad + w]
    return np.ascontiguousarray(gx)


def conv2d_forward(x, w, b, stride, pad):
    oc, ic, kh, kw = w.shape
    n = x.shape[0]
    cols, oh, ow = _im2col(x, kh, kw, stride, pad)
    y = w.reshape(oc, ic * kh * kw)[None] @ cols
    y = y.reshape(n, oc, oh, ow)
    y += b.reshape(1, oc, 1, 1)
    return y


def conv2d_backward(x, w, stride, pad, gy):
    oc, ic, kh, kw = w.shape
    n = x.shape[0]
    cols, oh, ow = _im2col(x, kh, kw, stride, pad)
    gyf = gy.reshape(n, oc, oh * ow)
    gw = np.einsum("nol,nkl->ok", gyf, cols).reshape(w.shape)
    gb = gy.sum(axis=(0, 2, 3))
    gcols = w.reshape(oc, ic * kh * kw).T[None] @ gyf
    gx = _col2im(gcols, x.shape, kh, kw, stride, pad)
    return gx, gw, gb


def _windows(x, kh, kw, sh, sw):
    n, c, h, w = x.shape
    oh = (h - kh) // sh + 1
    ow = (w - kw) // sw + 1
    s0, s1, s2, s3 = x.strides
    view = np.lib.stride_tricks.as_strided(
        x,
        (n, c, oh, ow, kh, kw),
        (s0, s1, s2 * sh, s3 * sw, s2, s3),
        writeable=False,
    )
    return view, oh, ow


def maxpool_forward(x, kh, kw, sh, sw):
    view, oh, ow = _windows(x, kh, kw, sh, sw)
    flat = view.reshape(*view.shape[:4], kh * kw)
    # argmax takes the first maximum, i.e. the lowest linear window index
    arg = flat.argmax(axis=-1)
    y = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(y), arg.astype(np.int64)

def maxpool_backward(xshape, arg, gy, kh, kw, sh, sw):
    n, c, h, w = xshape
    oh, ow = gy.shape[2], gy.shape[3]
    gx = np.zeros(xshape, dtype=gy.dtype)
    oi, oj = np.meshgrid(np.arange(oh), np.arange(ow), indexing="ij")
    ri = oi[None, None] * sh + arg // kw
    rj = oj[None, None] * sw + arg % kw
    ni = np.arange(n)[:, None, None, None]
    ci = np.arange(c)[None, :, None, None]
    np.add.at(gx, (ni, ci, ri, rj), gy)
    return gx


def avgpool_forward(x, kh, kw, sh, sw):
    view, oh, ow = _windows(x, kh, kw, sh, sw)
    return np.ascontiguousarray(view.mean(axis=(4, 5)))


def avgpool_backward(xshape, gy, kh, kw, sh, sw):
    n, c, h, w = xshape
    oh, ow = gy.shape[2], gy.shape[3]
    gx = np.zeros(xshape, dtype=gy.dtype)
    g = gy / (kh * kw)
    for i in range(kh):
        for j in range(kw):
            gx[:, :, i : i + sh * oh : sh, j : j + sw * ow : sw] += g
    return gx
