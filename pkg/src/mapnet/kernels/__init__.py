"""Kernel backend selection.

Two implementations exist for every hot kernel: a compiled extension
(``mapnet.kernels._fast``, built from Cython) and NumPy reference kernels.
In the default ``auto`` mode each operation routes to whichever
implementation benchmarks faster: convolution uses the NumPy im2col + BLAS
path, max pooling uses the compiled loops (see
``benchmarks/bench_kernels.py``).  Set ``MAPNET_BACKEND=numpy`` or
``MAPNET_BACKEND=cython`` to force one side everywhere (forcing cython
raises if the extension is missing).
"""

from __future__ import annotations

import os

import numpy as np

from . import numpy_kernels

_requested = os.environ.get("MAPNET_BACKEND", "auto").lower()

_fast = None
if _requested in ("auto", "cython"):
    try:
        import importlib

        _fast = importlib.import_module(f"{__name__}._fast")
    except ImportError:
        _fast = None
        if _requested == "cython":
            raise ImportError(
                "MAPNET_BACKEND=cython but the compiled extension is not built"
            )

BACKEND = "cython" if _fast is not None else "numpy"
_force_cython = _requested == "cython"


def active_backend() -> str:
    return BACKEND


def _contig(*arrays):
    """Contiguous arrays in a single common floating dtype."""
    dtype = np.result_type(*arrays)
    if dtype not in (np.float32, np.float64):
        dtype = np.float64
    return tuple(np.ascontiguousarray(a, dtype=dtype) for a in arrays)


def conv2d_forward(x, w, b, stride, pad):
    if _fast is None or not _force_cython:
        return numpy_kernels.conv2d_forward(x, w, b, stride, pad)
    x, w, b = _contig(x, w, b)
    return _fast.conv2d_forward(x, w, b, stride, pad)


def conv2d_backward(x, w, stride, pad, gy):
    if _fast is None or not _force_cython:
        return numpy_kernels.conv2d_backward(x, w, stride, pad, gy)
    x, w, gy = _contig(x, w, gy)
    return _fast.conv2d_backward(x, w, stride, pad, gy)


def maxpool_forward(x, kh, kw, sh, sw):
    if _fast is None:
        return numpy_kernels.maxpool_forward(x, kh, kw, sh, sw)
    x = np.ascontiguousarray(x)
    return _fast.maxpool_forward(x, kh, kw, sh, sw)


def maxpool_backward(xshape, arg, gy, kh, kw, sh, sw):
    if _fast is None:
        return numpy_kernels.maxpool_backward(xshape, arg, gy, kh, kw, sh, sw)
    arg = np.ascontiguousarray(arg, dtype=np.int64)
    gy = np.ascontiguousarray(gy)
    return _fast.maxpool_backward(tuple(xshape), arg, gy, kh, kw, sh, sw)


# average pooling stays on the vectorized NumPy path; it is not a hot spot
avgpool_forward = numpy_kernels.avgpool_forward
avgpool_backward = numpy_kernels.avgpool_backward
