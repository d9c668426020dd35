"""Cross-checks between the compiled kernels and the NumPy reference
implementations.  Skipped entirely when the extension is not built."""

import numpy as np
import pytest

from mapnet import kernels
from mapnet.kernels import numpy_kernels

fast = pytest.importorskip("mapnet.kernels._fast")


def rand(g, shape, dtype):
    return g.normal(size=shape).astype(dtype)


TOLS = {np.float32: dict(rtol=1e-5, atol=1e-5),
        np.float64: dict(rtol=1e-12, atol=1e-12)}


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
@pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1)])
def test_conv2d_forward_agrees(dtype, stride, pad):
    g = np.random.default_rng(0)
    x = rand(g, (2, 3, 9, 11), dtype)
    w = rand(g, (4, 3, 3, 3), dtype)
    b = rand(g, (4,), dtype)
    a = fast.conv2d_forward(x, w, b, stride, pad)
    n = numpy_kernels.conv2d_forward(x, w, b, stride, pad)
    np.testing.assert_allclose(a, n, **TOLS[dtype])


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
@pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1)])
def test_conv2d_backward_agrees(dtype, stride, pad):
    g = np.random.default_rng(1)
    x = rand(g, (2, 3, 9, 11), dtype)
    w = rand(g, (4, 3, 3, 3), dtype)
    b = rand(g, (4,), dtype)
    y = numpy_kernels.conv2d_forward(x, w, b, stride, pad)
    gy = rand(g, y.shape, dtype)
    ga = fast.conv2d_backward(x, w, stride, pad, gy)
    gn = numpy_kernels.conv2d_backward(x, w, stride, pad, gy)
    for got, ref in zip(ga, gn):
        np.testing.assert_allclose(got, ref, **TOLS[dtype])


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_maxpool_agrees_including_argmax(dtype):
    g = np.random.default_rng(2)
    x = rand(g, (2, 3, 8, 10), dtype)
    ya, arga = fast.maxpool_forward(x, 2, 2, 2, 2)
    yn, argn = numpy_kernels.maxpool_forward(x, 2, 2, 2, 2)
    np.testing.assert_array_equal(ya, yn)
    np.testing.assert_array_equal(arga, argn)
    gy = rand(g, ya.shape, dtype)
    gxa = fast.maxpool_backward(x.shape, np.asarray(arga, dtype=np.int64),
                                gy, 2, 2, 2, 2)
    gxn = numpy_kernels.maxpool_backward(x.shape, argn, gy, 2, 2, 2, 2)
    np.testing.assert_array_equal(gxa, gxn)


def test_maxpool_tie_break_agrees():
    # constant windows: the gradient must route to the first linear index
    x = np.ones((1, 1, 4, 4), dtype=np.float64)
    _, arga = fast.maxpool_forward(x, 2, 2, 2, 2)
    _, argn = numpy_kernels.maxpool_forward(x, 2, 2, 2, 2)
    np.testing.assert_array_equal(arga, argn)


def test_wrapper_promotes_mixed_precision():
    g = np.random.default_rng(3)
    x = g.normal(size=(1, 2, 6, 6)).astype(np.float32)
    w = g.normal(size=(2, 2, 3, 3)).astype(np.float64)
    b = np.zeros(2, dtype=np.float32)
    out = kernels.conv2d_forward(x, w, b, 1, 1)
    assert out.dtype == np.float64


def test_active_backend_reports_cython():
    assert kernels.active_backend() == "cython"


def test_forced_backends_agree_end_to_end(tmp_path):
    """The same seeded forward pass run under MAPNET_BACKEND=cython and
    MAPNET_BACKEND=numpy must agree to floating-point tolerance."""
    import os
    import subprocess
    import sys

    script = tmp_path / "probe.py"
    script.write_text(
        "import sys\n"
        "import numpy as np\n"
        "from mapnet.model import Model, ModelConfig\n"
        "from mapnet.tensor import Tensor\n"
        "m = Model(ModelConfig(base_channels=8, n_blocks=3,\n"
        "                      input_hw=(32, 32), variant='full'), seed=0)\n"
        "x = Tensor(np.random.default_rng(0)\n"
        "           .uniform(size=(1, 3, 32, 32)).astype(np.float32))\n"
        "np.save(sys.argv[1], m.forward(x, mode='infer').data)\n"
    )
    outs = {}
    for backend in ("cython", "numpy"):
        env = dict(os.environ, MAPNET_BACKEND=backend)
        out = tmp_path / f"{backend}.npy"
        subprocess.run([sys.executable, str(script), str(out)],
                       check=True, env=env)
        outs[backend] = np.load(out)
    np.testing.assert_allclose(outs["cython"], outs["numpy"],
                               rtol=1e-4, atol=1e-5)
