"""4-D tensor type with reverse-mode automatic differentiation.

Feature maps are dense float arrays in (batch, channel, height, width)
order.  Every differentiable operation records its inputs and a backward
closure on the output tensor; ``backward`` walks the recorded tape in
reverse topological order.  Recording can be suspended with ``no_grad`` for
inference.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, ShapeError, UsageError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """A numeric array plus its place in the recorded computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None):
        self.data = np.asarray(data, dtype=dtype)
        if self.data.dtype not in (np.float32, np.float64):
            self.data = self.data.astype(np.float32)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"

    def item(self):
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g


def _record(out: Tensor, parents, backward) -> Tensor:
    if _grad_enabled and any(p.requires_grad or p._parents for p in parents):
        out.requires_grad = False
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _check_4d(x: Tensor, name: str):
    if x.data.ndim != 4:
        raise ShapeError(f"{name} must be 4-D (n,c,h,w), got shape {x.data.shape}")


def parameter(data, dtype=np.float32) -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=True)


# ---------------------------------------------------------------------------
# convolution / dense


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    _check_4d(x, "conv2d input")
    if stride < 1:
        raise ConfigError(f"conv2d stride must be positive, got {stride}")
    if pad < 0:
        raise ConfigError(f"conv2d pad must be non-negative, got {pad}")
    oc, ic, kh, kw = w.data.shape
    n, c, h, wid = x.data.shape
    if c != ic:
        raise ShapeError(
            f"conv2d channel mismatch: input has {c} channels, kernel expects {ic}"
        )
    if h + 2 * pad < kh or wid + 2 * pad < kw:
        raise ShapeError(
            f"conv2d geometry: padded input {h + 2 * pad}x{wid + 2 * pad} "
            f"smaller than kernel {kh}x{kw}"
        )
    y = kernels.conv2d_forward(x.data, w.data, b.data, stride, pad)
    out = Tensor(y)

    def backward(gy):
        gx, gw, gb = kernels.conv2d_backward(x.data, w.data, stride, pad, gy)
        x.accumulate_grad(gx)
        w.accumulate_grad(gw)
        b.accumulate_grad(gb)

    return _record(out, (x, w, b), backward)


def dense(v: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map on (n, k, 1, 1) tensors; weight shape (k_out, k)."""
    _check_4d(v, "dense input")
    n, k, h, wd = v.data.shape
    if h != 1 or wd != 1:
        raise ShapeError(f"dense input must be (n,k,1,1), got {v.data.shape}")
    k_out, k_in = w.data.shape
    if k_in != k:
        raise ShapeError(f"dense length mismatch: input {k} vs weight {k_in}")
    flat = v.data.reshape(n, k)
    y = flat @ w.data.T + b.data
    out = Tensor(y.reshape(n, k_out, 1, 1))

    def backward(gy):
        g = gy.reshape(n, k_out)
        v.accumulate_grad((g @ w.data).reshape(v.data.shape))
        w.accumulate_grad(g.T @ flat)
        b.accumulate_grad(g.sum(axis=0))

    return _record(out, (v, w, b), backward)


# ---------------------------------------------------------------------------
# pooling


def pool2d(x: Tensor, kind: str, window=None, bins=None) -> Tensor:
    """Window / adaptive / global pooling.

    Exactly one of ``window=(k, stride)`` or ``bins=b`` selects the mode;
    neither means global pooling.  Adaptive and global modes reduce to
    window pooling with a derived window.
    """
    _check_4d(x, "pool2d input")
    if kind not in ("max", "avg"):
        raise ConfigError(f"unknown pooling kind {kind!r}")
    if window is not None and bins is not None:
        raise UsageError("pool2d takes window or bins, not both")
    n, c, h, w = x.data.shape
    if window is not None:
        k, stride = window
        if h < k or w < k:
            raise ConfigError(f"pool window {k} exceeds input {h}x{w}")
        kh = kw = k
        sh = sw = stride
    elif bins is not None:
        if h % bins or w % bins:
            raise ConfigError(
                f"adaptive pooling bins {bins} must divide spatial dims {h}x{w}"
            )
        kh, kw = h // bins, w // bins
        sh, sw = kh, kw
    else:
        kh, kw, sh, sw = h, w, h, w

    if kind == "max":
        y, arg = kernels.maxpool_forward(x.data, kh, kw, sh, sw)
        out = Tensor(y)

        def backward(gy):
            x.accumulate_grad(
                kernels.maxpool_backward(x.data.shape, arg, gy, kh, kw, sh, sw)
            )

    else:
        out = Tensor(kernels.avgpool_forward(x.data, kh, kw, sh, sw))

        def backward(gy):
            x.accumulate_grad(
                kernels.avgpool_backward(x.data.shape, gy, kh, kw, sh, sw)
            )

    return _record(out, (x,), backward)


# ---------------------------------------------------------------------------
# resizing


def _resize_axis_weights(in_size, out_size):
    """Half-pixel-center source indices and blend weights for one axis."""
    dst = np.arange(out_size, dtype=np.float64)
    src = (dst + 0.5) * (in_size / out_size) - 0.5
    src = np.clip(src, 0.0, in_size - 1)
    i0 = np.floor(src).astype(np.int64)
    i0 = np.minimum(i0, in_size - 1)
    i1 = np.minimum(i0 + 1, in_size - 1)
    frac = src - i0
    return i0, i1, frac


def bilinear_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    _check_4d(x, "bilinear_resize input")
    if out_h < 1 or out_w < 1:
        raise ConfigError("resize target dims must be >= 1")
    n, c, h, w = x.data.shape
    r0, r1, rf = _resize_axis_weights(h, out_h)
    c0, c1, cf = _resize_axis_weights(w, out_w)
    rf = rf.astype(x.data.dtype)[None, None, :, None]
    cf = cf.astype(x.data.dtype)[None, None, None, :]

    rows = x.data[:, :, r0, :] * (1 - rf) + x.data[:, :, r1, :] * rf
    y = rows[:, :, :, c0] * (1 - cf) + rows[:, :, :, c1] * cf
    out = Tensor(y)

    def backward(gy):
        grows = np.zeros((n, c, out_h, w), dtype=gy.dtype)
        np.add.at(grows, (slice(None), slice(None), slice(None), c0), gy * (1 - cf))
        np.add.at(grows, (slice(None), slice(None), slice(None), c1), gy * cf)
        gx = np.zeros(x.data.shape, dtype=gy.dtype)
        np.add.at(gx, (slice(None), slice(None), r0), grows * (1 - rf))
        np.add.at(gx, (slice(None), slice(None), r1), grows * rf)
        x.accumulate_grad(gx)

    return _record(out, (x,), backward)


# ---------------------------------------------------------------------------
# normalization


@dataclass
class BatchNormState:
    """Per-channel affine normalization parameters and running statistics."""

    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.9
    epsilon: float = 1e-5
    mode: str = "train"

    @classmethod
    def create(cls, channels: int, dtype=np.float32, momentum=0.9, epsilon=1e-5):
        return cls(
            gamma=parameter(np.ones(channels), dtype=dtype),
            beta=parameter(np.zeros(channels), dtype=dtype),
            running_mean=np.zeros(channels, dtype=dtype),
            running_var=np.ones(channels, dtype=dtype),
            momentum=momentum,
            epsilon=epsilon,
        )


def batch_norm(x: Tensor, state: BatchNormState) -> Tensor:
    _check_4d(x, "batch_norm input")
    n, c, h, w = x.data.shape
    if state.gamma.data.shape[0] != c:
        raise ShapeError(
            f"batch_norm channel mismatch: input {c} vs state {state.gamma.data.shape[0]}"
        )
    m = n * h * w
    if m == 0:
        raise ConfigError("batch_norm needs non-empty batch and spatial extent")
    gamma = state.gamma.data.reshape(1, c, 1, 1)
    beta = state.beta.data.reshape(1, c, 1, 1)

    if state.mode == "train":
        mu = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        state.running_mean = (
            state.momentum * state.running_mean + (1 - state.momentum) * mu
        ).astype(state.running_mean.dtype)
        state.running_var = (
            state.momentum * state.running_var + (1 - state.momentum) * var
        ).astype(state.running_var.dtype)
        inv_std = 1.0 / np.sqrt(var + state.epsilon)
        xhat = (x.data - mu.reshape(1, c, 1, 1)) * inv_std.reshape(1, c, 1, 1)
        out = Tensor(gamma * xhat + beta)

        def backward(gy):
            dgamma = (gy * xhat).sum(axis=(0, 2, 3))
            dbeta = gy.sum(axis=(0, 2, 3))
            state.gamma.accumulate_grad(dgamma)
            state.beta.accumulate_grad(dbeta)
            gyg = gy * gamma
            mean_gyg = gyg.mean(axis=(0, 2, 3)).reshape(1, c, 1, 1)
            mean_gyg_xhat = (gyg * xhat).mean(axis=(0, 2, 3)).reshape(1, c, 1, 1)
            gx = inv_std.reshape(1, c, 1, 1) * (gyg - mean_gyg - xhat * mean_gyg_xhat)
            x.accumulate_grad(gx.astype(x.data.dtype))

        return _record(out, (x, state.gamma, state.beta), backward)

    inv_std = 1.0 / np.sqrt(state.running_var + state.epsilon)
    xhat = (x.data - state.running_mean.reshape(1, c, 1, 1)) * inv_std.reshape(
        1, c, 1, 1
    )
    out = Tensor(gamma * xhat + beta)

    def backward_infer(gy):
        state.gamma.accumulate_grad((gy * xhat).sum(axis=(0, 2, 3)))
        state.beta.accumulate_grad(gy.sum(axis=(0, 2, 3)))
        x.accumulate_grad(gy * gamma * inv_std.reshape(1, c, 1, 1))

    return _record(out, (x, state.gamma, state.beta), backward_infer)


# ---------------------------------------------------------------------------
# elementwise

def activation(x: Tensor, kind: str) -> Tensor:
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ConfigError(f"unknown activation kind {kind!r}")


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0))

    def backward(gy):
        x.accumulate_grad(gy * (x.data > 0))

    return _record(out, (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    out = Tensor(_sigmoid_stable(x.data))

    def backward(gy):
        x.accumulate_grad(gy * out.data * (1 - out.data))

    return _record(out, (x,), backward)


def _sigmoid_stable(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    # finite inputs map strictly inside (0, 1)
    tiny = np.finfo(z.dtype).tiny
    return np.clip(out, tiny, 1.0 - np.finfo(z.dtype).epsneg)


# ---------------------------------------------------------------------------
# combination


def concat_channels(xs) -> Tensor:
    xs = list(xs)
    if not xs:
        raise UsageError("concat_channels needs at least one input")
    base = xs[0].data.shape
    for t in xs:
        _check_4d(t, "concat input")
        n, c, h, w = t.data.shape
        if (n, h, w) != (base[0], base[2], base[3]):
            raise ShapeError(
                f"concat_channels mismatch: {t.data.shape} vs {base}"
            )
    out = Tensor(np.concatenate([t.data for t in xs], axis=1))
    splits = np.cumsum([t.data.shape[1] for t in xs])[:-1]

    def backward(gy):
        for t, g in zip(xs, np.split(gy, splits, axis=1)):
            t.accumulate_grad(g)

    return _record(out, tuple(xs), backward)


def add(x: Tensor, y: Tensor) -> Tensor:
    if x.data.shape != y.data.shape:
        raise ShapeError(f"add shape mismatch: {x.data.shape} vs {y.data.shape}")
    out = Tensor(x.data + y.data)

    def backward(gy):
        x.accumulate_grad(gy)
        y.accumulate_grad(gy)

    return _record(out, (x, y), backward)


def scale_channels(x: Tensor, gates: Tensor) -> Tensor:
    """Multiply each channel by a per-(batch, channel) gate of shape (n,c,1,1)."""
    _check_4d(x, "scale_channels input")
    n, c, h, w = x.data.shape
    if gates.data.shape != (n, c, 1, 1):
        raise ShapeError(
            f"scale_channels gates must be {(n, c, 1, 1)}, got {gates.data.shape}"
        )
    out = Tensor(x.data * gates.data)

    def backward(gy):
        x.accumulate_grad(gy * gates.data)
        gates.accumulate_grad((gy * x.data).sum(axis=(2, 3), keepdims=True))

    return _record(out, (x, gates), backward)


def tensor_sum(x: Tensor) -> Tensor:
    out = Tensor(np.array(x.data.sum(), dtype=x.data.dtype).reshape(1, 1, 1, 1))

    def backward(gy):
        x.accumulate_grad(np.full(x.data.shape, gy.reshape(()), dtype=x.data.dtype))

    return _record(out, (x,), backward)


def tensor_mean(x: Tensor) -> Tensor:
    size = x.data.size
    out = Tensor(np.array(x.data.mean(), dtype=x.data.dtype).reshape(1, 1, 1, 1))

    def backward(gy):
        x.accumulate_grad(
            np.full(x.data.shape, gy.reshape(()) / size, dtype=x.data.dtype)
        )

    return _record(out, (x,), backward)


# ---------------------------------------------------------------------------
# reverse pass


def backward(out: Tensor) -> None:
    """Run the reverse pass from a scalar output."""
    if out.data.size != 1:
        raise UsageError(f"backward needs a scalar output, got shape {out.data.shape}")
    topo: list[Tensor] = []
    seen = set()
    stack = [(out, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    out.grad = np.ones_like(out.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
