"""Network building blocks: downsample stem, pre-activation residual units,
path-spawning transitions, channel attention, spatial pooling enhancement,
and the upsampling prediction head.

Every block exposes ``named_params(prefix)`` returning a flat dict of
trainable tensors keyed by hierarchical path strings (the checkpoint key
space) and ``bn_states()`` for the batch-norm running statistics.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .rng import SplitMix64
from .tensor import BatchNormState, Tensor


def he_normal(rng: SplitMix64, shape, fan_in, dtype):
    return rng.normal(shape, std=np.sqrt(2.0 / fan_in)).astype(dtype)


class Conv2d:
    def __init__(self, in_c, out_c, k, stride=1, pad=0, *, rng, dtype=np.float32):
        self.stride = stride
        self.pad = pad
        fan_in = in_c * k * k
        self.w = T.parameter(he_normal(rng, (out_c, in_c, k, k), fan_in, dtype), dtype)
        self.b = T.parameter(np.zeros(out_c), dtype)

    def __call__(self, x):
        return T.conv2d(x, self.w, self.b, stride=self.stride, pad=self.pad)

    def named_params(self, prefix):
        return {f"{prefix}/weight": self.w, f"{prefix}/bias": self.b}

    def macs(self, in_h, in_w):
        oc, ic, kh, kw = self.w.data.shape
        oh = (in_h + 2 * self.pad - kh) // self.stride + 1
        ow = (in_w + 2 * self.pad - kw) // self.stride + 1
        return oc * oh * ow * ic * kh * kw


class BatchNorm:
    def __init__(self, channels, *, dtype=np.float32):
        self.state = BatchNormState.create(channels, dtype=dtype)

    def __call__(self, x):
        return T.batch_norm(x, self.state)

    def named_params(self, prefix):
        return {f"{prefix}/gamma": self.state.gamma, f"{prefix}/beta": self.state.beta}

    def bn_states(self):
        return [self.state]


class Dense:
    def __init__(self, k_in, k_out, *, rng, dtype=np.float32):
        self.w = T.parameter(he_normal(rng, (k_out, k_in), k_in, dtype), dtype)
        self.b = T.parameter(np.zeros(k_out), dtype)

    def __call__(self, v):
        return T.dense(v, self.w, self.b)

    def named_params(self, prefix):
        return {f"{prefix}/weight": self.w, f"{prefix}/bias": self.b}


def _merge(*dicts):
    out = {}
    for d in dicts:
        out.update(d)
    return out


class DownsampleBlock:
    """Stem producing base-width features at 1/4 resolution plus the
    half-resolution activation used by the skip-connected head variant."""

    def __init__(self, base_c, *, rng, dtype=np.float32):
        mid = base_c // 2
        self.conv1 = Conv2d(3, mid, 3, stride=2, pad=1, rng=rng, dtype=dtype)
        self.bn1 = BatchNorm(mid, dtype=dtype)
        self.conv2 = Conv2d(mid, base_c, 3, pad=1, rng=rng, dtype=dtype)
        self.bn2 = BatchNorm(base_c, dtype=dtype)
        self.conv3 = Conv2d(base_c, base_c, 3, pad=1, rng=rng, dtype=dtype)
        self.bn3 = BatchNorm(base_c, dtype=dtype)

    def __call__(self, image, return_skip=False):
        n, c, h, w = image.data.shape
        if h % 16 or w % 16:
            raise ConfigError(f"input spatial dims must be multiples of 16, got {h}x{w}")
        x = T.relu(self.bn1(self.conv1(image)))
        x = T.relu(self.bn2(self.conv2(x)))
        skip = T.relu(self.bn3(self.conv3(x)))
        out = T.pool2d(skip, "max", window=(2, 2))
        return (out, skip) if return_skip else out

    def named_params(self, prefix):
        return _merge(
            self.conv1.named_params(f"{prefix}/conv1"),
            self.bn1.named_params(f"{prefix}/bn1"),
            self.conv2.named_params(f"{prefix}/conv2"),
            self.bn2.named_params(f"{prefix}/bn2"),
            self.conv3.named_params(f"{prefix}/conv3"),
            self.bn3.named_params(f"{prefix}/bn3"),
        )

    def bn_states(self):
        return self.bn1.bn_states() + self.bn2.bn_states() + self.bn3.bn_states()

    def macs(self, h, w):
        return (
            self.conv1.macs(h, w)
            + self.conv2.macs(h // 2, w // 2)
            + self.conv3.macs(h // 2, w // 2)
        )


class ResidualBlock:
    """Pre-activation bottleneck: BN-ReLU-1x1 down, two BN-ReLU-3x3,
    BN-ReLU-1x1 up, identity shortcut."""

    BOTTLENECK = 4

    def __init__(self, c, *, rng, dtype=np.float32):
        if c % self.BOTTLENECK:
            raise ConfigError(
                f"residual block channels {c} not divisible by {self.BOTTLENECK}"
            )
        mid = c // self.BOTTLENECK
        self.bn1 = BatchNorm(c, dtype=dtype)
        self.conv1 = Conv2d(c, mid, 1, rng=rng, dtype=dtype)
        self.bn2 = BatchNorm(mid, dtype=dtype)
        self.conv2 = Conv2d(mid, mid, 3, pad=1, rng=rng, dtype=dtype)
        self.bn3 = BatchNorm(mid, dtype=dtype)
        self.conv3 = Conv2d(mid, mid, 3, pad=1, rng=rng, dtype=dtype)
        self.bn4 = BatchNorm(mid, dtype=dtype)
        self.conv4 = Conv2d(mid, c, 1, rng=rng, dtype=dtype)

    def __call__(self, x):
        h = self.conv1(T.relu(self.bn1(x)))
        h = self.conv2(T.relu(self.bn2(h)))
        h = self.conv3(T.relu(self.bn3(h)))
        h = self.conv4(T.relu(self.bn4(h)))
        return T.add(x, h)

    def named_params(self, prefix):
        return _merge(
            self.bn1.named_params(f"{prefix}/bn1"),
            self.conv1.named_params(f"{prefix}/conv1"),
            self.bn2.named_params(f"{prefix}/bn2"),
            self.conv2.named_params(f"{prefix}/conv2"),
            self.bn3.named_params(f"{prefix}/bn3"),
            self.conv3.named_params(f"{prefix}/conv3"),
            self.bn4.named_params(f"{prefix}/bn4"),
            self.conv4.named_params(f"{prefix}/conv4"),
        )

    def bn_states(self):
        return (
            self.bn1.bn_states() + self.bn2.bn_states()
            + self.bn3.bn_states() + self.bn4.bn_states()
        )

    def macs(self, h, w):
        return sum(conv.macs(h, w) for conv in
                   (self.conv1, self.conv2, self.conv3, self.conv4))


class ConvBlock:
    """Serial chain of residual blocks at fixed resolution and width."""

    MIN_BLOCKS, MAX_BLOCKS = 3, 6

    def __init__(self, c, n_blocks, *, rng, dtype=np.float32):
        if not self.MIN_BLOCKS <= n_blocks <= self.MAX_BLOCKS:
            raise ConfigError(
                f"n_blocks must be in [{self.MIN_BLOCKS}, {self.MAX_BLOCKS}], "
                f"got {n_blocks}"
            )
        self.blocks = [ResidualBlock(c, rng=rng, dtype=dtype) for _ in range(n_blocks)]

    def __call__(self, x):
        for block in self.blocks:
            x = block(x)
        return x

    def named_params(self, prefix):
        return _merge(
            *(b.named_params(f"{prefix}/res{i + 1}") for i, b in enumerate(self.blocks))
        )

    def bn_states(self):
        return [s for b in self.blocks for s in b.bn_states()]

    def macs(self, h, w):
        return sum(b.macs(h, w) for b in self.blocks)


class GenBlock:
    """Spawns a new path: 2x2 max pool then BN-ReLU-1x1 conv doubling width."""

    def __init__(self, c, *, rng, dtype=np.float32):
        self.bn = BatchNorm(c, dtype=dtype)
        self.conv = Conv2d(c, 2 * c, 1, rng=rng, dtype=dtype)

    def __call__(self, x):
        n, c, h, w = x.data.shape
        if h % 2 or w % 2:
            raise ConfigError(f"gen block needs even spatial dims, got {h}x{w}")
        x = T.pool2d(x, "max", window=(2, 2))
        return self.conv(T.relu(self.bn(x)))

    def named_params(self, prefix):
        return _merge(
            self.bn.named_params(f"{prefix}/bn"),
            self.conv.named_params(f"{prefix}/conv"),
        )

    def bn_states(self):
        return self.bn.bn_states()

    def macs(self, h, w):
        return self.conv.macs(h // 2, w // 2)


class AttentionSqueeze:
    """Channel gates: global average pool, fused-width square affine map,
    sigmoid, per-channel rescale of the input."""

    def __init__(self, fused_c, *, rng, dtype=np.float32):
        self.fused_c = fused_c
        self.fc = Dense(fused_c, fused_c, rng=rng, dtype=dtype)

    def __call__(self, fused):
        n, c, h, w = fused.data.shape
        if c != self.fused_c:
            raise ShapeError(
                f"attention expects {self.fused_c} channels, got {c}"
            )
        pooled = T.pool2d(fused, "avg")
        gates = T.sigmoid(self.fc(pooled))
        return T.scale_channels(fused, gates), gates

    def named_params(self, prefix):
        return self.fc.named_params(f"{prefix}/fc")

    def bn_states(self):
        return []

    def macs(self, h, w):
        return self.fused_c * self.fused_c


class SpatialPoolEnhance:
    """Multi-bin adaptive average pooling branches, fused by a 1x1 conv and
    added pixel-wise to the input."""

    BINS = (1, 2, 4, 8)

    def __init__(self, fused_c, *, rng, dtype=np.float32):
        self.fused_c = fused_c
        branch_c = fused_c // len(self.BINS)
        self.branches = [
            Conv2d(fused_c, branch_c, 1, rng=rng, dtype=dtype) for _ in self.BINS
        ]
        self.fuse = Conv2d(fused_c, fused_c, 1, rng=rng, dtype=dtype)

    def __call__(self, x):
        n, c, h, w = x.data.shape
        if h % self.BINS[-1] or w % self.BINS[-1]:
            raise ConfigError(
                f"spatial pooling needs dims divisible by {self.BINS[-1]}, got {h}x{w}"
            )
        outs = []
        for b, conv in zip(self.BINS, self.branches):
            pooled = T.pool2d(x, "avg", bins=b)
            outs.append(T.bilinear_resize(conv(pooled), h, w))
        return T.add(x, self.fuse(T.concat_channels(outs)))

    def named_params(self, prefix):
        return _merge(
            *(c.named_params(f"{prefix}/branch{b}")
              for b, c in zip(self.BINS, self.branches)),
            self.fuse.named_params(f"{prefix}/fuse"),
        )

    def bn_states(self):
        return []

    def macs(self, h, w):
        total = sum(conv.macs(b, b) for b, conv in zip(self.BINS, self.branches))
        return total + self.fuse.macs(h, w)


class UpsampleHead:
    """Two-stage bilinear recovery to full resolution ending in a sigmoid
    probability map; optionally concatenates a half-resolution skip."""

    def __init__(self, fused_c, base_c, *, with_skip=False, rng, dtype=np.float32):
        self.with_skip = with_skip
        self.base_c = base_c
        self.conv1 = Conv2d(fused_c, 2 * base_c, 3, pad=1, rng=rng, dtype=dtype)
        self.bn1 = BatchNorm(2 * base_c, dtype=dtype)
        mid_in = 2 * base_c + (base_c if with_skip else 0)
        self.conv2 = Conv2d(mid_in, base_c, 3, pad=1, rng=rng, dtype=dtype)
        self.bn2 = BatchNorm(base_c, dtype=dtype)
        self.conv3 = Conv2d(base_c, 1, 1, rng=rng, dtype=dtype)

    def logits(self, x, skip=None):
        n, c, h, w = x.data.shape
        y = T.relu(self.bn1(self.conv1(x)))
        y = T.bilinear_resize(y, 2 * h, 2 * w)
        if self.with_skip:
            if skip is None:
                raise ShapeError("skip-connected head requires a skip tensor")
            if skip.data.shape[2:] != (2 * h, 2 * w):
                raise ShapeError(
                    f"skip must be half input resolution {(2 * h, 2 * w)}, "
                    f"got {skip.data.shape[2:]}"
                )
            y = T.concat_channels([y, skip])
        y = T.relu(self.bn2(self.conv2(y)))
        y = T.bilinear_resize(y, 4 * h, 4 * w)
        return self.conv3(y)

    def __call__(self, x, skip=None):
        return T.sigmoid(self.logits(x, skip))

    def named_params(self, prefix):
        return _merge(
            self.conv1.named_params(f"{prefix}/conv1"),
            self.bn1.named_params(f"{prefix}/bn1"),
            self.conv2.named_params(f"{prefix}/conv2"),
            self.bn2.named_params(f"{prefix}/bn2"),
            self.conv3.named_params(f"{prefix}/conv3"),
        )

    def bn_states(self):
        return self.bn1.bn_states() + self.bn2.bn_states()

    def macs(self, h, w):
        return (
            self.conv1.macs(h, w)
            + self.conv2.macs(2 * h, 2 * w)
            + self.conv3.macs(4 * h, 4 * w)
        )
