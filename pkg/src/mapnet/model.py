"""Full multi-path segmentation model: configuration, stage schedule,
ablation variants, parameter/MAC accounting, and feature-map export."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .blocks import (
    AttentionSqueeze,
    ConvBlock,
    DownsampleBlock,
    GenBlock,
    SpatialPoolEnhance,
    UpsampleHead,
)
from .errors import ConfigError, ShapeError, UsageError
from .rng import SplitMix64
from .tensor import Tensor

VARIANTS = ("baseline", "plus_c", "plus_s", "full", "full_f")


@dataclass
class ModelConfig:
    n_paths: int = 3
    n_blocks: int = 4
    base_channels: int = 64
    variant: str = "full"
    input_hw: tuple[int, int] = (512, 512)
    precision: str = "single"

    def validate(self):
        if not 2 <= self.n_paths <= 4:
            raise ConfigError(f"n_paths must be in [2, 4], got {self.n_paths}")
        if not 3 <= self.n_blocks <= 6:
            raise ConfigError(f"n_blocks must be in [3, 6], got {self.n_blocks}")
        if self.base_channels < 4 or self.base_channels % 4:
            raise ConfigError(
                f"base_channels must be a positive multiple of 4, "
                f"got {self.base_channels}"
            )
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        h, w = self.input_hw
        if h % 16 or w % 16:
            raise ConfigError(f"input_hw must be multiples of 16, got {h}x{w}")
        if self.precision not in ("single", "double"):
            raise ConfigError(f"precision must be single or double, got {self.precision}")

    @property
    def dtype(self):
        return np.float64 if self.precision == "double" else np.float32

    def path_channels(self, path: int) -> int:
        return self.base_channels * 2 ** (path - 1)

    @property
    def fused_channels(self) -> int:
        return self.base_channels * (2**self.n_paths - 1)

    def to_dict(self):
        return {
            "n_paths": self.n_paths,
            "n_blocks": self.n_blocks,
            "base_channels": self.base_channels,
            "variant": self.variant,
            "input_h": self.input_hw[0],
            "input_w": self.input_hw[1],
            "precision": self.precision,
        }

    @classmethod
    def from_dict(cls, d):
        cfg = cls(
            n_paths=int(d["n_paths"]),
            n_blocks=int(d["n_blocks"]),
            base_channels=int(d["base_channels"]),
            variant=d["variant"],
            input_hw=(int(d["input_h"]), int(d["input_w"])),
            precision=d["precision"],
        )
        cfg.validate()
        return cfg


class Model:
    """The assembled network.  Paths never exchange features except at the
    spawning transition and the final concatenation."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        config.validate()
        self.config = config
        rng = SplitMix64(seed).spawn("init")
        dtype = config.dtype
        C = config.base_channels
        P = config.n_paths

        self.downsample = DownsampleBlock(C, rng=rng, dtype=dtype)
        # path k runs one conv block per stage s >= k
        self.conv_blocks = {
            k: [
                ConvBlock(config.path_channels(k), config.n_blocks, rng=rng, dtype=dtype)
                for _ in range(P - k + 1)
            ]
            for k in range(1, P + 1)
        }
        self.gen_blocks = {
            k: GenBlock(config.path_channels(k - 1), rng=rng, dtype=dtype)
            for k in range(2, P + 1)
        }
        fused = config.fused_channels
        self.attention = (
            AttentionSqueeze(fused, rng=rng, dtype=dtype)
            if config.variant in ("plus_c", "full", "full_f")
            else None
        )
        self.spatial = (
            SpatialPoolEnhance(fused, rng=rng, dtype=dtype)
            if config.variant in ("plus_s", "full", "full_f")
            else None
        )
        self.head = UpsampleHead(
            fused, C, with_skip=(config.variant == "full_f"), rng=rng, dtype=dtype
        )

    # -- parameters ---------------------------------------------------------

    def named_params(self) -> dict[str, Tensor]:
        params = self.downsample.named_params("downsample")
        for k, blocks in self.conv_blocks.items():
            for s, block in enumerate(blocks, start=k):
                params.update(block.named_params(f"path{k}/stage{s}"))
        for k, gen in self.gen_blocks.items():
            params.update(gen.named_params(f"gen{k}"))
        if self.attention is not None:
            params.update(self.attention.named_params("attention"))
        if self.spatial is not None:
            params.update(self.spatial.named_params("spatial"))
        params.update(self.head.named_params("head"))
        return params

    def bn_states(self):
        states = list(self.downsample.bn_states())
        for blocks in self.conv_blocks.values():
            for block in blocks:
                states.extend(block.bn_states())
        for gen in self.gen_blocks.values():
            states.extend(gen.bn_states())
        states.extend(self.head.bn_states())
        return states

    def set_mode(self, mode: str):
        if mode not in ("train", "infer"):
            raise UsageError(f"mode must be train or infer, got {mode!r}")
        for state in self.bn_states():
            state.mode = mode

    def zero_grad(self):
        for p in self.named_params().values():
            p.zero_grad()

    # -- forward ------------------------------------------------------------

    def _encode(self, images: Tensor, record=None):
        """Run stem and stage schedule; returns (fused features, skip)."""
        n, c, h, w = images.data.shape
        H, W = self.config.input_hw
        if c != 3:
            raise ShapeError(f"expected 3-channel input, got {c}")
        if (h, w) != (H, W):
            raise ShapeError(f"input dims {h}x{w} do not match config {H}x{W}")
        P = self.config.n_paths
        x0, skip = self.downsample(images, return_skip=True)
        current = {1: x0}
        for s in range(1, P + 1):
            if s >= 2:
                current[s] = self.gen_blocks[s](current[s - 1])
            for k in range(1, s + 1):
                current[k] = self.conv_blocks[k][s - k](current[k])
                if record is not None:
                    record[(k, s)] = current[k]
        h1, w1 = current[1].data.shape[2:]
        ups = [current[1]] + [
            T.bilinear_resize(current[k], h1, w1) for k in range(2, P + 1)
        ]
        return T.concat_channels(ups), skip

    def _enhance(self, fused: Tensor):
        if self.attention is not None:
            fused, _ = self.attention(fused)
        if self.spatial is not None:
            fused = self.spatial(fused)
        return fused

    def forward_logits(self, images: Tensor, mode: str = "train") -> Tensor:
        self.set_mode(mode)
        fused, skip = self._encode(images)
        fused = self._enhance(fused)
        return self.head.logits(fused, skip if self.head.with_skip else None)

    def forward(self, images: Tensor, mode: str = "infer") -> Tensor:
        if mode == "infer":
            with T.no_grad():
                return T.sigmoid(self.forward_logits(images, mode))
        return T.sigmoid(self.forward_logits(images, mode))

    # -- accounting ---------------------------------------------------------

    def count_params(self):
        per_module: dict[str, int] = {}
        for key, t in self.named_params().items():
            top = key.split("/", 1)[0]
            per_module[top] = per_module.get(top, 0) + t.data.size
        return {"total": sum(per_module.values()), "per_module": per_module}

    def count_macs(self, input_hw=None):
        H, W = input_hw or self.config.input_hw
        P = self.config.n_paths
        per_module: dict[str, int] = {"downsample": self.downsample.macs(H, W)}
        for k, blocks in self.conv_blocks.items():
            ph, pw = H // 4 // 2 ** (k - 1), W // 4 // 2 ** (k - 1)
            for s, block in enumerate(blocks, start=k):
                key = f"path{k}"
                per_module[key] = per_module.get(key, 0) + block.macs(ph, pw)
        for k, gen in self.gen_blocks.items():
            ph, pw = H // 4 // 2 ** (k - 2), W // 4 // 2 ** (k - 2)
            per_module[f"gen{k}"] = gen.macs(ph, pw)
        fh, fw = H // 4, W // 4
        if self.attention is not None:
            per_module["attention"] = self.attention.macs(fh, fw)
        if self.spatial is not None:
            per_module["spatial"] = self.spatial.macs(fh, fw)
        per_module["head"] = self.head.macs(fh, fw)
        total = sum(per_module.values())
        return {
            "total_macs": total,
            "per_module": per_module,
            "macs_per_pixel": total / (H * W),
        }

    # -- feature export -----------------------------------------------------

    def export_features(self, image: Tensor, path: int, stage: int) -> np.ndarray:
        """Channel-mean of the selected activation as a uint8 grayscale map."""
        P = self.config.n_paths
        if not 1 <= path <= P or not path <= stage <= P:
            raise UsageError(
                f"selector path {path} stage {stage} outside topology "
                f"(paths 1..{P}, stages path..{P})"
            )
        record: dict = {}
        with T.no_grad():
            self.set_mode("infer")
            self._encode(image, record=record)
        act = record[(path, stage)].data[0].mean(axis=0)
        lo, hi = act.min(), act.max()
        if hi - lo < 1e-12:
            return np.zeros(act.shape, dtype=np.uint8)
        return np.round((act - lo) / (hi - lo) * 255).astype(np.uint8)


def build(config: ModelConfig, seed: int = 0) -> Model:
    return Model(config, seed=seed)


def sweep(block_range=(3, 6), path_range=(2, 4), base_channels=64, input_hw=(512, 512)):
    """Instantiate every (n_paths, n_blocks) combination and tabulate
    parameter and MAC counts (no training)."""
    rows = []
    for n_paths in range(path_range[0], path_range[1] + 1):
        for n_blocks in range(block_range[0], block_range[1] + 1):
            cfg = ModelConfig(
                n_paths=n_paths,
                n_blocks=n_blocks,
                base_channels=base_channels,
                variant="full",
                input_hw=input_hw,
            )
            model = Model(cfg)
            rows.append(
                {
                    "n_paths": n_paths,
                    "n_blocks": n_blocks,
                    "params": model.count_params()["total"],
                    "macs": model.count_macs()["total_macs"],
                }
            )
    return rows
