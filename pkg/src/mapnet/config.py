"""Line-oriented ``key = value`` run configuration.

Unknown keys are rejected with their line number.  Command-line flags
override file values; every command writes a resolved-config echo next to
its outputs for reproducibility.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from .errors import ConfigError
from .model import VARIANTS


def _bool(v: str) -> bool:
    if v.lower() in ("1", "true", "yes", "on"):
        return True
    if v.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(v)


@dataclass
class RunConfig:
    # model
    n_paths: int = 3
    n_blocks: int = 4
    base_channels: int = 64
    variant: str = "full"
    input_h: int = 512
    input_w: int = 512
    precision: str = "single"
    # training
    batch_size: int = 4
    epochs: int = 80
    seed: int = 0
    augment: bool = True
    checkpoint_every: int = 0
    lr: float = 0.001
    max_steps: int = 0
    # data generation
    scene_count: int = 20
    scene_h: int = 256
    scene_w: int = 256
    tile_h: int = 64
    tile_w: int = 64
    buildings_min: int = 4
    buildings_max: int = 12
    scale_min: int = 8
    scale_max: int = 64
    noise: float = 0.03
    # evaluation
    threshold: float = 0.5

    _TYPES = {}

    def apply(self, key: str, raw: str, where: str):
        types = {f.name: f.type for f in fields(self)}
        if key not in types or key.startswith("_"):
            raise ConfigError(f"{where}: unknown config key {key!r}")
        kind = {"int": int, "float": float, "str": str, "bool": _bool}[types[key]]
        try:
            setattr(self, key, kind(raw))
        except ValueError:
            raise ConfigError(f"{where}: bad value {raw!r} for key {key!r}")

    def validate(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not 0 < self.threshold < 1:
            raise ConfigError(f"threshold must be in (0,1), got {self.threshold}")

    def echo(self) -> str:
        lines = [
            f"{f.name} = {getattr(self, f.name)}"
            for f in fields(self)
            if not f.name.startswith("_")
        ]
        return "\n".join(lines) + "\n"


def parse_config_file(path) -> RunConfig:
    cfg = RunConfig()
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, raw = stripped.partition("=")
            cfg.apply(key.strip(), raw.strip(), f"{path}:{lineno}")
    return cfg
