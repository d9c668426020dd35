"""Loss, optimizer, augmentation, the training loop, and checkpoint I/O.

Checkpoint binary layout (all integers little-endian):

    magic "MAPN" | u32 version | u32 config blob length | config blob (utf-8
    key=value lines, sorted) | u32 entry count | entries

    entry: u32 key length | utf-8 key | u8 dtype code | u8 rank |
           u32 dims[rank] | raw little-endian element bytes

Dtype codes: 0 = float32, 1 = float64, 2 = uint64.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    NumericError,
    UsageError,
)
from .model import Model, ModelConfig
from .rng import SplitMix64
from .tensor import Tensor, backward

CHECKPOINT_MAGIC = b"MAPN"
CHECKPOINT_VERSION = 1

_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1,
                np.dtype(np.uint64): 2}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


# ---------------------------------------------------------------------------
# loss


def bce_loss(logits: Tensor, labels: Tensor) -> Tensor:
    """Mean sigmoid cross-entropy over every position, in the numerically
    stable logit form max(z,0) - z*y + ln(1 + exp(-|z|))."""
    z = logits.data
    y = labels.data
    if z.shape != y.shape:
        raise DataError(f"logits {z.shape} and labels {y.shape} differ in shape")
    if not np.isin(y, (0.0, 1.0)).all():
        raise DataError("labels must be strictly binary {0, 1}")
    n = z.size
    per_pos = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
    out = Tensor(np.array(per_pos.mean(), dtype=z.dtype).reshape(1, 1, 1, 1))

    def bw(gy):
        p = T._sigmoid_stable(z)
        logits.accumulate_grad(gy.reshape(()) * (p - y) / n)

    return T._record(out, (logits,), bw)


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def ensure_keys(self, params: dict[str, Tensor]):
        for key, p in params.items():
            if key not in self.m:
                self.m[key] = np.zeros_like(p.data)
                self.v[key] = np.zeros_like(p.data)


def adam_step(params: dict[str, Tensor], state: AdamState):
    """One bias-corrected update; gradients are read from each tensor's
    accumulated ``.grad`` (missing gradients are an error)."""
    state.ensure_keys(params)
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for key, p in params.items():
        if p.grad is None:
            raise UsageError(f"no gradient for parameter {key!r}")
        g = p.grad
        m = state.m[key] = b1 * state.m[key] + (1 - b1) * g
        v = state.v[key] = b2 * state.v[key] + (1 - b2) * g * g
        p.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


# ---------------------------------------------------------------------------
# augmentation


def augment(image: np.ndarray, mask: np.ndarray, rng: SplitMix64):
    """Apply one draw of rotation {0,90,180,270} plus independent
    horizontal/vertical flips, identically to image and mask."""
    rot = rng.randint(4)
    flip_h = rng.randint(2)
    flip_v = rng.randint(2)
    if rot % 2 and image.shape[-2] != image.shape[-1]:
        raise ConfigError("90/270 degree rotation requires square tiles")
    out_i, out_m = image, mask
    if rot:
        out_i = np.rot90(out_i, rot, axes=(-2, -1))
        out_m = np.rot90(out_m, rot, axes=(-2, -1))
    if flip_h:
        out_i = out_i[..., ::-1]
        out_m = out_m[..., ::-1]
    if flip_v:
        out_i = out_i[..., ::-1, :]
        out_m = out_m[..., ::-1, :]
    return np.ascontiguousarray(out_i), np.ascontiguousarray(out_m)


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainConfig:
    batch_size: int = 4
    epochs: int = 80
    seed: int = 0
    augment: bool = True
    checkpoint_every: int = 0
    lr: float = 0.001
    max_steps: int = 0  # 0 means no cap

    def validate(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")


@dataclass
class Checkpoint:
    version: int
    model_config: ModelConfig
    arrays: dict[str, np.ndarray]

    @property
    def timestep(self) -> int:
        return int(self.arrays["opt/t"][0])


def make_checkpoint(model: Model, opt: AdamState, rng: SplitMix64) -> Checkpoint:
    arrays: dict[str, np.ndarray] = {}
    for key, p in model.named_params().items():
        arrays[f"param/{key}"] = p.data.copy()
    for i, state in enumerate(model.bn_states()):
        arrays[f"bn/{i}/running_mean"] = state.running_mean.copy()
        arrays[f"bn/{i}/running_var"] = state.running_var.copy()
    for key in opt.m:
        arrays[f"opt/m/{key}"] = opt.m[key].copy()
        arrays[f"opt/v/{key}"] = opt.v[key].copy()
    arrays["opt/t"] = np.array([opt.t], dtype=np.uint64)
    arrays["rng/state"] = np.array(rng.state, dtype=np.uint64)
    return Checkpoint(CHECKPOINT_VERSION, model.config, arrays)


def restore_into(ckpt: Checkpoint, model: Model, opt: AdamState | None = None,
                 rng: SplitMix64 | None = None):
    params = model.named_params()
    for key, p in params.items():
        p.data = ckpt.arrays[f"param/{key}"].copy()
    for i, state in enumerate(model.bn_states()):
        state.running_mean = ckpt.arrays[f"bn/{i}/running_mean"].copy()
        state.running_var = ckpt.arrays[f"bn/{i}/running_var"].copy()
    if opt is not None:
        opt.t = ckpt.timestep
        for key in params:
            mkey, vkey = f"opt/m/{key}", f"opt/v/{key}"
            if mkey in ckpt.arrays:
                opt.m[key] = ckpt.arrays[mkey].copy()
                opt.v[key] = ckpt.arrays[vkey].copy()
    if rng is not None and "rng/state" in ckpt.arrays:
        rng.set_state(tuple(int(x) for x in ckpt.arrays["rng/state"]))


def model_from_checkpoint(ckpt: Checkpoint) -> Model:
    model = Model(ckpt.model_config)
    restore_into(ckpt, model)
    return model


@dataclass
class TrainLogEntry:
    step: int
    epoch: int
    loss: float
    seconds: float


def train(model: Model, samples, tc: TrainConfig, out_dir=None, log_fn=None):
    """Seeded epoch loop: shuffle, optional augmentation, forward, loss,
    backward, Adam step.  Returns (log entries, final checkpoint)."""
    tc.validate()
    if not samples:
        raise UsageError("training dataset is empty")
    rng = SplitMix64(tc.seed)
    shuffle_rng = rng.spawn("shuffle")
    augment_rng = rng.spawn("augment")
    opt = AdamState(lr=tc.lr)
    opt.ensure_keys(model.named_params())
    log: list[TrainLogEntry] = []
    step = 0
    start = time.perf_counter()
    done = False
    for epoch in range(tc.epochs):
        order = list(range(len(samples)))
        shuffle_rng.shuffle(order)
        for lo in range(0, len(order), tc.batch_size):
            batch = [samples[i] for i in order[lo : lo + tc.batch_size]]
            images, masks = [], []
            for s in batch:
                img = np.asarray(s.image, dtype=model.config.dtype)
                msk = np.asarray(s.mask, dtype=model.config.dtype)
                if tc.augment:
                    img, msk = augment(img, msk, augment_rng)
                images.append(img)
                masks.append(msk)
            x = Tensor(np.concatenate(images, axis=0))
            y = Tensor(np.concatenate(masks, axis=0))
            model.zero_grad()
            logits = model.forward_logits(x, mode="train")
            loss = bce_loss(logits, y)
            loss_val = loss.item()
            if not np.isfinite(loss_val):
                raise NumericError(
                    f"non-finite loss {loss_val} at step {step} (epoch {epoch})"
                )
            backward(loss)
            params = model.named_params()
            adam_step(params, opt)
            step += 1
            entry = TrainLogEntry(step, epoch, loss_val,
                                  time.perf_counter() - start)
            log.append(entry)
            if log_fn is not None:
                log_fn(entry)
            if out_dir is not None and tc.checkpoint_every and \
                    step % tc.checkpoint_every == 0:
                save_checkpoint(make_checkpoint(model, opt, rng),
                                f"{out_dir}/checkpoint_{step:06d}.ckpt")
            if tc.max_steps and step >= tc.max_steps:
                done = True
                break
        if done:
            break
    return log, make_checkpoint(model, opt, rng)


def write_log_csv(log, path):
    with open(path, "w") as fh:
        fh.write("step,epoch,loss,seconds\n")
        for e in log:
            fh.write(f"{e.step},{e.epoch},{e.loss:.9g},{e.seconds:.3f}\n")


# ---------------------------------------------------------------------------
# checkpoint serialization


def _config_blob(config: ModelConfig) -> bytes:
    lines = [f"{k}={v}" for k, v in sorted(config.to_dict().items())]
    return "\n".join(lines).encode()


def _config_from_blob(blob: bytes) -> ModelConfig:
    d = {}
    for line in blob.decode().splitlines():
        k, _, v = line.partition("=")
        d[k] = v
    return ModelConfig.from_dict(d)


def save_checkpoint(ckpt: Checkpoint, path):
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", ckpt.version)]
    blob = _config_blob(ckpt.model_config)
    parts.append(struct.pack("<I", len(blob)))
    parts.append(blob)
    keys = sorted(ckpt.arrays)
    parts.append(struct.pack("<I", len(keys)))
    for key in keys:
        arr = np.ascontiguousarray(ckpt.arrays[key])
        kb = key.encode()
        parts.append(struct.pack("<I", len(kb)))
        parts.append(kb)
        parts.append(struct.pack("<BB", _DTYPE_CODES[arr.dtype], arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.astype(arr.dtype.newbyteorder("<")).tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(
                f"truncated checkpoint: wanted {n} bytes at offset {self.pos}, "
                f"file has {len(self.data)}"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path) -> Checkpoint:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    r = _Reader(data)
    if r.take(4) != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad checkpoint magic in {path}")
    version = r.u32()
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )
    config = _config_from_blob(r.take(r.u32()))
    arrays = {}
    for _ in range(r.u32()):
        key = r.take(r.u32()).decode()
        code, rank = struct.unpack("<BB", r.take(2))
        if code not in _CODE_DTYPES:
            raise CheckpointError(f"unknown dtype code {code} for {key!r}")
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank))
        dtype = _CODE_DTYPES[code]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
        arrays[key] = np.frombuffer(
            r.take(nbytes), dtype=dtype.newbyteorder("<")
        ).astype(dtype).reshape(dims)
    if r.pos != len(data):
        raise CheckpointError(
            f"trailing bytes in checkpoint {path}: {len(data) - r.pos}"
        )
    return Checkpoint(version, config, arrays)
