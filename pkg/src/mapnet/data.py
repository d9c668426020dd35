"""Synthetic building scenes, raster tiling/stitching, dataset splits, and
bit-exact PGM/PPM image I/O.

Images are float arrays in [0, 1] shaped (1, 3, h, w); masks are binary
float arrays shaped (1, 1, h, w).  On disk an image is a binary PPM (P6,
maxval 255, values round(v*255)) and a mask a binary PGM (P5, 0/255).
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    CorruptionError,
    FormatError,
    GenerationError,
    IOFailure,
    UsageError,
)
from .rng import SplitMix64


@dataclass
class Sample:
    id: str
    image: np.ndarray  # (1, 3, h, w) float in [0, 1]
    mask: np.ndarray  # (1, 1, h, w) float in {0, 1}
    origin: tuple[str, int, int] | None = None  # (parent id, row, col)

    @property
    def hw(self):
        return self.image.shape[2], self.image.shape[3]


@dataclass
class SceneSpec:
    seed: int = 0
    size: tuple[int, int] = (256, 256)
    buildings: tuple[int, int] = (4, 12)
    scale: tuple[int, int] = (8, 64)  # min/max side length in pixels
    shapes: tuple[str, ...] = ("rectangle", "rotated", "l_shape")
    fg_band: tuple[float, float] = (0.05, 0.6)
    noise: float = 0.03
    max_retries: int = 20

    def validate(self):
        if self.scale[0] < 3:
            raise UsageError(f"minimum building scale must be >= 3 px, got {self.scale[0]}")


def _coarse_background(rng: SplitMix64, h, w):
    gh, gw = max(2, h // 32), max(2, w // 32)
    grid = rng.uniform((gh, gw), 0.15, 0.55)
    # bilinear upsample of the coarse grid (half-pixel centers)
    ys = np.clip((np.arange(h) + 0.5) * gh / h - 0.5, 0, gh - 1)
    xs = np.clip((np.arange(w) + 0.5) * gw / w - 0.5, 0, gw - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, gh - 1)
    x1 = np.minimum(x0 + 1, gw - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    rows0 = grid[y0][:, x0] * (1 - fx) + grid[y0][:, x1] * fx
    rows1 = grid[y1][:, x0] * (1 - fx) + grid[y1][:, x1] * fx
    return rows0 * (1 - fy) + rows1 * fy


def _rasterize_building(rng: SplitMix64, kind, h, w, scale):
    """Boolean footprint of one building placed inside the scene."""
    side_a = rng.uniform((), scale[0], scale[1])
    side_b = rng.uniform((), scale[0], scale[1])
    cy = rng.uniform((), side_a / 2, h - side_a / 2)
    cx = rng.uniform((), side_b / 2, w - side_b / 2)
    yy, xx = np.mgrid[0:h, 0:w]
    if kind == "rotated":
        theta = rng.uniform((), 0, np.pi)
        ct, st = np.cos(theta), np.sin(theta)
        u = (xx - cx) * ct + (yy - cy) * st
        v = -(xx - cx) * st + (yy - cy) * ct
        return (np.abs(u) <= side_b / 2) & (np.abs(v) <= side_a / 2)
    rect = (np.abs(yy - cy) <= side_a / 2) & (np.abs(xx - cx) <= side_b / 2)
    if kind == "l_shape":
        # carve one quadrant out of the rectangle
        qy = rng.randint(2)
        qx = rng.randint(2)
        cut_y = (yy > cy) if qy else (yy < cy)
        cut_x = (xx > cx) if qx else (xx < cx)
        carved = rect & ~(cut_y & cut_x)
        return carved
    return rect


def generate_scene(spec: SceneSpec, scene_id: str = "scene") -> Sample:
    """Deterministic synthetic scene; a pure function of (spec, scene_id)."""
    spec.validate()
    h, w = spec.size
    base_rng = SplitMix64(spec.seed).spawn(scene_id)
    for attempt in range(spec.max_retries):
        rng = base_rng.spawn(f"attempt{attempt}")
        n_buildings = spec.buildings[0] + (
            rng.randint(spec.buildings[1] - spec.buildings[0] + 1)
            if spec.buildings[1] > spec.buildings[0]
            else 0
        )
        mask = np.zeros((h, w), dtype=bool)
        intensity = np.zeros((h, w), dtype=np.float64)
        for _ in range(n_buildings):
            kind = spec.shapes[rng.randint(len(spec.shapes))]
            fp = _rasterize_building(rng, kind, h, w, spec.scale)
            level = rng.uniform((), 0.65, 0.95)
            intensity[fp] = level
            mask |= fp
        frac = mask.mean()
        lo, hi = spec.fg_band
        if n_buildings == 0 or lo <= frac <= hi:
            background = _coarse_background(rng, h, w)
            gray = np.where(mask, intensity, background)
            tint = rng.uniform((3,), 0.9, 1.1)
            image = gray[None, :, :] * tint[:, None, None]
            image = image + rng.normal((3, h, w), std=spec.noise)
            image = np.clip(image, 0.0, 1.0)
            return Sample(
                id=scene_id,
                image=image[None].astype(np.float32),
                mask=mask[None, None].astype(np.float32),
            )
    raise GenerationError(
        f"scene {scene_id!r}: foreground fraction outside {spec.fg_band} "
        f"after {spec.max_retries} attempts"
    )


# ---------------------------------------------------------------------------
# tiling


def tile(raster: Sample, tile_hw: tuple[int, int]) -> list[Sample]:
    """Non-overlapping grid tiles, row-major from the top-left; trailing
    partial strips are anchored to the bottom/right edge."""
    th, tw = tile_hw
    h, w = raster.hw
    if th > h or tw > w:
        raise UsageError(f"tile {th}x{tw} larger than raster {h}x{w}")

    def starts(size, tsize):
        s = list(range(0, size - tsize + 1, tsize))
        if s[-1] + tsize < size:
            s.append(size - tsize)
        return s

    tiles = []
    for r in starts(h, th):
        for c in starts(w, tw):
            tiles.append(
                Sample(
                    id=f"{raster.id}_r{r}_c{c}",
                    image=np.ascontiguousarray(
                        raster.image[:, :, r : r + th, c : c + tw]
                    ),
                    mask=np.ascontiguousarray(
                        raster.mask[:, :, r : r + th, c : c + tw]
                    ),
                    origin=(raster.id, r, c),
                )
            )
    return tiles


def stitch(tiles: list[Sample], parent_hw: tuple[int, int],
           parent_id: str = "stitched") -> Sample:
    """Reassemble tiles into a parent raster; overlaps resolve later-wins."""
    h, w = parent_hw
    image = np.zeros((1, 3, h, w), dtype=np.float32)
    mask = np.zeros((1, 1, h, w), dtype=np.float32)
    covered = np.zeros((h, w), dtype=bool)
    for t in tiles:
        if t.origin is None:
            raise UsageError(f"tile {t.id!r} has no origin")
        _, r, c = t.origin
        th, tw = t.hw
        image[:, :, r : r + th, c : c + tw] = t.image
        mask[:, :, r : r + th, c : c + tw] = t.mask
        covered[r : r + th, c : c + tw] = True
    if not covered.all():
        raise CorruptionError(
            f"stitch leaves {int((~covered).sum())} uncovered pixels"
        )
    return Sample(id=parent_id, image=image, mask=mask)


def split(samples: list[Sample], ratios=(6, 1, 3), seed: int = 0):
    """Deterministic disjoint train/val/test partition; remainders go to
    train."""
    if len(samples) < 3:
        raise UsageError(f"need at least 3 samples to split, got {len(samples)}")
    if any(r <= 0 for r in ratios):
        raise UsageError(f"split ratios must be positive, got {ratios}")
    order = list(range(len(samples)))
    SplitMix64(seed).spawn("split").shuffle(order)
    total = sum(ratios)
    n = len(samples)
    n_val = round(n * ratios[1] / total)
    n_test = round(n * ratios[2] / total)
    n_train = n - n_val - n_test
    train = [samples[i] for i in order[:n_train]]
    val = [samples[i] for i in order[n_train : n_train + n_val]]
    test = [samples[i] for i in order[n_train + n_val :]]
    return train, val, test


# ---------------------------------------------------------------------------
# PGM / PPM I/O


def _write_pnm(path, magic: bytes, h: int, w: int, payload: bytes):
    try:
        with open(path, "wb") as fh:
            fh.write(magic + b"\n%d %d\n255\n" % (w, h) + payload)
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc


def write_mask_pgm(path, mask: np.ndarray):
    """Binary mask as P5, foreground 255."""
    m = np.asarray(mask).reshape(mask.shape[-2], mask.shape[-1])
    payload = np.where(m > 0.5, 255, 0).astype(np.uint8).tobytes()
    _write_pnm(path, b"P5", m.shape[0], m.shape[1], payload)


def write_gray_pgm(path, values: np.ndarray):
    """Grayscale map in [0, 1] (or uint8) as P5."""
    v = np.asarray(values)
    if v.dtype != np.uint8:
        v = np.round(np.clip(v, 0, 1) * 255).astype(np.uint8)
    v = v.reshape(v.shape[-2], v.shape[-1])
    _write_pnm(path, b"P5", v.shape[0], v.shape[1], v.tobytes())


def write_image_ppm(path, image: np.ndarray):
    """RGB image in [0, 1], shape (1, 3, h, w), as P6."""
    img = np.asarray(image).reshape(3, image.shape[-2], image.shape[-1])
    quant = np.round(np.clip(img, 0, 1) * 255).astype(np.uint8)
    _write_pnm(path, b"P6", img.shape[1], img.shape[2],
               quant.transpose(1, 2, 0).tobytes())


def _read_pnm(path):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc}") from exc
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"{path}: bad magic {magic!r}")
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise CorruptionError(f"{path}: truncated header")
        fields.append(int(data[start:pos]))
    pos += 1  # exactly one whitespace byte after maxval
    w, h, maxval = fields
    if maxval != 255:
        raise FormatError(f"{path}: maxval must be 255, got {maxval}")
    channels = 1 if magic == b"P5" else 3
    expected = h * w * channels
    payload = data[pos:]
    if len(payload) != expected:
        raise CorruptionError(
            f"{path}: payload has {len(payload)} bytes, header implies {expected}"
        )
    arr = np.frombuffer(payload, dtype=np.uint8)
    if channels == 1:
        return arr.reshape(h, w)
    return arr.reshape(h, w, 3)


def read_image(path) -> np.ndarray:
    """Read P6 into a (1, 3, h, w) float image in [0, 1]."""
    arr = _read_pnm(path)
    if arr.ndim != 3:
        raise FormatError(f"{path}: expected a 3-channel PPM")
    return (arr.transpose(2, 0, 1)[None].astype(np.float32)) / 255.0


def read_mask(path) -> np.ndarray:
    """Read P5 into a (1, 1, h, w) binary float mask."""
    arr = _read_pnm(path)
    if arr.ndim != 2:
        raise FormatError(f"{path}: expected a single-channel PGM")
    return (arr[None, None] > 127).astype(np.float32)


def read_gray(path) -> np.ndarray:
    arr = _read_pnm(path)
    if arr.ndim != 2:
        raise FormatError(f"{path}: expected a single-channel PGM")
    return arr


# ---------------------------------------------------------------------------
# dataset directories


def write_dataset(root, splits: dict[str, list[Sample]]):
    """Layout: <root>/{train,val,test}/<id>.ppm + <id>_mask.pgm plus a
    manifest index.csv with id,split,h,w,fg_fraction."""
    root = Path(root)
    rows = []
    for split_name, samples in splits.items():
        d = root / split_name
        d.mkdir(parents=True, exist_ok=True)
        for s in samples:
            write_image_ppm(d / f"{s.id}.ppm", s.image)
            write_mask_pgm(d / f"{s.id}_mask.pgm", s.mask)
            h, w = s.hw
            rows.append((s.id, split_name, h, w, float(s.mask.mean())))
    with open(root / "index.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "split", "h", "w", "fg_fraction"])
        for row in rows:
            writer.writerow([row[0], row[1], row[2], row[3], f"{row[4]:.6f}"])


def load_dataset(root, split_name: str) -> list[Sample]:
    root = Path(root)
    manifest = root / "index.csv"
    if not manifest.exists():
        raise IOFailure(f"no manifest at {manifest}")
    samples = []
    with open(manifest, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["split"] != split_name:
                continue
            d = root / split_name
            samples.append(
                Sample(
                    id=row["id"],
                    image=read_image(d / f"{row['id']}.ppm"),
                    mask=read_mask(d / f"{row['id']}_mask.pgm"),
                )
            )
    return samples
