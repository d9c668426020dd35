"""Command-line entry point.

Subcommands: generate-data, train, evaluate, predict, inspect, sweep,
visualize-features.  Exit codes: 0 success, 2 configuration error, 3 I/O
error, 4 numeric failure, 5 checkpoint error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import data as D
from . import metrics as M
from . import training as TR
from .config import RunConfig, parse_config_file
from .errors import ConfigError, IOFailure, MapNetError, UsageError
from .model import Model, ModelConfig, sweep as model_sweep
from .tensor import Tensor
from .training import TrainConfig


def _load_run_config(args) -> RunConfig:
    cfg = parse_config_file(args.config) if args.config else RunConfig()
    for key in (
        "n_paths", "n_blocks", "base_channels", "variant", "seed", "epochs",
        "batch_size", "threshold", "lr", "max_steps", "scene_count",
        "tile_h", "tile_w", "input_h", "input_w",
    ):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    cfg.validate()
    return cfg


def _model_config(cfg: RunConfig, input_hw=None) -> ModelConfig:
    mc = ModelConfig(
        n_paths=cfg.n_paths,
        n_blocks=cfg.n_blocks,
        base_channels=cfg.base_channels,
        variant=cfg.variant,
        input_hw=input_hw or (cfg.input_h, cfg.input_w),
        precision=cfg.precision,
    )
    mc.validate()
    return mc


def _echo_config(cfg: RunConfig, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "resolved_config.txt").write_text(cfg.echo())


def cmd_generate_data(args) -> int:
    cfg = _load_run_config(args)
    out = Path(args.out)
    if not out.parent.exists():
        raise IOFailure(f"parent directory does not exist: {out.parent}")
    spec = D.SceneSpec(
        seed=cfg.seed,
        size=(cfg.scene_h, cfg.scene_w),
        buildings=(cfg.buildings_min, cfg.buildings_max),
        scale=(cfg.scale_min, cfg.scale_max),
        noise=cfg.noise,
    )
    tiles = []
    for i in range(cfg.scene_count):
        scene = D.generate_scene(spec, f"scene{i:04d}")
        tiles.extend(D.tile(scene, (cfg.tile_h, cfg.tile_w)))
    train, val, test = D.split(tiles, seed=cfg.seed)
    D.write_dataset(out, {"train": train, "val": val, "test": test})
    _echo_config(cfg, out)
    print(f"wrote {len(train)}/{len(val)}/{len(test)} train/val/test tiles to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_run_config(args)
    samples = D.load_dataset(args.data, "train")
    if not samples:
        raise IOFailure(f"no training tiles under {args.data}")
    hw = samples[0].hw
    model = Model(_model_config(cfg, input_hw=hw), seed=cfg.seed)
    tc = TrainConfig(
        batch_size=cfg.batch_size,
        epochs=cfg.epochs,
        seed=cfg.seed,
        augment=cfg.augment,
        checkpoint_every=cfg.checkpoint_every,
        lr=cfg.lr,
        max_steps=cfg.max_steps,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _echo_config(cfg, out)
    log, ckpt = TR.train(model, samples, tc, out_dir=out)
    TR.save_checkpoint(ckpt, out / "final.ckpt")
    TR.write_log_csv(log, out / "train_log.csv")
    if log:
        print(f"final loss {log[-1].loss:.6f} after {log[-1].step} steps")
    else:
        print("zero epochs requested; checkpoint equals initialization")
    return 0


def cmd_evaluate(args) -> int:
    ckpt = TR.load_checkpoint(args.checkpoint)
    model = TR.model_from_checkpoint(ckpt)
    samples = D.load_dataset(args.data, args.split)
    if not samples:
        raise IOFailure(f"no {args.split} tiles under {args.data}")
    counts, scores = M.evaluate_dataset(model, samples, args.threshold)
    out = Path(args.out) if args.out else Path("evaluation.csv")
    M.write_report_csv(out, [(model.config.variant, args.threshold, counts, scores)])

    def fmt(v):
        return "undefined" if v is None else f"{v:.4f}"

    print(
        f"precision={fmt(scores.precision)} recall={fmt(scores.recall)} "
        f"f1={fmt(scores.f1)} iou={fmt(scores.iou)}"
    )
    return 0


def _predict_raster(model: Model, image: np.ndarray, threshold: float):
    h, w = image.shape[2], image.shape[3]
    mh, mw = model.config.input_hw
    if (h, w) == (mh, mw):
        return model.forward(Tensor(image), mode="infer").data[0, 0]
    if h < mh or w < mw:
        raise UsageError(
            f"image {h}x{w} smaller than model input {mh}x{mw}"
        )
    # grid-tile, predict per tile, stitch later-wins
    prob = np.zeros((h, w), dtype=np.float32)
    raster = D.Sample(id="input", image=image,
                      mask=np.zeros((1, 1, h, w), dtype=np.float32))
    for t in D.tile(raster, (mh, mw)):
        _, r, c = t.origin
        p = model.forward(Tensor(t.image), mode="infer").data[0, 0]
        prob[r : r + mh, c : c + mw] = p
    return prob


def cmd_predict(args) -> int:
    ckpt = TR.load_checkpoint(args.checkpoint)
    model = TR.model_from_checkpoint(ckpt)
    image = D.read_image(args.image)
    prob = _predict_raster(model, image, args.threshold)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    name = Path(args.image).stem
    D.write_gray_pgm(out / f"{name}_prob.pgm", prob)
    D.write_mask_pgm(out / f"{name}_mask.pgm",
                     (prob > args.threshold).astype(np.float32))
    print(f"wrote {name}_prob.pgm and {name}_mask.pgm to {out}")
    return 0


def cmd_inspect(args) -> int:
    if args.checkpoint:
        model = TR.model_from_checkpoint(TR.load_checkpoint(args.checkpoint))
    else:
        cfg = _load_run_config(args)
        model = Model(_model_config(cfg))
    params = model.count_params()
    macs = model.count_macs()
    print(f"{'module':<14}{'params':>12}{'MACs':>16}")
    for mod in params["per_module"]:
        print(f"{mod:<14}{params['per_module'][mod]:>12}"
              f"{macs['per_module'].get(mod, 0):>16}")
    print(f"{'total':<14}{params['total']:>12}{macs['total_macs']:>16}")
    print(f"MACs per input pixel: {macs['macs_per_pixel']:.1f}")
    return 0


def cmd_sweep(args) -> int:
    blocks = tuple(int(x) for x in args.blocks.split(".."))
    paths = tuple(int(x) for x in args.paths.split(".."))
    if not (3 <= blocks[0] <= blocks[1] <= 6 and 2 <= paths[0] <= paths[1] <= 4):
        raise ConfigError(
            f"sweep ranges out of bounds: blocks {blocks}, paths {paths}"
        )
    rows = model_sweep(block_range=blocks, path_range=paths,
                       base_channels=args.base_channels)
    lines = ["n_paths,n_blocks,params,macs"]
    lines += [f"{r['n_paths']},{r['n_blocks']},{r['params']},{r['macs']}"
              for r in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")
    return 0


def cmd_visualize_features(args) -> int:
    ckpt = TR.load_checkpoint(args.checkpoint)
    model = TR.model_from_checkpoint(ckpt)
    image = D.read_image(args.image)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for selector in args.select:
        try:
            p_str, s_str = selector.split(":")
            path, stage = int(p_str), int(s_str)
        except ValueError:
            raise ConfigError(f"bad selector {selector!r}, expected PATH:STAGE")
        try:
            feat = model.export_features(Tensor(image), path, stage)
        except UsageError as exc:
            raise ConfigError(str(exc))
        r = 4 * 2 ** (path - 1)
        fname = f"features_p{path}_s{stage}_r{r}.pgm"
        D.write_gray_pgm(out / fname, feat)
        print(f"wrote {fname} ({feat.shape[0]}x{feat.shape[1]})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mapnet",
        description="Multi-path building-footprint segmentation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_model_flags(p):
        p.add_argument("--n-paths", dest="n_paths", type=int)
        p.add_argument("--n-blocks", dest="n_blocks", type=int)
        p.add_argument("--base-channels", dest="base_channels", type=int)
        p.add_argument("--variant", choices=("baseline", "plus_c", "plus_s",
                                             "full", "full_f"))
        p.add_argument("--seed", type=int)

    p = sub.add_parser("generate-data", help="build a synthetic dataset")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--scene-count", dest="scene_count", type=int)
    p.add_argument("--tile-h", dest="tile_h", type=int)
    p.add_argument("--tile-w", dest="tile_w", type=int)
    p.set_defaults(fn=cmd_generate_data)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--max-steps", dest="max_steps", type=int)
    add_model_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("predict", help="predict a probability map")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("inspect", help="parameter and MAC accounting")
    p.add_argument("--config")
    p.add_argument("--checkpoint")
    add_model_flags(p)
    p.set_defaults(fn=cmd_inspect)

    p = sub.add_parser("sweep", help="accounting sweep over topology ranges")
    p.add_argument("--blocks", default="3..6")
    p.add_argument("--paths", default="2..4")
    p.add_argument("--base-channels", dest="base_channels", type=int, default=64)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("visualize-features", help="export feature maps")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--select", nargs="+", required=True,
                   metavar="PATH:STAGE")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_visualize_features)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except MapNetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
