"""Command-line entry point: mask, train, sample, compare, bench.

File-first workflows over the formats declared per module: P6 images,
P5 masks, JSON configs, CSV reports, FOVD checkpoints. Exit codes:
0 success, 2 input/validation error, 3 numerical failure. The
FOVDIT_SEED environment variable overrides every configured seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import bench as bench_mod
from . import config as config_mod
from . import masks as M
from . import netpbm
from .checkpoint import CheckpointError, load as load_ckpt
from .codec import CodecConfig, CodecError
from .config import ConfigError
from .foveation import LayoutError, TokenLayout
from .masks import FoveationMask, MaskError
from .model import DiTConfig
from .netpbm import FileFormatError
from .sampling import SampleConfig, evaluate_pair, sample, seam_energy, timed
from .training import TrainConfig, TrainingError, train

INPUT_ERRORS = (
    MaskError,
    CodecError,
    LayoutError,
    FileFormatError,
    CheckpointError,
    ConfigError,
    ValueError,
)


def _env_seed() -> int | None:
    raw = os.environ.get("FOVDIT_SEED")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"FOVDIT_SEED must be an integer, got {raw!r}") from exc


def _parse_size(text: str) -> tuple[int, int]:
    try:
        h, w = (int(p) for p in text.lower().split("x"))
        return h, w
    except Exception as exc:
        raise MaskError(f"--size must look like 16x16, got {text!r}") from exc


def _parse_floats(text: str, n: int, what: str) -> list[float]:
    parts = text.split(",")
    if len(parts) != n:
        raise MaskError(f"{what} needs {n} comma-separated values, got {text!r}")
    return [float(p) for p in parts]


def _build_mask_from_args(args) -> FoveationMask:
    h, w = _parse_size(args.size)
    frames = args.frames
    chosen = [
        name
        for name, val in (
            ("circle", args.circle),
            ("rect", args.rect),
            ("union", args.union),
            ("saliency", args.saliency),
            ("bboxes", args.bboxes),
            ("trajectory", args.trajectory),
        )
        if val
    ]
    if len(chosen) != 1:
        raise MaskError(f"specify exactly one mask constructor, got {chosen or 'none'}")
    kind = chosen[0]
    if kind == "circle":
        cy, cx, r = _parse_floats(args.circle, 3, "--circle")
        base = M.make_circle(h, w, (cy, cx), r)
    elif kind == "rect":
        y0, x0, y1, x1 = (int(v) for v in _parse_floats(args.rect, 4, "--rect"))
        base = M.make_rect(h, w, (y0, x0), (y1, x1))
    elif kind == "union":
        files = args.union.split(",")
        base = M.union([netpbm.load_mask(f) for f in files])
    elif kind == "saliency":
        if args.budget is None:
            raise MaskError("--saliency requires --budget")
        gray = netpbm.read_pgm(args.saliency).astype(np.float64) / 255.0
        base = M.from_saliency(gray, h, w, args.budget)
    elif kind == "bboxes":
        with open(args.bboxes) as fh:
            boxes = [tuple(int(v) for v in box) for box in json.load(fh)]
        base = M.from_bboxes(h, w, boxes)
    else:
        points = []
        for chunk in args.trajectory.split(";"):
            head, _, rest = chunk.partition(":")
            cy, cx, r = _parse_floats(rest, 3, "--trajectory point")
            points.append((float(head), cy, cx, r))
        return M.make_trajectory(frames, h, w, points)
    if frames == 1:
        return base
    return FoveationMask(np.broadcast_to(base.bits[0], (frames, h, w)).copy())


def cmd_mask(args) -> int:
    mask = _build_mask_from_args(args)
    paths = netpbm.save_mask(args.output, mask)
    m, L, ratio = M.sequence_length(mask)
    print(f"m={m} L={L} ratio={ratio:.3f}")
    print(f"wrote {len(paths)} file(s): {paths[0]}" + (f" .. {paths[-1]}" if len(paths) > 1 else ""))
    return 0


def _dit_config(cfg: dict) -> DiTConfig:
    return DiTConfig(patch=cfg["codec"]["patch"], **cfg["model"])


def cmd_train(args) -> int:
    cfg = config_mod.load(args.config)
    env_seed = _env_seed()
    train_body = dict(cfg["train"])
    if args.seed is not None:
        train_body["seed"] = args.seed
    if env_seed is not None:
        train_body["seed"] = env_seed
    tc = TrainConfig(**train_body)
    dc = _dit_config(cfg)

    def progress(step, loss):
        if (step + 1) % 100 == 0 or step + 1 == tc.steps:
            print(f"step {step + 1}/{tc.steps} loss {loss:.5f}", flush=True)

    try:
        with threadpool_limits(limits=args.threads):
            train(tc, dc, checkpoint_path=args.output, trace_path=args.trace, progress=progress)
    except TrainingError as exc:
        dump_path = Path(args.output).with_suffix(".dump.json")
        dump_path.write_text(json.dumps(exc.dump, indent=2, default=float))
        print(f"error: {exc} (diagnostic dump: {dump_path})", file=sys.stderr)
        return 3
    print(f"wrote checkpoint {args.output}" + (f" and trace {args.trace}" if args.trace else ""))
    return 0


def _load_mask_arg(text: str) -> FoveationMask:
    return netpbm.load_mask(text.split(","))


def _resolve_sample_mask(args, cfg: dict, ckpt) -> FoveationMask:
    patch = ckpt.config.patch
    image_size = ckpt.meta.get("train", {}).get("image_size", 64)
    frames = ckpt.meta.get("train", {}).get("frames", 1)
    h = w = image_size // patch
    if args.mode == "full":
        return FoveationMask(np.ones((frames, h, w), dtype=bool))
    if args.mask:
        return _load_mask_arg(args.mask)
    body = cfg["mask"]
    spec = M.MaskSpec(
        kind=body["kind"],
        center=tuple(body["center"]) if body["center"] else None,
        radius=body["radius"],
        top_left=tuple(body["top_left"]) if body["top_left"] else None,
        bottom_right=tuple(body["bottom_right"]) if body["bottom_right"] else None,
        boxes=[tuple(b) for b in body["boxes"]] if body["boxes"] else [],
        control_points=[tuple(p) for p in body["control_points"]] if body["control_points"] else [],
        budget=body["budget"],
        saliency=(
            netpbm.read_pgm(body["saliency_file"]).astype(np.float64) / 255.0
            if body["saliency_file"]
            else None
        ),
    )
    return spec.build(h, w, frames)


def _write_image(path: str, image: np.ndarray):
    frames = image.shape[1]
    paths = netpbm.mask_frame_paths(path, frames)
    for t, p in enumerate(paths):
        netpbm.write_ppm(p, image[:, t])
    return paths


def cmd_sample(args) -> int:
    cfg = config_mod.load(args.config)
    ckpt = load_ckpt(args.checkpoint)
    body = dict(cfg["sample"])
    if args.steps is not None:
        body["steps"] = args.steps
    if args.class_id is not None:
        body["class_id"] = args.class_id
    if args.seed is not None:
        body["seed"] = args.seed
    env_seed = _env_seed()
    if env_seed is not None:
        body["seed"] = env_seed
    body.pop("mode", None)
    sc = SampleConfig(**body)
    mask = _resolve_sample_mask(args, cfg, ckpt)
    with threadpool_limits(limits=args.threads):
        image = sample(ckpt, mask, sc)
    paths = _write_image(args.output, image)
    print(f"wrote {paths[0]}" + (f" .. {paths[-1]}" if len(paths) > 1 else ""))
    return 0


def cmd_compare(args) -> int:
    ckpt_fov = load_ckpt(args.foveated)
    ckpt_full = load_ckpt(args.full)
    if ckpt_fov.config != ckpt_full.config:
        print("error: checkpoints have incompatible model configs", file=sys.stderr)
        return 2
    cfg = config_mod.load(args.config)
    steps = args.steps if args.steps is not None else cfg["sample"]["steps"]
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else []
    env_seed = _env_seed()
    if env_seed is not None and seeds:
        seeds = [env_seed + i for i in range(len(seeds))]
    classes = [int(c) for c in args.classes.split(",")] if args.classes else [0]
    mask_files = args.masks.split(",") if args.masks else []
    masks = [netpbm.load_mask(f) for f in mask_files]
    patch = ckpt_fov.config.patch
    image_size = ckpt_fov.meta.get("train", {}).get("image_size", 64)
    h = w = image_size // patch

    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = ["mask,seed,class,seam_fov,seam_naive,seam_full,psnr_fov_full,psnr_naive_full,t_fov,t_naive,t_full"]
    wins = 0
    total = 0
    with threadpool_limits(limits=args.threads):
        for mi, mask in enumerate(masks):
            for si, seed in enumerate(seeds):
                class_id = classes[(mi * len(seeds) + si) % len(classes)]
                sc = SampleConfig(steps=steps, seed=seed, class_id=class_id)
                ones = FoveationMask(np.ones((mask.frames, h, w), dtype=bool))
                img_fov, t_fov = timed(sample, ckpt_fov, mask, sc)
                img_naive, t_naive = timed(sample, ckpt_full, mask, sc)
                img_full, t_full = timed(sample, ckpt_full, ones, sc)
                rep_fn = evaluate_pair(img_fov, img_naive, mask)
                rep_ff = evaluate_pair(img_fov, img_full, mask)
                rep_nf = evaluate_pair(img_naive, img_full, mask)
                seam_full = seam_energy(img_full, mask)
                trip = np.concatenate([img_fov, img_naive, img_full], axis=-1)
                _write_image(str(outdir / f"triptych_m{mi}_s{seed}_c{class_id}.ppm"), trip)
                rows.append(
                    f"{mask_files[mi]},{seed},{class_id},{rep_fn.seam_a:.6f},{rep_fn.seam_b:.6f},"
                    f"{seam_full:.6f},"
                    f"{rep_ff.psnr_downsampled:.3f},{rep_nf.psnr_downsampled:.3f},"
                    f"{t_fov:.4f},{t_naive:.4f},{t_full:.4f}"
                )
                wins += rep_fn.seam_a < rep_fn.seam_b
                total += 1
    csv_path = outdir / "eval.csv"
    csv_path.write_text(f"# threads={args.threads} steps={steps}\n" + "\n".join(rows) + "\n")
    if total:
        print(f"seam-energy win rate (foveated < naive): {wins}/{total} ({100.0 * wins / total:.1f}%)")
    print(f"wrote {csv_path}")
    return 0


def cmd_bench(args) -> int:
    ckpt = load_ckpt(args.checkpoint)
    cfg = config_mod.load(args.config)
    body = dict(cfg["bench"])
    if args.ratios:
        body["ratios"] = [float(r) for r in args.ratios.split(",")]
    if args.reps is not None:
        body["reps"] = args.reps
    if args.threads is not None:
        body["threads"] = args.threads
    patch = ckpt.config.patch
    image_size = ckpt.meta.get("train", {}).get("image_size", 64)
    frames = ckpt.meta.get("train", {}).get("frames", 1)
    h = w = image_size // patch
    total_blocks = h * w // 4
    layouts = []
    for r in body["ratios"]:
        n_blocks = int(round(total_blocks * (4.0 * r - 1.0) / 3.0))
        n_blocks = min(max(n_blocks, 0), total_blocks)
        layouts.append((f"ratio_{r:g}", TokenLayout.from_mask(M.make_center_disk(h, w, n_blocks, frames))))
    report = bench_mod.measure(ckpt, layouts, reps=body["reps"], warmup=body["warmup"], threads=body["threads"])
    Path(args.output).write_text(report.to_csv())
    rows = report.rows
    mono = all(rows[i].speedup_raw <= rows[i + 1].speedup_raw * 1.05 for i in range(len(rows) - 1))
    flop_agree = all(
        (rows[i].flops >= rows[i + 1].flops) == (rows[i].median_s >= rows[i + 1].median_s)
        for i in range(len(rows) - 1)
    )
    for r in rows:
        print(
            f"{r.label}: L={r.L} ratio={r.ratio:.3f} median={r.median_s * 1e3:.2f}ms "
            f"speedup={r.speedup_raw:.2f}x corrected={r.speedup_corrected:.2f}x"
        )
    print(f"monotone speedup (5% tolerance): {'yes' if mono else 'NO'}")
    print(f"FLOP ordering agrees with measured times: {'yes' if flop_agree else 'NO'}")
    print(f"wrote {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fovdit", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    mp = sub.add_parser("mask", help="construct a foveation mask file")
    mp.add_argument("--size", required=True, help="latent grid as HxW, e.g. 16x16")
    mp.add_argument("--frames", type=int, default=1)
    mp.add_argument("--circle", help="cy,cx,r in latent cells")
    mp.add_argument("--rect", help="y0,x0,y1,x1 half-open box")
    mp.add_argument("--union", help="comma-separated mask PGM files")
    mp.add_argument("--saliency", help="grayscale PGM saliency map")
    mp.add_argument("--budget", type=float, help="HR block fraction for --saliency")
    mp.add_argument("--bboxes", help="JSON file with [y0,x0,y1,x1] boxes")
    mp.add_argument("--trajectory", help="frame:cy,cx,r;frame:cy,cx,r;... control points")
    mp.add_argument("-o", "--output", required=True)
    mp.set_defaults(fn=cmd_mask)

    tp = sub.add_parser("train", help="train a model and write a checkpoint")
    tp.add_argument("--config", help="JSON run config")
    tp.add_argument("--seed", type=int)
    tp.add_argument("--trace", help="loss trace CSV path")
    tp.add_argument("--threads", type=int, default=None)
    tp.add_argument("-o", "--output", required=True)
    tp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("sample", help="generate an image from a checkpoint")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--mask", help="mask PGM (comma-separated files for video)")
    sp.add_argument("--mode", choices=("foveated", "naive", "full"), default="foveated")
    sp.add_argument("--class-id", type=int, dest="class_id")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--config", help="JSON run config")
    sp.add_argument("--threads", type=int, default=None)
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(fn=cmd_sample)

    cp = sub.add_parser("compare", help="foveated vs naive vs full side-by-side")
    cp.add_argument("--foveated", required=True, help="foveated-trained checkpoint")
    cp.add_argument("--full", required=True, help="full-resolution-trained checkpoint")
    cp.add_argument("--masks", required=True, help="comma-separated mask PGM files")
    cp.add_argument("--seeds", default="", help="comma-separated seeds (empty: no rows)")
    cp.add_argument("--classes", default="", help="comma-separated class ids to cycle")
    cp.add_argument("--steps", type=int)
    cp.add_argument("--config", help="JSON run config")
    cp.add_argument("--threads", type=int, default=None)
    cp.add_argument("-o", "--output", required=True, help="output directory")
    cp.set_defaults(fn=cmd_compare)

    bp = sub.add_parser("bench", help="forward-pass cost sweep over token ratios")
    bp.add_argument("--checkpoint", required=True)
    bp.add_argument("--ratios", help="comma-separated token ratios")
    bp.add_argument("--reps", type=int)
    bp.add_argument("--threads", type=int, default=None)
    bp.add_argument("--config", help="JSON run config")
    bp.add_argument("-o", "--output", required=True)
    bp.set_defaults(fn=cmd_bench)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
