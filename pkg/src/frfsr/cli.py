"""Command-line interface: match, warp, train, sr, eval."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import network, training
from .checkpoint import load_checkpoint
from .config import SHUFFLE_LEVELS, TrainConfig, load_config
from .correspondence import FlowField, match_textures, warp_reference
from .data import bicubic_downsample, shuffle_patches
from .metrics import psnr_y, ssim_y
from .network import FrontEnd, compute_correspondence
from .tensor import Tensor, resize_bilinear


def read_png(path) -> Tensor:
    """8-bit RGB PNG -> (1, 3, h, w) float tensor in [0, 1]."""
    img = Image.open(path).convert("RGB")
    arr = np.asarray(img, dtype=np.float32) / 255.0
    return Tensor(arr.transpose(2, 0, 1)[None])


def write_png(image: Tensor, path):
    """(1, 3, h, w) or (3, h, w) tensor in [0, 1] -> 8-bit RGB PNG."""
    arr = image.data if isinstance(image, Tensor) else np.asarray(image)
    if arr.ndim == 4:
        arr = arr[0]
    arr = np.clip(arr, 0.0, 1.0)
    arr = np.rint(arr * 255.0).astype(np.uint8).transpose(1, 2, 0)
    Image.fromarray(arr, "RGB").save(path)


def _front(cfg: TrainConfig) -> FrontEnd:
    return FrontEnd.create(cfg.seed)


def cmd_match(args) -> int:
    i_lr = read_png(args.lr)
    i_ref = read_png(args.ref)
    front = _front(TrainConfig(seed=args.seed))
    from .correspondence import texture_encode
    tex = texture_encode(i_lr, i_ref, front.texture_encoder)
    h, w = i_lr.shape[2], i_lr.shape[3]
    f_ref = resize_bilinear(tex.ref, h, w)
    _, _, flow = match_textures(tex.lr.data[0], f_ref.data[0], k=args.patch)
    flow.save(args.out)
    print(f"wrote flow {flow.height}x{flow.width} -> {args.out}")
    return 0


def cmd_warp(args) -> int:
    i_ref = read_png(args.ref)
    flow = FlowField.load(args.flow)
    warped = warp_reference(i_ref, flow, args.scale)
    write_png(warped, args.out)
    print(f"wrote warped reference -> {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = training.train_two_stage(cfg)
    training.save_stage1_checkpoint(result.params1, cfg, out_dir / "ckpt_rec.frf")
    training.save_stage2_checkpoint(result.params1, result.params2, cfg,
                                    out_dir / "ckpt_all.frf")
    with open(out_dir / "loss_log.txt", "w") as f:
        for entry in result.loss_log1 + result.loss_log2:
            f.write("\t".join(f"{k}={v}" for k, v in entry.items()) + "\n")
    if result.loss_log1:
        print(f"stage 1: L_rec {result.loss_log1[0]['rec']:.5f} -> "
              f"{result.loss_log1[-1]['rec']:.5f}")
    if result.loss_log2:
        print(f"stage 2: L_total {result.loss_log2[0]['total']:.5f} -> "
              f"{result.loss_log2[-1]['total']:.5f}")
    print(f"checkpoints in {out_dir}")
    return 0


def _load_nets(ckpt_path, cfg: TrainConfig, stage: str):
    tensors, fingerprint = load_checkpoint(ckpt_path)
    if fingerprint != cfg.fingerprint():
        raise SystemExit(
            f"checkpoint fingerprint {fingerprint:#x} does not match the "
            f"configuration ({cfg.fingerprint():#x}); pass the training config "
            f"via --config")
    params1 = training.load_stage1_params(tensors, cfg)
    params2 = None
    if stage == "all":
        if not any(k.startswith("net2.") for k in tensors):
            raise SystemExit("checkpoint has no stage-2 network; use --stage rec")
        params2 = training.load_stage2_params(tensors, cfg)
    return params1, params2


def _super_resolve(i_lr, i_ref, params1, params2, cfg, front, stage):
    corr = compute_correspondence(i_lr, i_ref, front)
    out1 = network.stage1_forward(i_lr, i_ref, params1, cfg, front, corr)
    if stage == "rec":
        return out1.i_sr
    out2 = network.stage2_forward(i_lr, i_ref, out1.detached(), params2, cfg,
                                  front, corr)
    return out2.i_sr


def cmd_sr(args) -> int:
    cfg = load_config(args.config) if args.config else TrainConfig()
    params1, params2 = _load_nets(args.ckpt, cfg, args.stage)
    i_lr = read_png(args.lr)
    i_ref = read_png(args.ref)
    i_sr = _super_resolve(i_lr, i_ref, params1, params2, cfg, _front(cfg), args.stage)
    write_png(i_sr, args.out)
    print(f"wrote {i_sr.shape[3]}x{i_sr.shape[2]} output -> {args.out}")
    return 0


def _eval_pairs(data_dir: Path):
    pairs = []
    for hr_path in sorted(data_dir.glob("*_hr.png")):
        name = hr_path.name[:-len("_hr.png")]
        ref_path = data_dir / f"{name}_ref.png"
        if not ref_path.exists():
            raise SystemExit(f"missing reference image {ref_path}")
        pairs.append((name, hr_path, ref_path))
    if not pairs:
        raise SystemExit(f"no *_hr.png images found in {data_dir}")
    return pairs


def cmd_eval(args) -> int:
    cfg = load_config(args.config) if args.config else TrainConfig()
    stage = args.stage
    params1, params2 = _load_nets(args.ckpt, cfg, stage)
    front = _front(cfg)
    pairs = _eval_pairs(Path(args.data))
    level_means = {}
    for level in SHUFFLE_LEVELS:
        rng = np.random.default_rng(args.seed)
        rows = []
        for name, hr_path, ref_path in pairs:
            i_hr = read_png(hr_path)
            i_ref = read_png(ref_path)
            if level != "none":
                i_ref = shuffle_patches(i_ref.data, level, rng)
            i_lr = bicubic_downsample(i_hr, 4)
            i_sr = _super_resolve(i_lr, i_ref, params1, params2, cfg, front, stage)
            sr = np.clip(i_sr.data, 0.0, 1.0)
            rows.append((name, psnr_y(sr, i_hr.data), ssim_y(sr, i_hr.data)))
        level_means[level] = (float(np.mean([r[1] for r in rows])),
                              float(np.mean([r[2] for r in rows])))
        if level == args.shuffle_level:
            for name, p, s in rows:
                print(f"{name}\t{p:.4f}\t{s:.6f}")
            p, s = level_means[level]
            print(f"mean\t{p:.4f}\t{s:.6f}")
    print("level\tpsnr\tssim")
    for level in SHUFFLE_LEVELS:
        p, s = level_means[level]
        print(f"{level}\t{p:.4f}\t{s:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="frfsr", description="Reference-based 4x super-resolution toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("match", help="match LR against Ref, write a flow file")
    p.add_argument("--lr", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--patch", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("warp", help="warp a reference image by a flow file")
    p.add_argument("--ref", required=True)
    p.add_argument("--flow", required=True)
    p.add_argument("--scale", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_warp)

    p = sub.add_parser("train", help="run the two-stage training")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sr", help="super-resolve one LR image")
    p.add_argument("--lr", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stage", choices=("rec", "all"), default="rec")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_sr)

    p = sub.add_parser("eval", help="evaluate a checkpoint at all shuffle levels")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--shuffle-level", choices=SHUFFLE_LEVELS, default="none")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stage", choices=("rec", "all"), default="rec")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
