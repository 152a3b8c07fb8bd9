"""Command line: dualnet train | predict | evaluate."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import binio
from .train import Checkpoint, TrainConfig, evaluate, predict, train


def build_parser():
    parser = argparse.ArgumentParser(prog="dualnet",
                                     description="dual-domain D-bar trainer")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train")
    p.add_argument("--data", required=True, help="training dataset directory")
    p.add_argument("--val", help="validation dataset directory")
    p.add_argument("--out", default="checkpoint.pt")
    p.add_argument("--mode", choices=("multi_scale", "single_scale",
                                      "baseline_single_unet"),
                   default="multi_scale")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--scales", type=int, default=3)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("predict")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", required=True, help=".dbar file (first record)")
    p.add_argument("--out", default="prediction.dbar")

    p = sub.add_parser("evaluate")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--csv", default="metrics.csv")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "train":
        config = TrainConfig(alpha=args.alpha, scales=args.scales,
                             epochs=args.epochs, batch_size=args.batch_size,
                             learning_rate=args.lr, seed=args.seed,
                             mode=args.mode)
        ckpt = train(args.data, config, val_dir=args.val)
        ckpt.save(args.out)
        print(f"saved checkpoint to {args.out}")
        return 0
    if args.command == "predict":
        ckpt = Checkpoint.load(args.ckpt)
        lowpass = binio.read_arrays(args.input)[0]
        _, final = predict(ckpt, lowpass)
        # minimal single-array writer mirroring the dataset format
        import struct
        import zlib
        arr = np.ascontiguousarray(final, dtype="<f4")
        head = (binio.MAGIC + struct.pack("<II", binio.FORMAT_VERSION, arr.ndim)
                + struct.pack(f"<{arr.ndim}I", *arr.shape) + struct.pack("<I", 1))
        body = head + arr.tobytes()
        with open(args.out, "wb") as fh:
            fh.write(body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF))
        print(f"wrote prediction to {args.out}")
        return 0
    if args.command == "evaluate":
        ckpt = Checkpoint.load(args.ckpt)
        rows = evaluate(ckpt, args.data, csv_path=args.csv)
        means = {k: float(np.mean([r[k] for r in rows]))
                 for k in ("psnr", "ssim", "rmse")}
        print(json.dumps({"samples": len(rows), "mean": means}))
        return 0
    return 1


if __name__ == "__main__":
    sys.exit(main())
