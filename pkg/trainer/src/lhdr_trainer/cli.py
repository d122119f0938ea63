"""Trainer command line: data generation, the two training phases, exports."""

from __future__ import annotations

import argparse
import json
import sys


def build_parser():
    parser = argparse.ArgumentParser(prog="lhdr-trainer", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-data", help="simulate a training dataset via the luckyhdr CLI")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=240)
    p.add_argument("--seed", type=int, default=11)
    p.add_argument("--size", type=int, default=128, help="source image side length")
    p.add_argument("--n-frames", type=int, default=3)

    p = sub.add_parser("train-phase1", help="small-motion training of all three networks")
    p.add_argument("--data", required=True, help="dataset directory (burst layout)")
    p.add_argument("--val-data", default=None)
    p.add_argument("--out", required=True, help="output .lhdrw bundle")
    p.add_argument("--steps", type=int, default=5000)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--crop", type=int, default=64)
    p.add_argument("--lr", type=float, default=2e-3)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train-phase2", help="translation curriculum, coarse module only")
    p.add_argument("--data", required=True)
    p.add_argument("--val-data", default=None)
    p.add_argument("--init", required=True, help="phase-1 bundle to start from")
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=1500)
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--crop", type=int, default=112)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("export-vectors", help="write conformance vectors for the runtime tests")
    p.add_argument("--weights", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=314)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "make-data":
        from .data import make_dataset

        path = make_dataset(args.out, count=args.count, seed=args.seed, size=args.size, n_frames=args.n_frames)
        print(f"dataset at {path}")
        return 0

    if args.command == "train-phase1":
        from .train import TrainConfig, train_phase1

        cfg = TrainConfig(steps=args.steps, batch=args.batch, crop=args.crop, lr=args.lr, seed=args.seed)
        meta = train_phase1(args.data, cfg, args.out, val_dir=args.val_data)
        print(json.dumps(meta["validation"], indent=2))
        return 0

    if args.command == "train-phase2":
        from .train import TrainConfig, train_phase2

        cfg = TrainConfig(steps=args.steps, batch=args.batch, crop=args.crop, lr=args.lr, seed=args.seed)
        meta = train_phase2(args.data, args.init, cfg, args.out, val_dir=args.val_data)
        print(json.dumps(meta["validation"], indent=2))
        return 0

    if args.command == "export-vectors":
        from .export import export_conformance_vectors

        path = export_conformance_vectors(args.weights, args.out, seed=args.seed)
        print(f"vectors at {path}")
        return 0

    return 1


if __name__ == "__main__":
    sys.exit(main())
