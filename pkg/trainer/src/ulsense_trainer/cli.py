"""Training command line: .ifr dataset in, .ifw bundle out."""

from __future__ import annotations

import argparse
import sys

from .ifw import save
from .train import TrainConfig, train


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ulsense-train",
        description="Train an interference classifier and export weights")
    parser.add_argument("--data", required=True, help=".ifr dataset")
    parser.add_argument("--out", required=True, help=".ifw output path")
    parser.add_argument("--alpha", type=int, required=True)
    parser.add_argument("--beta", type=int, required=True)
    parser.add_argument("--gamma", type=int, default=32,
                        help="batch size (16/32/64/128)")
    parser.add_argument("--classes", type=int, default=2, choices=[2, 6])
    parser.add_argument("--epochs", type=int, default=8)
    parser.add_argument("--lr", type=float, default=1e-3)
    parser.add_argument("--l2", type=float, default=1e-4)
    parser.add_argument("--dropout", type=float, nargs=3,
                        default=[0.25, 0.25, 0.5],
                        metavar=("P1", "P2", "P3"))
    parser.add_argument("--class-weights", type=float, nargs="+",
                        help="per-class loss weights; default balances "
                             "by inverse frequency")
    parser.add_argument("--tl-base", help="base .ifw for fine-tuning")
    parser.add_argument("--freeze-block1", action="store_true")
    parser.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = TrainConfig(
        alpha=args.alpha, beta=args.beta, gamma=args.gamma,
        n_classes=args.classes, epochs=args.epochs, lr=args.lr,
        dropout=tuple(args.dropout), l2=args.l2,
        class_weights=tuple(args.class_weights) if args.class_weights
        else None,
        tl_base=args.tl_base, freeze_block1=args.freeze_block1,
        seed=args.seed)
    try:
        bundle, report = train(config, args.data)
        save(bundle, args.out)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"class counts: {report.class_counts}")
    print(f"validation accuracy by epoch: "
          f"{[f'{a:.4f}' for a in report.epoch_val_accuracy]}")
    print(f"best validation accuracy: {report.val_accuracy:.4f} "
          f"({report.val_records} held-out records)")
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
