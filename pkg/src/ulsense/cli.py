"""Command-line interface tying the pipeline together.

Subcommands: gen (synthetic sweep dataset), label (two-sided log
labeling), infer (per-record report), bench (warm-up + latency CDF),
eval (confusion matrix + metrics), shapes (architecture report). All
randomness flows from --seed; any error exits nonzero.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time

import numpy as np

from . import dataset, synth
from .labeling import Label, label_log_windows
from .metrics import evaluate, metrics
from .model import (
    InferenceSession,
    ModelConfig,
    derive_shapes,
    load_weights,
)
from .runtime import TimingStats, timing_report


def _cmd_gen(args) -> int:
    spec = synth.SweepSpec.from_file(args.scenarios) if args.scenarios \
        else synth.SweepSpec()
    writer = dataset.open_writer(args.out, sample_every=args.sample_every,
                                 queue_size=256)
    t0 = time.monotonic()
    for record in synth.generate_records(spec, args.count, args.seed):
        writer.append(record)
        done = writer.stats.offered
        if args.progress and done % 500 == 0:
            rate = done / (time.monotonic() - t0)
            print(f"  {done}/{args.count} records ({rate:.1f}/s)",
                  file=sys.stderr)
    stats = writer.finalize()
    print(f"wrote {stats.persisted} records to {args.out} "
          f"(offered {stats.offered}, dropped {stats.dropped})")
    return 0


def _read_log(path):
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or "t" not in reader.fieldnames \
                or "cb_count" not in reader.fieldnames:
            raise ValueError(f"{path}: expected CSV with t,cb_count columns")
        return [(float(row["t"]), int(row["cb_count"])) for row in reader]


def _cmd_label(args) -> int:
    log1 = _read_log(args.log1)
    log2 = _read_log(args.log2)
    out1, out2 = label_log_windows(log1, log2, args.window_ms / 1e3)
    with open(args.out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["side", "t", "cb_count", "label"])
        for side, rows in ((1, out1), (2, out2)):
            for slot in rows:
                w.writerow([side, f"{slot.t:.6f}", slot.cb_count,
                            Label(slot.label).name])
    print(f"labeled {len(out1)} + {len(out2)} records -> {args.out}")
    return 0


def _cmd_infer(args) -> int:
    cm, result, rows = evaluate(args.data, args.weights)
    n_classes = cm.n_classes
    with open(args.report, "w", newline="") as f:
        w = csv.writer(f)
        header = ["slot_index", "true", "predicted", "latency_us"]
        header += [f"prob_{i}" for i in range(n_classes)]
        header += [f"logit_{i}" for i in range(n_classes)]
        w.writerow(header)
        for slot, truth, pred, latency, probs, logits in rows:
            w.writerow([slot, truth, pred, f"{latency:.1f}"]
                       + [f"{p:.8f}" for p in probs]
                       + [f"{x:.8f}" for x in logits])
    print(f"evaluated {cm.total} records -> {args.report}")
    _print_matrix(cm, result)
    return 0


def _cmd_bench(args) -> int:
    bundle = load_weights(args.weights)
    rng = np.random.default_rng(args.seed)
    grid_shape = bundle.config.grid + (2,)
    records = [
        (rng.standard_normal(grid_shape).astype(np.float16),
         rng.standard_normal(bundle.config.n_scalars).astype(np.float32))
        for _ in range(min(args.iters, 8))
    ]
    session = InferenceSession(bundle, strategy=args.strategy)
    stats = TimingStats()
    t0 = time.perf_counter()
    session.warmup()
    warmup_s = time.perf_counter() - t0
    for i in range(args.iters):
        iq, scalars = records[i % len(records)]
        pred = session.forward_arrays(iq, scalars)
        stats.add(i, pred.latency_us, phase="all", cold=pred.cold)
    pct = stats.percentiles()
    print(f"warm-up (alloc + tuning + dummy pass): {warmup_s * 1e3:.1f} ms")
    print(f"warm latency over {args.iters} iters: "
          f"median {pct['median']:.1f} us, p95 {pct['p95']:.1f} us, "
          f"p99 {pct['p99']:.1f} us")
    if args.report:
        with open(args.report, "w") as f:
            f.write(timing_report(stats, budget_us=args.budget_us))
        print(f"timing series -> {args.report}")
    return 0


def _print_matrix(cm, result):
    pct = cm.row_percent()
    names = (["CLEAN", "INTERF"] if cm.n_classes == 2
             else [str(i) for i in range(cm.n_classes)])
    print("confusion matrix (rows = true class, row-normalized %):")
    for i, name in enumerate(names):
        cells = "  ".join(f"{pct[i, j]:6.2f}%" for j in range(cm.n_classes))
        counts = "  ".join(f"{cm.counts[i, j]}" for j in range(cm.n_classes))
        print(f"  {name:>7s}: {cells}   ({counts})")
    if result is not None:
        print(f"accuracy {result.accuracy:.4f}  recall {result.recall:.4f}"
              f"  specificity {result.specificity:.4f}")
    else:
        acc = np.trace(cm.counts) / cm.total
        print(f"accuracy {acc:.4f}")


def _cmd_eval(args) -> int:
    cm, result, _ = evaluate(args.data, args.weights)
    _print_matrix(cm, result)
    return 0


def _cmd_shapes(args) -> int:
    config = ModelConfig(alpha=args.alpha, beta=args.beta,
                         n_classes=args.classes)
    for line in derive_shapes(config).lines():
        print(line)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ulsense",
        description="Uplink in-band interference detection pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic sweep dataset")
    p.add_argument("--scenarios", help="sweep spec file (.json/.yaml)")
    p.add_argument("--out", required=True, help="output .ifr path")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample-every", type=int, default=1,
                   help="persist 1 in N offered records (default 1)")
    p.add_argument("--progress", action="store_true")
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("label", help="label paired gNB logs per window")
    p.add_argument("--log1", required=True, help="CSV with t,cb_count")
    p.add_argument("--log2", required=True)
    p.add_argument("--window-ms", type=float, default=100.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_label)

    p = sub.add_parser("infer", help="run a dataset, write per-record CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("bench", help="warm-up + steady-state latency")
    p.add_argument("--weights", required=True)
    p.add_argument("--iters", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--strategy", default="auto",
                   choices=["auto", "im2col", "offset"])
    p.add_argument("--budget-us", type=float, default=1000.0)
    p.add_argument("--report")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("eval", help="confusion matrix + metrics")
    p.add_argument("--data", required=True)
    p.add_argument("--weights", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("shapes", help="architecture / shape report")
    p.add_argument("--alpha", type=int, required=True)
    p.add_argument("--beta", type=int, required=True)
    p.add_argument("--classes", type=int, default=2)
    p.set_defaults(func=_cmd_shapes)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # CLI boundary: report and exit nonzero
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
