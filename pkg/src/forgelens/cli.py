"""Command-line interface: generate / train / eval / cross-domain / ablate."""

import os

# BLAS threading is pinned before numpy loads so single-threaded runs are
# bit-reproducible; matrices here are far too small to benefit from threads.
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import argparse
import json
import sys
from pathlib import Path


def _cmd_generate(args):
    from .data import build_dataset, get_style

    style = get_style(args.style)
    counts = {
        "train": _split_counts(args.train, args.fake_frac),
        "test": _split_counts(args.test, args.fake_frac),
    }
    build_dataset(style, args.out, counts, seed=args.seed)
    print(f"wrote {args.train}+{args.test} samples for style {args.style!r} to {args.out}")


def _split_counts(total: int, fake_frac: float):
    n_fake = round(total * fake_frac)
    return (total - n_fake, n_fake)


def _cmd_train(args):
    from .config import load_config
    from .train import train

    cfg = load_config(args.config)
    if args.data:
        cfg.train_dir = args.data
    result = train(cfg, args.out)
    print(f"checkpoint: {result.checkpoint}")
    if result.final_val is not None:
        print(f"final val: {result.final_val.to_json()}")
    print(f"frozen stack unchanged: {result.frozen_unchanged}")


def _cmd_eval(args):
    from .data import load_dataset
    from .train import evaluate, load_trained

    detector = load_trained(args.ckpt)
    view = load_dataset(args.data, args.split)
    dump = Path(args.dump_maps) if args.dump_maps else None
    report = evaluate(detector, view, split=args.split, dump_maps=dump)
    text = report.to_json()
    if args.report:
        Path(args.report).write_text(text + "\n")
    print(text)


def _cmd_cross_domain(args):
    from .train import cross_domain

    reports = cross_domain(args.ckpt, args.data.split(","))
    lines = [r.to_json() for r in reports]
    if args.report:
        Path(args.report).write_text("\n".join(lines) + "\n")
    for line in lines:
        print(line)


def _cmd_ablate(args):
    from .config import load_config
    from .train import ablate

    cfg = load_config(args.config)
    if args.data:
        cfg.train_dir = args.data
    grids = tuple(args.grids.split(","))
    results = ablate(cfg, args.out, args.eval_data.split(","), grids=grids)
    print(json.dumps(results, indent=2, sort_keys=True))


def _cmd_bench(args):
    from .benchmark import run_benchmark

    run_benchmark(repeats=args.repeats)


def main(argv=None):
    parser = argparse.ArgumentParser(prog="forgelens",
                                     description="desk-scale multimodal forgery detection")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic domain dataset")
    p.add_argument("--style", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--train", type=int, required=True)
    p.add_argument("--test", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fake-frac", type=float, default=0.5)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("train", help="train from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--data", help="override train_dir from the config")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on one dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--report", help="write the JSON report here")
    p.add_argument("--dump-maps", help="directory for per-sample segmentation PGMs")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("cross-domain", help="evaluate a checkpoint across domains")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True, help="comma-separated dataset dirs")
    p.add_argument("--report")
    p.set_defaults(func=_cmd_cross_domain)

    p = sub.add_parser("ablate", help="run the module/prompt ablation grids")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--data", help="override train_dir from the config")
    p.add_argument("--eval-data", required=True, help="comma-separated held-out dirs")
    p.add_argument("--grids", default="modules,prompts")
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("bench", help="compare compiled vs reference conv kernels")
    p.add_argument("--repeats", type=int, default=200)
    p.set_defaults(func=_cmd_bench)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
