"""Command-line interface: dataset generation, training, evaluation, ablations, robustness."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .config import load_config
from .corruption import registry_table
from .data import generate_dataset, write_dataset
from .training import (
    evaluate,
    run_depth_ablation,
    run_fusion_ablation,
    run_robustness,
    train,
)


def _cmd_generate(args) -> int:
    out = Path(args.out)
    for split, count, offset in (("train", args.train_n, 0), ("test", args.test_n, 1)):
        samples = generate_dataset(count, args.seed * 2 + offset)
        write_dataset(samples, out / split)
        print(f"wrote {count} samples to {out / split}")
    return 0


def _cmd_train(args) -> int:
    config = load_config(args.config)
    if args.out:
        config = replace(config, out_dir=args.out)
    checkpoint_path, report = train(config)
    print(f"checkpoint: {checkpoint_path}")
    print(f"steps: {report.steps}  wall time: {report.wall_time_s:.1f}s")
    print(report.final_metrics.to_text(), end="")
    return 0


def _cmd_eval(args) -> int:
    metrics = evaluate(args.ckpt, args.data)
    print(metrics.to_text(), end="")
    if args.json:
        Path(args.json).write_text(metrics.to_json())
    return 0


def _run_ablation(args, runner, filename: str) -> int:
    config = load_config(args.config)
    kwargs = {"seeds": args.seeds}
    if getattr(args, "strategies", None):
        kwargs["strategies"] = args.strategies.split(",")
    if getattr(args, "depths", None):
        kwargs["depths"] = [int(d) for d in args.depths.split(",")]
    report = runner(config, **kwargs)
    print(report.format_table(), end="")
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{filename}.json").write_text(report.to_json())
    (out_dir / f"{filename}.txt").write_text(report.format_table())
    print(f"report: {out_dir / (filename + '.json')}")
    return 0


def _cmd_robust(args) -> int:
    report = run_robustness(args.ckpt, args.data, seed=args.seed)
    print(report.format_table(), end="")
    if args.json:
        Path(args.json).write_text(report.to_json())
    return 0


def _cmd_list_corruptions(_args) -> int:
    print(registry_table(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vqla",
        description="Synthetic visual question localized-answering harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write synthetic train/test datasets")
    p.add_argument("--out", required=True)
    p.add_argument("--train-n", type=int, required=True)
    p.add_argument("--test-n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_generate)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="override out_dir from the config")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--json", default=None)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("ablate-fusion", help="train/evaluate every fusion strategy")
    p.add_argument("--config", required=True)
    p.add_argument("--strategies", default=None, help="comma-separated subset")
    p.add_argument("--seeds", type=int, default=1, help="average over this many seeds")
    p.set_defaults(fn=lambda a: _run_ablation(a, run_fusion_ablation, "fusion_ablation"))

    p = sub.add_parser("ablate-depth", help="sweep the co-attention depth")
    p.add_argument("--config", required=True)
    p.add_argument("--depths", default=None, help="comma-separated depths (default 2,4,6,8,10)")
    p.add_argument("--seeds", type=int, default=1)
    p.set_defaults(fn=lambda a: _run_ablation(a, run_depth_ablation, "depth_ablation"))

    p = sub.add_parser("robust-eval", help="corruption robustness curves for a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", default=None)
    p.set_defaults(fn=_cmd_robust)

    p = sub.add_parser("list-corruptions", help="dump the corruption registry")
    p.set_defaults(fn=_cmd_list_corruptions)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
