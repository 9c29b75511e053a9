"""Command-line surface.

    owdetr gen-data|train|incremental|eval|report|ablate
           [--config PATH] [--seed N] [--alpha F] [--k-u N] [--top-k N]
           [--no-nc] [--no-objectness] [--out DIR] [--task N]
           [--workers N] [--preset desk|paper]

The OWDETR_OUT environment variable sets the default output root.
"""

from __future__ import annotations

import argparse
import sys

from .config import parse_config
from .errors import DivergenceError, OwdetrError
from .protocol import checkpoint_save
from .runner import (
    run_ablate,
    run_eval,
    run_gen_data,
    run_incremental,
    run_report,
    run_train,
)

COMMANDS = ("gen-data", "train", "incremental", "eval", "report", "ablate")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="owdetr",
        description="Open-world shape detection benchmark: data generation, "
        "episodic training, and OWOD evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--alpha", type=float, default=None, help="objectness loss weight")
        p.add_argument("--k-u", dest="k_u", type=int, default=None, help="pseudo-labels per image")
        p.add_argument("--top-k", dest="top_k", type=int, default=None, help="detections kept per image")
        p.add_argument("--no-nc", action="store_true", help="disable novelty classification")
        p.add_argument("--no-objectness", action="store_true", help="disable the objectness branch")
        p.add_argument("--out", type=str, default=None, help="output directory")
        p.add_argument("--workers", type=int, default=None, help="eval worker pool size")
        p.add_argument("--preset", type=str, default=None, choices=("desk", "paper"))
        if name == "eval":
            p.add_argument("--task", type=int, default=None, help="task checkpoint to evaluate")
    return parser


def config_from_args(args) -> "RunConfig":
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.alpha is not None:
        overrides["alpha"] = args.alpha
    if args.k_u is not None:
        overrides["k_u"] = args.k_u
    if args.top_k is not None:
        overrides["top_k"] = args.top_k
    if args.no_nc:
        overrides["novelty_classification"] = False
    if args.no_objectness:
        overrides["objectness"] = False
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.preset is not None:
        overrides["preset"] = args.preset
    return parse_config(args.config, overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        if args.command == "gen-data":
            path = run_gen_data(cfg)
        elif args.command == "train":
            path = run_train(cfg)
        elif args.command == "incremental":
            path = run_incremental(cfg)
        elif args.command == "eval":
            path = run_eval(cfg, task=args.task)
        elif args.command == "report":
            path = run_report(cfg)
        else:
            path = run_ablate(cfg)
        print(path)
        return 0
    except DivergenceError as e:
        if e.last_good is not None:
            rescue = cfg.resolved_out_dir() / "checkpoints" / "last_good.ckpt"
            rescue.parent.mkdir(parents=True, exist_ok=True)
            checkpoint_save(e.last_good, rescue, config_hash=cfg.config_hash())
            print(f"error: {e}; last good state saved to {rescue}", file=sys.stderr)
        else:
            print(f"error: {e}", file=sys.stderr)
        return 1
    except OwdetrError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
