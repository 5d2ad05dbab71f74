"""Command-line entry point for the trainer."""

from __future__ import annotations

import argparse
import logging
import shlex
import sys

from .config import ConfigError
from .dataset import DatasetError
from .train import MODE_DELEGATE, MODE_TOY, TOY_LEARNING_RATE, TOY_STEPS, train_sft


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sfttrain", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("train", help="run a fine-tune from an emitted dataset and config")
    p.add_argument("--config", required=True, help="flat key=value training config")
    p.add_argument("--dataset", help="dataset path (must agree with the config)")
    p.add_argument("--mode", choices=[MODE_TOY, MODE_DELEGATE], default=MODE_TOY)
    p.add_argument("--out", default="train_out", help="output directory")
    p.add_argument("--steps", type=int, default=TOY_STEPS)
    p.add_argument("--toy-lr", type=float, default=TOY_LEARNING_RATE)
    p.add_argument("--context-size", type=int, default=2)
    p.add_argument("--init-scale", type=float, default=0.0)
    p.add_argument("--delegate-command", help="external trainer command (shell-quoted)")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    command = shlex.split(args.delegate_command) if args.delegate_command else None
    try:
        run = train_sft(
            dataset_path=args.dataset,
            config_path=args.config,
            mode=args.mode,
            out_dir=args.out,
            steps=args.steps,
            learning_rate=args.toy_lr,
            context_size=args.context_size,
            init_scale=args.init_scale,
            delegate_command=command,
        )
    except (ConfigError, DatasetError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if run.loss_log:
        print(
            f"mean NLL {run.initial_nll:.4f} -> {run.final_nll:.4f}; "
            f"checkpoint at {run.checkpoint_dir}"
        )
    else:
        print(f"plan written; checkpoint dir {run.checkpoint_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
