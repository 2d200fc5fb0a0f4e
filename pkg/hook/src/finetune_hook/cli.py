"""Command-line entry matching the orchestrator's hook template contract."""

from __future__ import annotations

import argparse
import sys

from .config import HookConfig, HookConfigError
from .data import CorpusFormatError
from .train import run_hook


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="finetune-hook",
        description="LoRA-train a tiny causal LM on a JSONL corpus and write an endpoint descriptor",
    )
    parser.add_argument("--train-file", required=True)
    parser.add_argument("--iteration", type=int, required=True)
    parser.add_argument("--output-dir", required=True)
    parser.add_argument("--config", default=None, help="HookConfig JSON file")
    args = parser.parse_args(argv)

    try:
        cfg = HookConfig.from_file(args.config)
        descriptor = run_hook(args.train_file, args.iteration, args.output_dir, cfg)
    except (HookConfigError, CorpusFormatError, OSError) as exc:
        print(f"finetune-hook: {exc}", file=sys.stderr)
        return 2
    meta = descriptor["metadata"]
    print(
        f"trained {meta['parameters_trainable']}/{meta['parameters_total']} parameters "
        f"on {meta['train_samples']} samples: loss {meta['initial_loss']} -> {meta['final_loss']}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
