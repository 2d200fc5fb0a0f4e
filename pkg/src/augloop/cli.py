"""Command-line surface: full runs plus stage-wise execution on checkpoints."""

from __future__ import annotations

import argparse
import json
import sys

from .pipeline import Orchestrator, RunConfig


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="run config JSON file")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--max-iterations", type=int, default=None, help="override iteration count")
    parser.add_argument("--run-dir", default=None, help="override run directory")
    parser.add_argument("--dry-run", action="store_true", help="use deterministic offline providers")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="augloop", description="Evaluation-driven data augmentation loop")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("run", "run the full pipeline (initial fine-tune plus iterations)"),
        ("eval", "evaluate the current student and checkpoint its error sets"),
        ("analyze", "cluster checkpointed validation errors into patterns and strategies"),
        ("generate", "generate quality-gated synthetic data from a checkpoint"),
        ("qc", "review a staged synthetic file once, without regeneration"),
        ("report", "rebuild report.json from checkpoints"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        if name in ("eval", "analyze", "generate"):
            p.add_argument("--iteration", type=int, default=1, help="iteration to operate on")
        if name == "qc":
            p.add_argument("--syn", required=True, help="synthetic JSONL file to review")
    return parser


def _load_config(args: argparse.Namespace) -> RunConfig:
    overrides = {
        "seed": args.seed,
        "max_iterations": args.max_iterations,
        "run_dir": args.run_dir,
        "dry_run": True if args.dry_run else None,
    }
    return RunConfig.from_file(args.config, **overrides)


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    cfg = _load_config(args)
    orchestrator = Orchestrator(cfg)

    if args.command == "run":
        report = orchestrator.run_pipeline()
        summary = {
            "run_dir": cfg.run_dir,
            "hook_invocations": report["hook_invocations"],
            "iterations": len(report["iterations"]),
            "final_train_size": report["final_train_size"],
        }
        print(json.dumps(summary, indent=2))
        return 0
    if args.command == "eval":
        checkpoint = orchestrator.cli_stage_eval(args.iteration)
        print(
            json.dumps(
                {
                    "iteration": args.iteration,
                    "train_errors": len(checkpoint["errors_train"]),
                    "val_errors": len(checkpoint["errors_val"]),
                },
                indent=2,
            )
        )
        return 0
    if args.command == "analyze":
        checkpoint = orchestrator.cli_stage_analyze(args.iteration)
        print(
            json.dumps(
                {
                    "iteration": args.iteration,
                    "k": checkpoint["k"],
                    "patterns": [p["category_name"] for p in checkpoint["patterns"]],
                    "strategies": [s["strategy_name"] for s in checkpoint["strategies"]],
                },
                indent=2,
            )
        )
        return 0
    if args.command == "generate":
        checkpoint = orchestrator.cli_stage_generate(args.iteration)
        print(
            json.dumps(
                {
                    "iteration": args.iteration,
                    "accepted_synthetic": checkpoint["accepted_synthetic"],
                    "qc_stats": checkpoint["qc_stats"],
                    "merged_train_file": checkpoint["merged_train_file"],
                },
                indent=2,
            )
        )
        return 0
    if args.command == "qc":
        review = orchestrator.standalone_qc(args.syn)
        print(json.dumps(review, indent=2))
        return 0
    if args.command == "report":
        report = orchestrator.rebuild_report()
        print(json.dumps({"iterations": len(report["iterations"]), "report": str(orchestrator.run_dir / "report.json")}, indent=2))
        return 0
    return 1


if __name__ == "__main__":
    sys.exit(main())
