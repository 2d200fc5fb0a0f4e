"""Stand-in fine-tune hook for dry runs and tests.

Honors the hook contract without training anything: reads the merged
train file, writes the endpoint descriptor, exits 0. The model id
changes with the iteration so downstream dry-run students evolve.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

DESCRIPTOR_FILENAME = "descriptor.json"


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="No-op fine-tune hook")
    parser.add_argument("train_file")
    parser.add_argument("iteration", type=int)
    parser.add_argument("output_dir")
    args = parser.parse_args(argv)

    train_path = Path(args.train_file)
    if not train_path.exists():
        print(f"train file not found: {train_path}", file=sys.stderr)
        return 2
    n_samples = sum(1 for line in train_path.read_text(encoding="utf-8").splitlines() if line.strip())

    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    descriptor = {
        "endpoint": "dryrun://student",
        "model_id": f"stub-student-it{args.iteration}",
        "metadata": {"train_samples": n_samples, "trained": False},
    }
    (out_dir / DESCRIPTOR_FILENAME).write_text(json.dumps(descriptor, indent=2), encoding="utf-8")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
