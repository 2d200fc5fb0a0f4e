"""The whole loop offline: two iterations, stub hook, evolving error patterns.

Writes toy train/val files, runs `run --dry-run` twice, and shows that the
reports are byte-identical for a fixed seed.
"""

import json
import tempfile
from pathlib import Path

from augloop.cli import main

root = Path(tempfile.mkdtemp(prefix="augloop_demo_"))

def record(i, a, b, split):
    return {"id": f"{split}_{i}", "messages": [
        {"role": "user", "content": f"Problem {i}: what is {a} + {b}?"},
        {"role": "assistant", "content": f"The total is {a + b}.\n#### {a + b}"},
    ]}

(root / "train.jsonl").write_text("\n".join(json.dumps(record(i, 3 + i, 5 + 2 * i, "train")) for i in range(40)) + "\n")
(root / "val.jsonl").write_text("\n".join(json.dumps(record(i, 100 + i, 7 + 3 * i, "val")) for i in range(25)) + "\n")

cfg = {
    "train_file": str(root / "train.jsonl"),
    "val_file": str(root / "val.jsonl"),
    "task": {"kind": "numeric", "numeric_marker": "####"},
    "run_dir": str(root / "run"),
    "seed": 11,
    "max_iterations": 2,
    "dry_run": True,
}
(root / "config.json").write_text(json.dumps(cfg, indent=2))

print("== augloop run --dry-run ==")
main(["run", "--config", str(root / "config.json")])

report = json.loads((root / "run" / "report.json").read_text())
print("\npattern evolution across iterations:")
for it in report["iterations"]:
    print(f"  iteration {it['iteration']}: errors train={it['error_counts']['train']} val={it['error_counts']['val']}  K={it['k']}")
    for name in it["pattern_names"]:
        print(f"    - {name}")
    print(f"    accepted synthetic: {it['accepted_synthetic']} / quota {it['quota']['total']}  QC: {it['qc_stats']}")

cfg2 = dict(cfg)
cfg2["run_dir"] = str(root / "run_again")
(root / "config2.json").write_text(json.dumps(cfg2, indent=2))
main(["run", "--config", str(root / "config2.json")])
same = (root / "run" / "report.json").read_bytes() == (root / "run_again" / "report.json").read_bytes()
print(f"\nre-run with same seed produced a byte-identical report: {same}")
