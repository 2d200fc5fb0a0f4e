"""Corpus basics: JSONL round-trips, subsampling, merging synthetic data."""

import json
import tempfile
from pathlib import Path

from augloop import Dataset, Message, Sample, load_dataset, merge_augmented, subsample, write_dataset

workdir = Path(tempfile.mkdtemp(prefix="augloop_demo_"))

# A training file is one JSON record per line; ids are optional and
# deterministically assigned from line numbers when missing.
train_path = workdir / "train.jsonl"
with train_path.open("w") as fh:
    for i in range(12):
        record = {"messages": [
            {"role": "user", "content": f"What is {i} + {i + 1}?"},
            {"role": "assistant", "content": f"#### {2 * i + 1}"},
        ]}
        fh.write(json.dumps(record) + "\n")

train = load_dataset(train_path, "train")
print(f"loaded {len(train)} samples; first id = {train.samples[0].id}")

# Write-then-load is the identity on every field.
copy_path = workdir / "copy.jsonl"
write_dataset(train, copy_path)
assert load_dataset(copy_path, "train").samples == train.samples
print("round-trip: identical")

# Seeded subsampling preserves order and is a pure function of the seed.
picked = subsample(train, 5, seed=42)
print("subsample(5, seed=42):", [s.id for s in picked.samples])
assert [s.id for s in subsample(train, 5, seed=42).samples] == [s.id for s in picked.samples]

# Synthetic data carries provenance and merges after the original rows.
syn = Dataset(
    samples=tuple(
        Sample(
            id=f"synthetic_{i}",
            messages=(Message("user", f"What is {10 * i} + 1?"), Message("assistant", f"#### {10 * i + 1}")),
            origin="synthetic",
            split="train",
            based_on_strategy="Drill Addition",
            based_on_example=f"train_{i}",
        )
        for i in range(3)
    ),
    split="synthetic",
)
merged = merge_augmented(train, syn)
print(f"merged size: {len(merged)} (train {len(train)} + synthetic {len(syn)})")
print("last merged record:", json.dumps(merged.samples[-1].to_record())[:100], "...")
