"""Conversation corpus: the sample data model and JSONL persistence.

Datasets are immutable after load and safe to share across workers; all
writes go through the single orchestrator process.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace
from pathlib import Path

VALID_ROLES = ("user", "assistant")


class CorpusError(Exception):
    """Base for corpus failures."""


class MalformedRecord(CorpusError):
    """A JSONL line that cannot be turned into a one-turn sample."""

    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class ValidationLeak(CorpusError):
    """A validation-split sample was about to enter a training artifact."""


class DuplicateId(CorpusError):
    """Two samples with the same id inside one dataset."""


@dataclass(frozen=True)
class Message:
    role: str
    content: str


@dataclass(frozen=True)
class Sample:
    """One one-turn conversation: exactly a user turn then an assistant turn."""

    id: str
    messages: tuple[Message, ...]
    origin: str = "original"  # original | synthetic
    split: str = "train"  # train | val
    based_on_strategy: str | None = None
    based_on_example: str | None = None

    def __post_init__(self) -> None:
        if len(self.messages) != 2 or self.messages[0].role != "user" or self.messages[1].role != "assistant":
            raise ValueError(f"sample {self.id!r}: expected exactly one user turn then one assistant turn")
        if self.origin == "synthetic" and not (self.based_on_strategy or self.based_on_example):
            raise ValueError(f"synthetic sample {self.id!r} missing based_on_strategy/based_on_example")

    @property
    def user_text(self) -> str:
        return self.messages[0].content

    @property
    def assistant_text(self) -> str:
        return self.messages[1].content

    def to_record(self) -> dict:
        """JSON record for one JSONL line.

        Synthetic samples follow the generation output contract
        (sample_id / is_synthetic / based_on_*); originals keep a plain id.
        """
        messages = [{"role": m.role, "content": m.content} for m in self.messages]
        if self.origin == "synthetic":
            record: dict = {"sample_id": self.id, "is_synthetic": True}
            if self.based_on_strategy is not None:
                record["based_on_strategy"] = self.based_on_strategy
            if self.based_on_example is not None:
                record["based_on_example"] = self.based_on_example
            record["messages"] = messages
            return record
        return {"id": self.id, "messages": messages}


@dataclass(frozen=True)
class Dataset:
    samples: tuple[Sample, ...]
    split: str  # train | val | synthetic

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for s in self.samples:
            if s.id in seen:
                raise DuplicateId(f"duplicate sample id {s.id!r} in {self.split} dataset")
            seen.add(s.id)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def ids(self) -> set[str]:
        return {s.id for s in self.samples}

    def by_id(self) -> dict[str, Sample]:
        return {s.id: s for s in self.samples}


def _sample_from_record(record: dict, line_no: int, split: str) -> Sample:
    if not isinstance(record, dict) or "messages" not in record:
        raise MalformedRecord(line_no, "record has no 'messages' array")
    raw_messages = record["messages"]
    if not isinstance(raw_messages, list) or len(raw_messages) != 2:
        raise MalformedRecord(line_no, f"expected exactly 2 message turns, got {len(raw_messages) if isinstance(raw_messages, list) else type(raw_messages).__name__}")
    parsed = []
    for m in raw_messages:
        if not isinstance(m, dict) or m.get("role") not in VALID_ROLES or not isinstance(m.get("content"), str):
            raise MalformedRecord(line_no, f"bad message entry {m!r}")
        parsed.append(Message(role=m["role"], content=m["content"]))
    if parsed[0].role != "user" or parsed[1].role != "assistant":
        raise MalformedRecord(line_no, "messages must be one user turn followed by one assistant turn")

    synthetic = bool(record.get("is_synthetic"))
    sample_id = record.get("sample_id") or record.get("id") or f"{split}_{line_no}"
    sample_split = "train" if split == "synthetic" else split
    try:
        return Sample(
            id=str(sample_id),
            messages=tuple(parsed),
            origin="synthetic" if synthetic else "original",
            split=sample_split,
            based_on_strategy=record.get("based_on_strategy"),
            based_on_example=record.get("based_on_example"),
        )
    except ValueError as exc:
        raise MalformedRecord(line_no, str(exc)) from exc


def load_dataset(path: str | Path, split: str) -> Dataset:
    """Load a JSONL dataset; ids missing from a line become "<split>_<line>".

    A malformed line aborts the load: corrupt input must not silently
    shrink a split.
    """
    path = Path(path)
    samples: list[Sample] = []
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(line_no, f"invalid JSON ({exc.msg})") from exc
            samples.append(_sample_from_record(record, line_no, split))
    return Dataset(samples=tuple(samples), split=split)


def write_dataset(ds: Dataset, path: str | Path) -> None:
    """Write one JSON record per line; load_dataset inverts this exactly.

    Refuses to put validation samples into a training-destined file.
    """
    if ds.split in ("train", "synthetic"):
        leaked = [s.id for s in ds.samples if s.split == "val"]
        if leaked:
            raise ValidationLeak(f"validation samples {leaked} cannot enter a {ds.split} file")
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for s in ds.samples:
            fh.write(json.dumps(s.to_record(), ensure_ascii=False) + "\n")


def merge_augmented(train: Dataset, syn: Dataset) -> Dataset:
    """Union of original training data and accepted synthetic data, train order first."""
    if train.split != "train":
        raise ValueError(f"expected train split, got {train.split!r}")
    if syn.split != "synthetic":
        raise ValueError(f"expected synthetic split, got {syn.split!r}")
    collisions = train.ids() & syn.ids()
    if collisions:
        raise DuplicateId(f"id collision between train and synthetic: {sorted(collisions)}")
    merged = train.samples + tuple(replace(s, split="train") for s in syn.samples)
    return Dataset(samples=merged, split="train")


def subsample(ds: Dataset, n: int, seed: int) -> Dataset:
    """Uniform sample without replacement, original order preserved.

    Pure function of (ds, n, seed); clamps to the dataset size.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    size = min(n, len(ds.samples))
    indices = sorted(random.Random(seed).sample(range(len(ds.samples)), size))
    return Dataset(samples=tuple(ds.samples[i] for i in indices), split=ds.split)
