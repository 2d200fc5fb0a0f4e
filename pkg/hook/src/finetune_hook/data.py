"""JSONL conversation corpus to token batches with assistant-only loss labels.

Byte-level tokenization keeps the hook free of external vocabularies:
ids 0-255 are raw bytes, followed by PAD/BOS/EOS specials.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import torch

PAD_ID = 256
BOS_ID = 257
EOS_ID = 258
VOCAB_SIZE = 259

IGNORE_INDEX = -100


class CorpusFormatError(Exception):
    pass


@dataclass
class EncodedSample:
    input_ids: list[int]
    labels: list[int]  # IGNORE_INDEX outside the assistant span


def _read_records(train_file: str | Path) -> list[dict]:
    path = Path(train_file)
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}:{line_no}: invalid JSON ({exc.msg})") from exc
    return records


def _conversation(record: dict, line_no: int) -> tuple[str, str]:
    messages = record.get("messages")
    if not isinstance(messages, list) or len(messages) != 2:
        raise CorpusFormatError(f"line {line_no}: expected exactly one user and one assistant turn")
    user, assistant = messages
    if user.get("role") != "user" or assistant.get("role") != "assistant":
        raise CorpusFormatError(f"line {line_no}: turns must be user then assistant")
    return str(user.get("content", "")), str(assistant.get("content", ""))


def encode_sample(user: str, assistant: str, max_seq_len: int) -> EncodedSample:
    prompt = f"User: {user}\nAssistant: ".encode("utf-8")
    completion = assistant.encode("utf-8")
    ids = [BOS_ID] + list(prompt) + list(completion) + [EOS_ID]
    # loss only on the assistant bytes and the closing EOS
    labels = [IGNORE_INDEX] * (1 + len(prompt)) + list(completion) + [EOS_ID]
    ids = ids[:max_seq_len]
    labels = labels[:max_seq_len]
    return EncodedSample(input_ids=ids, labels=labels)


def load_corpus(train_file: str | Path, max_seq_len: int) -> list[EncodedSample]:
    records = _read_records(train_file)
    if not records:
        raise CorpusFormatError(f"{train_file}: no training samples")
    encoded = []
    for line_no, record in enumerate(records):
        user, assistant = _conversation(record, line_no)
        encoded.append(encode_sample(user, assistant, max_seq_len))
    return encoded


def collate(samples: list[EncodedSample]) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Right-pad a batch; returns (input_ids, labels, pad_mask)."""
    width = max(len(s.input_ids) for s in samples)
    input_ids = torch.full((len(samples), width), PAD_ID, dtype=torch.long)
    labels = torch.full((len(samples), width), IGNORE_INDEX, dtype=torch.long)
    for i, sample in enumerate(samples):
        n = len(sample.input_ids)
        input_ids[i, :n] = torch.tensor(sample.input_ids, dtype=torch.long)
        labels[i, :n] = torch.tensor(sample.labels, dtype=torch.long)
    return input_ids, labels, input_ids.eq(PAD_ID)
