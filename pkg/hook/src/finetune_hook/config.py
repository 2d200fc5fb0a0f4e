"""Hook configuration; defaults follow the standard adapter-tuning recipe."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


class HookConfigError(Exception):
    pass


@dataclass
class HookConfig:
    base_model: str = "tiny"  # only the built-in tiny causal LM ships
    rank: int = 32
    alpha: int = 32
    dropout: float = 0.05
    epochs: int = 5
    learning_rate: float = 2e-4
    optimizer: str = "adam"
    batch_size: int = 8
    max_seq_len: int = 256
    seed: int = 0
    endpoint: str = "http://localhost:8000/v1"
    model_id_prefix: str = "student"
    # tiny-model dimensions; a few hundred thousand parameters, CPU-trainable
    d_model: int = 128
    n_head: int = 4
    n_layer: int = 2
    d_ff: int = 256

    @classmethod
    def from_file(cls, path: str | Path | None) -> "HookConfig":
        if path is None:
            return cls()
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise HookConfigError(f"unknown hook config keys: {sorted(unknown)}")
        return cls(**raw)

    def validate(self) -> None:
        if self.base_model != "tiny":
            raise HookConfigError(
                f"unsupported base model {self.base_model!r}: this reference hook ships only the built-in tiny causal LM"
            )
        if self.rank < 1 or self.epochs < 1 or self.batch_size < 1:
            raise HookConfigError("rank, epochs, and batch_size must be >= 1")
        if self.optimizer != "adam":
            raise HookConfigError(f"unsupported optimizer {self.optimizer!r}")
