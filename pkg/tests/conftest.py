"""Shared fixtures: toy datasets, scripted providers, gateway builders."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import pytest

from augloop.evaluation import TaskSpec
from augloop.gateway import (
    ChatRequest,
    Gateway,
    HashEmbedder,
    ProviderBinding,
    RetryPolicy,
    TransportError,
)


class ScriptedProvider:
    """Pops canned responses in order; exceptions in the script are raised."""

    def __init__(self, responses: list):
        self.responses = list(responses)
        self.requests: list[ChatRequest] = []

    def complete(self, req: ChatRequest) -> str:
        self.requests.append(req)
        if not self.responses:
            raise AssertionError("scripted provider ran out of responses")
        item = self.responses.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


def make_gateway(purpose_providers: dict, max_concurrency: int = 4, embedder=None) -> Gateway:
    binding = ProviderBinding(
        endpoint="scripted://",
        model_id="scripted-model",
        max_concurrency=max_concurrency,
        retry=RetryPolicy(max_attempts=3, backoff=()),
    )
    routes = {purpose: (binding, provider) for purpose, provider in purpose_providers.items()}
    return Gateway(routes, embedder=embedder or HashEmbedder(dim=8, seed=0), record_requests=True, sleep=lambda _: None)


def numeric_record(i: int, a: int, b: int, split: str) -> dict:
    return {
        "id": f"{split}_{i}",
        "messages": [
            {"role": "user", "content": f"Problem {i}: what is {a} + {b}?"},
            {"role": "assistant", "content": f"The total is {a + b}.\n#### {a + b}"},
        ],
    }


def write_numeric_datasets(root: Path, n_train: int = 40, n_val: int = 25) -> tuple[Path, Path]:
    train = [numeric_record(i, 3 + i, 5 + 2 * i, "train") for i in range(n_train)]
    val = [numeric_record(i, 100 + i, 7 + 3 * i, "val") for i in range(n_val)]
    train_path = root / "train.jsonl"
    val_path = root / "val.jsonl"
    train_path.write_text("\n".join(json.dumps(r) for r in train) + "\n", encoding="utf-8")
    val_path.write_text("\n".join(json.dumps(r) for r in val) + "\n", encoding="utf-8")
    return train_path, val_path


def dry_run_config(root: Path, run_dir: Path, seed: int = 11, max_iterations: int = 2, **extra) -> dict:
    train_path, val_path = write_numeric_datasets(root)
    cfg = {
        "train_file": str(train_path),
        "val_file": str(val_path),
        "task": {"kind": "numeric", "numeric_marker": "####"},
        "run_dir": str(run_dir),
        "seed": seed,
        "max_iterations": max_iterations,
        "dry_run": True,
    }
    cfg.update(extra)
    return cfg


@pytest.fixture()
def numeric_task() -> TaskSpec:
    return TaskSpec(kind="numeric", numeric_marker="####")


@pytest.fixture()
def mc_task() -> TaskSpec:
    return TaskSpec(kind="multiple_choice", choice_labels=("A", "B", "C", "D"))


@pytest.fixture()
def em_task() -> TaskSpec:
    return TaskSpec(kind="exact_match")


def transport_error() -> TransportError:
    return TransportError("simulated transient failure")


PYTHON = sys.executable
