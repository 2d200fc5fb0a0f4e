"""Student-model evaluation: predictions, task-specific failure criteria, error sets.

A sample fails when the canonical answer extracted from the prediction
does not equal the one extracted from the gold response; unanswerable
predictions (including transport failures) always count as failures.
"""

from __future__ import annotations

import re
import string
import subprocess
import tempfile
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .corpus import Dataset
from .gateway import ChatRequest, Gateway

TASK_KINDS = ("exact_match", "multiple_choice", "numeric", "external_command")

NO_RESPONSE = "<no-response>"

_ARTICLES = re.compile(r"\b(a|an|the)\b")
_NUMBER = re.compile(r"-?\d[\d,]*(?:\.\d+)?")


@dataclass(frozen=True)
class TaskSpec:
    kind: str
    choice_labels: tuple[str, ...] = ()
    numeric_marker: str | None = None
    numeric_epsilon: float = 0.0
    command_template: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind {self.kind!r}")
        if self.kind == "multiple_choice" and not self.choice_labels:
            raise ValueError("multiple_choice requires choice_labels")
        if self.kind == "numeric" and not self.numeric_marker:
            raise ValueError("numeric requires numeric_marker")
        if self.kind == "external_command" and not self.command_template:
            raise ValueError("external_command requires command_template")

    @classmethod
    def from_dict(cls, raw: dict) -> "TaskSpec":
        return cls(
            kind=raw["kind"],
            choice_labels=tuple(raw.get("choice_labels") or ()),
            numeric_marker=raw.get("numeric_marker"),
            numeric_epsilon=float(raw.get("numeric_epsilon", 0.0)),
            command_template=raw.get("command_template"),
        )


@dataclass(frozen=True)
class ErrorRecord:
    """A failed evaluation triple: query, gold response, prediction."""

    sample_id: str
    x: str
    y: str
    y_hat: str
    split: str


def normalize_exact_match(text: str) -> str:
    """Standard EM normalization: lowercase, strip punctuation and articles."""
    text = text.lower()
    text = "".join(ch for ch in text if ch not in string.punctuation)
    text = _ARTICLES.sub(" ", text)
    return " ".join(text.split())


def _parse_number(token: str) -> Fraction | None:
    try:
        return Fraction(token.replace(",", ""))
    except (ValueError, ZeroDivisionError):
        return None


def extract_answer(prediction: str, task: TaskSpec):
    """Canonical answer for the task, or None when no answer is found.

    multiple_choice: first standalone occurrence of a configured label
    (models often restate other options later, so first wins).
    numeric: number following the last marker, else the last number.
    exact_match: normalized string.
    """
    if task.kind == "multiple_choice":
        pattern = "|".join(re.escape(label) for label in task.choice_labels)
        m = re.search(rf"(?<![A-Za-z0-9])({pattern})(?![A-Za-z0-9])", prediction)
        return m.group(1) if m else None
    if task.kind == "numeric":
        assert task.numeric_marker is not None
        scope = prediction
        if task.numeric_marker in prediction:
            scope = prediction.rsplit(task.numeric_marker, 1)[1]
            m = _NUMBER.search(scope)
            return _parse_number(m.group(0)) if m else None
        numbers = _NUMBER.findall(scope)
        return _parse_number(numbers[-1]) if numbers else None
    if task.kind == "exact_match":
        normalized = normalize_exact_match(prediction)
        return normalized if normalized else None
    raise ValueError(f"extract_answer undefined for task kind {task.kind!r}")


def _run_external_check(prediction: str, gold: str, task: TaskSpec) -> bool:
    """Exit status of the configured command decides failure (non-zero fails)."""
    assert task.command_template is not None
    with tempfile.TemporaryDirectory() as tmp:
        pred_file = Path(tmp) / "prediction.txt"
        gold_file = Path(tmp) / "gold.txt"
        pred_file.write_text(prediction, encoding="utf-8")
        gold_file.write_text(gold, encoding="utf-8")
        argv = [
            token.replace("{pred_file}", str(pred_file)).replace("{gold_file}", str(gold_file))
            for token in task.command_template.split()
        ]
        proc = subprocess.run(argv, capture_output=True)
        return proc.returncode != 0


def is_failure(prediction: str, gold: str, task: TaskSpec) -> bool:
    """Task-specific failure criterion; extraction failure is always a failure."""
    if task.kind == "external_command":
        return _run_external_check(prediction, gold, task)
    pred_answer = extract_answer(prediction, task)
    if pred_answer is None:
        return True
    gold_answer = extract_answer(gold, task)
    if task.kind == "numeric" and task.numeric_epsilon > 0 and gold_answer is not None:
        return abs(float(pred_answer) - float(gold_answer)) > task.numeric_epsilon
    return pred_answer != gold_answer


def predict_all(ds: Dataset, gateway: Gateway, max_output_tokens: int = 1024) -> list[tuple[str, str]]:
    """Predict every sample through the student binding; order matches the dataset.

    A sample whose request fails permanently gets the NO_RESPONSE sentinel
    so it lands in the error set downstream.
    """
    reqs = [
        ChatRequest(
            messages=({"role": "user", "content": s.user_text},),
            purpose="student_eval",
            max_output_tokens=max_output_tokens,
        )
        for s in ds.samples
    ]
    results = gateway.complete_batch(reqs)
    out: list[tuple[str, str]] = []
    for sample, result in zip(ds.samples, results):
        text = NO_RESPONSE if isinstance(result, Exception) else result
        out.append((sample.id, text))
    return out


def collect_errors(ds: Dataset, preds: list[tuple[str, str]], task: TaskSpec) -> list[ErrorRecord]:
    """Exactly the failing triples, in dataset order, tagged with the split."""
    if len(preds) != len(ds.samples):
        raise ValueError(f"got {len(preds)} predictions for {len(ds.samples)} samples")
    errors: list[ErrorRecord] = []
    for sample, (sample_id, y_hat) in zip(ds.samples, preds):
        if sample_id != sample.id:
            raise ValueError(f"prediction order mismatch: {sample_id!r} vs {sample.id!r}")
        if is_failure(y_hat, sample.assistant_text, task):
            errors.append(
                ErrorRecord(
                    sample_id=sample.id,
                    x=sample.user_text,
                    y=sample.assistant_text,
                    y_hat=y_hat,
                    split=sample.split,
                )
            )
    return errors


def accuracy(ds: Dataset, errors: list[ErrorRecord]) -> float:
    if not ds.samples:
        return 1.0
    return 1.0 - len(errors) / len(ds.samples)
