"""Synthetic data generation: quota planning and the two synthesis branches.

Pattern-guided batches interpolate a drafted strategy plus training seed
examples; error-based batches interpolate the student's own training
mistakes. Both parse the model's JSON output into corpus samples and
enforce the training/validation isolation rule on example references.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .analysis import StrategyCard
from .corpus import Message, Sample
from .evaluation import ErrorRecord
from .gateway import ChatRequest, Gateway, GatewayError, MalformedOutput, extract_json
from .prompts import PromptLibrary


@dataclass(frozen=True)
class QuotaPlan:
    total: int
    pattern_total: int
    error_total: int
    per_strategy: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.total != self.pattern_total + self.error_total:
            raise ValueError("quota must split exactly between branches")
        if sum(self.per_strategy) != self.pattern_total:
            raise ValueError("per-strategy quotas must sum to the pattern total")
        if self.per_strategy and max(self.per_strategy) - min(self.per_strategy) > 1:
            raise ValueError("per-strategy quotas must be spread evenly (max spread 1)")

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "pattern_total": self.pattern_total,
            "error_total": self.error_total,
            "per_strategy": list(self.per_strategy),
        }


def plan_quota(train_size: int, k: int, train_error_count: int, ratio: float) -> QuotaPlan:
    """Total synthetic volume and its even spread across strategies.

    The total is ratio * train_size; when training errors exist it is
    split half/half between the pattern and error branches (ceil to the
    pattern side), and per-strategy remainders go to lower indices.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not 0.0 < ratio <= 1.0:
        raise ValueError("ratio must be in (0, 1]")
    total = round(ratio * train_size)
    if train_error_count > 0:
        pattern_total = math.ceil(total / 2)
        error_total = total - pattern_total
    else:
        pattern_total = total
        error_total = 0
    base, remainder = divmod(pattern_total, k)
    per_strategy = tuple(base + (1 if i < remainder else 0) for i in range(k))
    return QuotaPlan(total=total, pattern_total=pattern_total, error_total=error_total, per_strategy=per_strategy)


@dataclass(frozen=True)
class GenerationBatch:
    branch: str  # pattern | error
    requested: int
    seed_samples: tuple[Sample, ...] = ()
    seed_errors: tuple[ErrorRecord, ...] = ()
    strategy: StrategyCard | None = None
    attempt: int = 1
    feedback: str | None = None

    def __post_init__(self) -> None:
        if self.branch == "pattern":
            if self.strategy is None or not self.seed_samples:
                raise ValueError("pattern batch needs a strategy and training seed samples")
            if any(s.split != "train" for s in self.seed_samples):
                raise ValueError("pattern batch seeds must come from the training split")
        elif self.branch == "error":
            if not self.seed_errors:
                raise ValueError("error batch needs training error records")
            if any(e.split != "train" for e in self.seed_errors):
                raise ValueError("error batch seeds must be training-split errors")
        else:
            raise ValueError(f"unknown branch {self.branch!r}")

    def seed_ids(self) -> list[str]:
        if self.branch == "pattern":
            return [s.id for s in self.seed_samples]
        return [e.sample_id for e in self.seed_errors]


@dataclass
class GenerationStats:
    malformed_outputs: int = 0
    dropped_malformed_samples: int = 0
    dropped_validation_refs: int = 0
    remapped_example_refs: int = 0
    overproduced: int = 0
    underproduced: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


class DataGenerator:
    def __init__(
        self,
        gateway: Gateway,
        prompts: PromptLibrary,
        num_samples_per_example: int = 2,
        max_output_tokens: int = 4096,
        forbidden_example_ids: set[str] | None = None,
    ):
        self.gateway = gateway
        self.prompts = prompts
        self.num_samples_per_example = num_samples_per_example
        self.max_output_tokens = max_output_tokens
        self.forbidden_example_ids = forbidden_example_ids or set()
        self.stats = GenerationStats()

    def reset_stats(self) -> None:
        self.stats = GenerationStats()

    def seeds_needed(self, requested: int) -> int:
        return max(1, math.ceil(requested / self.num_samples_per_example))

    def generate(self, batch: GenerationBatch) -> list[Sample]:
        if batch.branch == "pattern":
            return self.generate_pattern_guided(batch)
        return self.generate_error_based(batch)

    def _complete(self, prompt: str) -> str:
        req = ChatRequest(
            messages=({"role": "user", "content": prompt},),
            purpose="generation",
            max_output_tokens=self.max_output_tokens,
        )
        return self.gateway.complete(req)

    def _parse_samples(self, raw: str, batch: GenerationBatch) -> list[Sample]:
        value = extract_json(raw)
        if not isinstance(value, list):
            raise MalformedOutput("generation output is not a JSON array")
        seed_ids = batch.seed_ids()
        samples: list[Sample] = []
        seen_ids: set[str] = set()
        for pos, entry in enumerate(value):
            if not isinstance(entry, dict):
                self.stats.dropped_malformed_samples += 1
                continue
            messages = entry.get("messages")
            if (
                not isinstance(messages, list)
                or len(messages) != 2
                or messages[0].get("role") != "user"
                or messages[1].get("role") != "assistant"
                or not isinstance(messages[0].get("content"), str)
                or not isinstance(messages[1].get("content"), str)
            ):
                self.stats.dropped_malformed_samples += 1
                continue

            raw_ref = entry.get("based_on_example")
            if raw_ref is not None and raw_ref not in seed_ids:
                if raw_ref in self.forbidden_example_ids:
                    self.stats.dropped_validation_refs += 1
                    continue
                self.stats.remapped_example_refs += 1
                raw_ref = None
            based_on = raw_ref if raw_ref is not None else seed_ids[len(samples) % len(seed_ids)]

            sample_id = str(entry.get("sample_id") or f"syn_auto_{pos}")
            while sample_id in seen_ids:
                sample_id = f"{sample_id}_x"
            seen_ids.add(sample_id)

            samples.append(
                Sample(
                    id=sample_id,
                    messages=(
                        Message("user", messages[0]["content"]),
                        Message("assistant", messages[1]["content"]),
                    ),
                    origin="synthetic",
                    split="train",
                    based_on_strategy=batch.strategy.strategy_name if batch.strategy else None,
                    based_on_example=based_on,
                )
            )
        if len(samples) > batch.requested:
            self.stats.overproduced += len(samples) - batch.requested
            samples = samples[: batch.requested]
        elif len(samples) < batch.requested:
            self.stats.underproduced += batch.requested - len(samples)
        return samples

    def generate_pattern_guided(self, batch: GenerationBatch) -> list[Sample]:
        """Strategy plus training seed examples in, parsed one-turn samples out."""
        assert batch.branch == "pattern" and batch.strategy is not None
        card = batch.strategy
        strategy_block = (
            f"STRATEGY NAME: {card.strategy_name}\n"
            f"TARGETED ERROR PATTERN: {card.error_pattern}\n"
            f"GENERATION APPROACH: {card.generation_approach}\n"
            "KEY ELEMENTS:\n" + "\n".join(f"- {e}" for e in card.key_elements)
        )
        examples_block = "\n".join(
            f"EXAMPLE (sample_id={s.id}):\nuser: {s.user_text}\nassistant: {s.assistant_text}\n---"
            for s in batch.seed_samples
        )
        prompt = self.prompts.render(
            "generation_pattern",
            strategy=strategy_block,
            examples=examples_block,
            feedback=batch.feedback or "None.",
            num_samples_per_example=str(self.num_samples_per_example),
            strategy_name=card.strategy_name,
        )
        try:
            return self._parse_samples(self._complete(prompt), batch)
        except (MalformedOutput, GatewayError):
            self.stats.malformed_outputs += 1
            return []

    def generate_error_based(self, batch: GenerationBatch) -> list[Sample]:
        """Training-error seeds in, corrected one-turn samples out."""
        assert batch.branch == "error"
        examples_block = "\n".join(
            f"EXAMPLE {i}:\nQUESTION/TASK:\n{e.x}\nSTUDENT'S WRONG ANSWER:\n{e.y_hat}\n---"
            for i, e in enumerate(batch.seed_errors, start=1)
        )
        prompt = self.prompts.render(
            "generation_error",
            error_examples=examples_block,
            feedback=batch.feedback or "None.",
            total_samples=str(batch.requested),
        )
        try:
            return self._parse_samples(self._complete(prompt), batch)
        except (MalformedOutput, GatewayError):
            self.stats.malformed_outputs += 1
            return []
