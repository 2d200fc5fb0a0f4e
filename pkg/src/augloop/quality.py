"""Quality control: judge synthetic batches and drive bounded regeneration.

A batch is accepted exactly when the mean of its per-sample ratings
reaches the threshold. Rejected batches are regenerated with the judge's
feedback injected into the next attempt; after the attempt budget is
exhausted the batch is dropped (quality first) unless the run is
configured to accept the final attempt.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

from .analysis import StrategyCard
from .corpus import Message, Sample
from .gateway import ChatRequest, Gateway, MalformedOutput, extract_json
from .generation import GenerationBatch
from .prompts import PromptLibrary

UNPARSEABLE_FEEDBACK = "judge output unparseable"


@dataclass(frozen=True)
class SampleRating:
    sample_id: str
    quality_rating: int
    feedback: str


@dataclass(frozen=True)
class QualityVerdict:
    per_sample: tuple[SampleRating, ...]
    batch_score: float
    accepted: bool
    attempt: int
    feedback: str
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "attempt": self.attempt,
            "batch_score": self.batch_score,
            "accepted": self.accepted,
            "ratings": [
                {"sample_id": r.sample_id, "quality_rating": r.quality_rating, "feedback": r.feedback}
                for r in self.per_sample
            ],
            "flags": list(self.flags),
        }


def _original_for(sample: Sample, batch: GenerationBatch) -> Sample:
    """The seed counterpart of a synthetic sample, for side-by-side review."""
    if batch.branch == "pattern":
        by_id = {s.id: s for s in batch.seed_samples}
        return by_id[sample.based_on_example]
    by_id_err = {e.sample_id: e for e in batch.seed_errors}
    record = by_id_err[sample.based_on_example]
    return Sample(
        id=record.sample_id,
        messages=(Message("user", record.x), Message("assistant", record.y)),
        origin="original",
        split="train",
    )


def pair_with_originals(samples: list[Sample], batch: GenerationBatch) -> list[tuple[Sample, Sample]]:
    return [(_original_for(s, batch), s) for s in samples]


class QualityController:
    def __init__(
        self,
        gateway: Gateway,
        prompts: PromptLibrary,
        threshold: float = 7.0,
        max_attempts: int = 3,
        accept_last_attempt: bool = False,
        max_output_tokens: int = 2048,
    ):
        if max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        self.gateway = gateway
        self.prompts = prompts
        self.threshold = threshold
        self.max_attempts = max_attempts
        self.accept_last_attempt = accept_last_attempt
        self.max_output_tokens = max_output_tokens

    def _rejected(self, attempt: int, reason: str) -> QualityVerdict:
        return QualityVerdict(
            per_sample=(),
            batch_score=0.0,
            accepted=False,
            attempt=attempt,
            feedback=reason,
            flags=(reason,),
        )

    def review_batch(
        self,
        pairs: list[tuple[Sample, Sample]],
        strategies: list[StrategyCard],
        attempt: int = 1,
    ) -> QualityVerdict:
        """One judge invocation over original/synthetic pairs.

        Error-branch batches pass an empty strategies list: the adherence
        dimension only applies to pattern-guided generation.
        """
        if not pairs:
            return self._rejected(attempt, "empty batch")
        strategies_block = (
            "\n".join(
                f"STRATEGY ({c.category_name}): {c.strategy_name} -> {c.generation_approach}"
                for c in strategies
            )
            or "None."
        )
        pair_parts = []
        for i, (original, synthetic) in enumerate(pairs):
            pair_parts.append(
                f"PAIR {i}:\n"
                f"ORIGINAL sample_id={original.id}\n"
                f"user: {original.user_text}\n"
                f"assistant: {original.assistant_text}\n"
                f"SYNTHETIC sample_id={synthetic.id}\n"
                f"user: {synthetic.user_text}\n"
                f"assistant: {synthetic.assistant_text}\n"
                "---"
            )
        prompt = self.prompts.render(
            "quality_control",
            strategies=strategies_block,
            pairs="\n".join(pair_parts),
        )
        req = ChatRequest(
            messages=({"role": "user", "content": prompt},),
            purpose="quality_control",
            max_output_tokens=self.max_output_tokens,
        )
        try:
            value = extract_json(self.gateway.complete(req))
        except MalformedOutput:
            return self._rejected(attempt, UNPARSEABLE_FEEDBACK)
        if not isinstance(value, list):
            return self._rejected(attempt, UNPARSEABLE_FEEDBACK)

        flags: list[str] = []
        ratings: list[SampleRating] = []
        for entry in value:
            if not isinstance(entry, dict) or entry.get("type") != "synthetic":
                continue
            raw_rating = entry.get("quality_rating")
            if not isinstance(raw_rating, (int, float)):
                flags.append(f"rating_missing:{entry.get('sample_id')}")
                continue
            rating = int(raw_rating)
            if not 1 <= rating <= 10:
                flags.append(f"rating_clamped:{entry.get('sample_id')}:{rating}")
                rating = min(10, max(1, rating))
            ratings.append(
                SampleRating(
                    sample_id=str(entry.get("sample_id", "")),
                    quality_rating=rating,
                    feedback=str(entry.get("feedback", "")),
                )
            )
        if not ratings:
            return self._rejected(attempt, UNPARSEABLE_FEEDBACK)
        score = sum(r.quality_rating for r in ratings) / len(ratings)
        feedback = "\n".join(f"{r.sample_id}: {r.feedback}" for r in ratings if r.feedback)
        return QualityVerdict(
            per_sample=tuple(ratings),
            batch_score=score,
            accepted=score >= self.threshold,
            attempt=attempt,
            feedback=feedback,
            flags=tuple(flags),
        )

    def qc_gate(
        self,
        producer: Callable[[GenerationBatch], list[Sample]],
        batch: GenerationBatch,
    ) -> tuple[list[Sample], list[QualityVerdict]]:
        """Generate, review, and regenerate with feedback until accepted or spent.

        Returns the accepted samples (empty when the batch was dropped)
        and the full attempt history.
        """
        strategies = [batch.strategy] if batch.strategy is not None else []
        history: list[QualityVerdict] = []
        samples: list[Sample] = []
        for attempt in range(1, self.max_attempts + 1):
            current = replace(batch, attempt=attempt)
            samples = producer(current)
            if not samples:
                verdict = self._rejected(attempt, "generation produced no samples")
            else:
                verdict = self.review_batch(pair_with_originals(samples, current), strategies, attempt)
            history.append(verdict)
            if verdict.accepted:
                return samples, history
            next_feedback = verdict.feedback or (
                f"Batch rejected with score {verdict.batch_score:.1f}; improve sample quality."
            )
            batch = replace(batch, feedback=next_feedback)
        if self.accept_last_attempt and samples:
            return samples, history
        return [], history
