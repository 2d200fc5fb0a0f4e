"""Pattern analysis: per-error root causes, clustering, patterns, strategies.

The flow mirrors the agent design it implements: sample-level analyses
are drafted in batches, embedded, grouped with elbow-selected k-means,
then each cluster is categorized (one call per cluster) and all
categories are turned into generation strategies in a single batched
call.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .clustering import ClusterResult, kmeans, select_k_elbow
from .evaluation import ErrorRecord
from .gateway import ChatRequest, Gateway, MalformedOutput, extract_json
from .prompts import PromptLibrary

REASK_NUDGE = "Your previous response was not valid JSON. Respond again with only the JSON, no other text."


@dataclass(frozen=True)
class ErrorAnalysis:
    sample_idx: int
    error_cause: str
    scenario_category: str
    source_error_id: str

    def embedding_text(self) -> str:
        return f"{self.error_cause}\n{self.scenario_category}"


@dataclass(frozen=True)
class ClusterPattern:
    cluster_index: int
    category_name: str
    error_pattern: str
    representative_samples: tuple[str, ...]


@dataclass(frozen=True)
class StrategyCard:
    category_name: str
    error_pattern: str
    representative_samples: tuple[str, ...]
    strategy_name: str
    generation_approach: str
    key_elements: tuple[str, ...]
    cluster_index: int


def subsample_errors(errors: list[ErrorRecord], n: int, seed: int) -> list[ErrorRecord]:
    """Seeded uniform subsample of validation errors, order preserved."""
    if any(e.split != "val" for e in errors):
        raise ValueError("subsample_errors expects validation-split errors only")
    size = min(n, len(errors))
    indices = sorted(random.Random(seed).sample(range(len(errors)), size))
    return [errors[i] for i in indices]


def _error_block(batch: list[ErrorRecord]) -> str:
    parts = []
    for idx, err in enumerate(batch):
        parts.append(
            f"SAMPLE {idx}:\n"
            f"USER QUERY: {err.x}\n"
            f"MODEL RESPONSE: {err.y_hat}\n"
            f"GROUND TRUTH: {err.y}\n"
            "---"
        )
    return "\n".join(parts)


class PatternAnalyzer:
    def __init__(
        self,
        gateway: Gateway,
        prompts: PromptLibrary,
        batch_size: int = 10,
        max_output_tokens: int = 2048,
    ):
        self.gateway = gateway
        self.prompts = prompts
        self.batch_size = batch_size
        self.max_output_tokens = max_output_tokens
        self.flags: list[str] = []

    def reset_flags(self) -> None:
        self.flags = []

    def _complete_with_reask(self, purpose: str, prompt: str):
        """One call, one re-ask on unparseable output, then give up."""
        req = ChatRequest(
            messages=({"role": "user", "content": prompt},),
            purpose=purpose,
            max_output_tokens=self.max_output_tokens,
        )
        raw = self.gateway.complete(req)
        try:
            return extract_json(raw)
        except MalformedOutput:
            retry = ChatRequest(
                messages=(
                    {"role": "user", "content": prompt},
                    {"role": "assistant", "content": raw},
                    {"role": "user", "content": REASK_NUDGE},
                ),
                purpose=purpose,
                max_output_tokens=self.max_output_tokens,
            )
            return extract_json(self.gateway.complete(retry))

    def _parse_analyses(self, value, batch: list[ErrorRecord]) -> list[ErrorAnalysis]:
        if not isinstance(value, list):
            raise MalformedOutput("analysis output is not a JSON array")
        analyses: list[ErrorAnalysis] = []
        for entry in value:
            if not isinstance(entry, dict):
                self.flags.append("analysis_entry_not_object")
                continue
            idx = entry.get("sample_idx")
            cause = entry.get("error_cause")
            category = entry.get("scenario_category")
            if not isinstance(idx, int) or not (0 <= idx < len(batch)):
                self.flags.append(f"analysis_sample_idx_out_of_range:{idx!r}")
                continue
            if not cause or not category or not isinstance(cause, str) or not isinstance(category, str):
                self.flags.append(f"analysis_missing_fields:idx={idx}")
                continue
            analyses.append(
                ErrorAnalysis(
                    sample_idx=idx,
                    error_cause=cause,
                    scenario_category=category,
                    source_error_id=batch[idx].sample_id,
                )
            )
        return analyses

    def analyze_errors(self, batch: list[ErrorRecord]) -> list[ErrorAnalysis]:
        """Analyze one batch of errors; a doubly-malformed batch is skipped."""
        if len(batch) > self.batch_size:
            raise ValueError(f"batch of {len(batch)} exceeds configured size {self.batch_size}")
        prompt = self.prompts.render("error_analysis", error_samples=_error_block(batch))
        try:
            value = self._complete_with_reask("error_analysis", prompt)
            return self._parse_analyses(value, batch)
        except MalformedOutput:
            self.flags.append("analysis_batch_skipped")
            return []

    def analyze_all(self, errors: list[ErrorRecord]) -> list[ErrorAnalysis]:
        """Chunk errors into batches and analyze each; batch order kept."""
        analyses: list[ErrorAnalysis] = []
        for start in range(0, len(errors), self.batch_size):
            analyses.extend(self.analyze_errors(errors[start : start + self.batch_size]))
        return analyses

    def embed_analyses(self, analyses: list[ErrorAnalysis]) -> list[list[float]]:
        if not analyses:
            raise ValueError("no analyses to embed")
        return self.gateway.embed([a.embedding_text() for a in analyses])

    def cluster_analyses(
        self, analyses: list[ErrorAnalysis], k_min: int, k_max: int, seed: int
    ) -> tuple[int, ClusterResult]:
        vectors = self.embed_analyses(analyses)
        k = select_k_elbow(vectors, k_min, k_max, seed)
        return k, kmeans(vectors, k, seed)

    def categorize_cluster(
        self, cluster_analyses: list[ErrorAnalysis], cluster_index: int
    ) -> ClusterPattern:
        """One gateway invocation per cluster; failures degrade to a placeholder."""
        if not cluster_analyses:
            raise ValueError("cannot categorize an empty cluster")
        lines = [
            f"- [{a.source_error_id}] CAUSE: {a.error_cause} | CATEGORY: {a.scenario_category}"
            for a in cluster_analyses
        ]
        prompt = self.prompts.render("pattern_categorization", analyzed_samples="\n".join(lines))
        try:
            value = self._complete_with_reask("categorization", prompt)
            if (
                not isinstance(value, dict)
                or not value.get("category_name")
                or not value.get("error_pattern")
            ):
                raise MalformedOutput("categorization output missing required fields")
        except MalformedOutput:
            self.flags.append(f"uncategorized_cluster:{cluster_index}")
            placeholder = f"Uncategorized cluster {cluster_index}"
            return ClusterPattern(cluster_index, placeholder, placeholder, ())
        reps = tuple(str(r) for r in value.get("representative_samples") or [])
        return ClusterPattern(
            cluster_index=cluster_index,
            category_name=str(value["category_name"]),
            error_pattern=str(value["error_pattern"]),
            representative_samples=reps,
        )

    def _parse_strategy_cards(self, value, patterns: list[ClusterPattern]) -> dict[str, StrategyCard]:
        if not isinstance(value, list):
            raise MalformedOutput("strategy output is not a JSON array")
        by_category = {p.category_name: p for p in patterns}
        fold = {name.lower(): name for name in by_category}
        cards: dict[str, StrategyCard] = {}
        for entry in value:
            if not isinstance(entry, dict):
                continue
            raw_name = str(entry.get("category_name", ""))
            name = raw_name if raw_name in by_category else fold.get(raw_name.lower(), "")
            approach = entry.get("generation_approach")
            if not name or not approach or not isinstance(approach, str):
                continue
            pattern = by_category[name]
            elements = entry.get("key_elements") or []
            cards[name] = StrategyCard(
                category_name=name,
                error_pattern=pattern.error_pattern,
                representative_samples=pattern.representative_samples,
                strategy_name=str(entry.get("strategy_name") or f"Strategy for {name}"),
                generation_approach=approach,
                key_elements=tuple(str(e) for e in elements),
                cluster_index=pattern.cluster_index,
            )
        return cards

    def draft_strategies(self, patterns: list[ClusterPattern]) -> list[StrategyCard]:
        """One batched invocation for all categories, one retry for gaps.

        A doubly-malformed response aborts the strategy branch: callers
        continue with error-based generation only.
        """
        if not patterns:
            raise ValueError("no patterns to draft strategies for")
        block = "\n".join(
            f"CATEGORY: {p.category_name}\nPATTERN: {p.error_pattern}\n---" for p in patterns
        )
        prompt = self.prompts.render("strategy_drafting", error_categories=block)
        try:
            cards = self._parse_strategy_cards(
                self._complete_with_reask("strategy", prompt), patterns
            )
        except MalformedOutput:
            self.flags.append("strategy_branch_aborted")
            return []
        missing = [p for p in patterns if p.category_name not in cards]
        if missing:
            try:
                retry_cards = self._parse_strategy_cards(
                    self._complete_with_reask("strategy", prompt), patterns
                )
                for name, card in retry_cards.items():
                    cards.setdefault(name, card)
            except MalformedOutput:
                pass
            for p in patterns:
                if p.category_name not in cards:
                    self.flags.append(f"missing_strategy:{p.category_name}")
        return [cards[p.category_name] for p in patterns if p.category_name in cards]
