"""Central orchestrator: owns pipeline state, runs the augmentation loop.

Each iteration walks the fixed stage order: evaluate the student on
train and validation, analyze and cluster validation failures, draft
strategies, plan quotas, generate both synthetic branches under the
quality gate, merge accepted data into the training set, and hand the
merged file to the fine-tune hook. Reports and checkpoints are plain
JSON and byte-stable for a fixed seed under deterministic providers.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
import shlex
import subprocess
import sys
from dataclasses import dataclass, replace
from pathlib import Path

from .analysis import ClusterPattern, PatternAnalyzer, StrategyCard, subsample_errors
from .corpus import (
    Dataset,
    Sample,
    ValidationLeak,
    load_dataset,
    merge_augmented,
    subsample,
    write_dataset,
)
from .evaluation import ErrorRecord, TaskSpec, accuracy, collect_errors, predict_all
from .gateway import (
    Gateway,
    HashEmbedder,
    HttpChatProvider,
    HttpEmbedder,
    ProviderBinding,
    ReplayProvider,
    RetryPolicy,
)
from .generation import DataGenerator, GenerationBatch, QuotaPlan, plan_quota
from .prompts import PromptLibrary
from .quality import QualityController
from .simulate import DryRunProvider

DESCRIPTOR_FILENAME = "descriptor.json"

REPORT_SCHEMA = "augloop-report-v1"

AGENT_PURPOSES = ("error_analysis", "categorization", "strategy", "generation", "quality_control")


class ConfigError(Exception):
    """Bad or inconsistent run configuration."""


@dataclass(frozen=True)
class PipelineState:
    """Snapshot of the latest completed iteration, owned by the orchestrator.

    The merged train file of iteration i is the fine-tune input that
    produced the student bound for iteration i+1.
    """

    iteration: int
    train_file: str
    val_file: str
    model_endpoint: ProviderBinding
    error_counts: dict
    k: int
    strategies: tuple
    quota: "QuotaPlan"
    qc_stats: dict
    synthetic_file: str
    merged_train_file: str


class HookFailed(Exception):
    def __init__(self, code: int, stderr_tail: str):
        self.code = code
        self.stderr_tail = stderr_tail
        super().__init__(f"fine-tune hook exited {code}: {stderr_tail}")


class HookProtocolError(Exception):
    """Hook exited 0 but did not produce a loadable endpoint descriptor."""


def derive_seed(master: int, *parts: object) -> int:
    text = f"{master}|" + "|".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:4], "big")


_CONFIG_DEFAULTS = {
    "seed": 0,
    "max_iterations": 1,
    "subsample_n": 50,
    "k_min": 2,
    "k_max": 10,
    "ratio": 0.5,
    "threshold": 7.0,
    "max_attempts": 3,
    "batch_size": 10,
    "num_samples_per_example": 2,
    "accept_last_attempt": False,
    "distinct_judge": False,
    "seed_pool": "merged",
    "train_error_subsample": 50,
    "max_output_tokens": 1024,
    "assets_dir": None,
    "hook_command": None,
    "providers": None,
    "embedding": None,
    "replay_dir": None,
    "replay_mode": "off",
    "dry_run": False,
}


@dataclass
class RunConfig:
    train_file: str
    val_file: str
    task: TaskSpec
    run_dir: str
    seed: int = 0
    max_iterations: int = 1
    subsample_n: int = 50
    k_min: int = 2
    k_max: int = 10
    ratio: float = 0.5
    threshold: float = 7.0
    max_attempts: int = 3
    batch_size: int = 10
    num_samples_per_example: int = 2
    accept_last_attempt: bool = False
    distinct_judge: bool = False
    seed_pool: str = "merged"  # merged | original
    train_error_subsample: int = 50
    max_output_tokens: int = 1024
    assets_dir: str | None = None
    hook_command: str | None = None
    providers: dict | None = None
    embedding: dict | None = None
    replay_dir: str | None = None
    replay_mode: str = "off"  # off | record | strict
    dry_run: bool = False

    def __post_init__(self) -> None:
        if self.seed_pool not in ("merged", "original"):
            raise ConfigError(f"seed_pool must be merged or original, got {self.seed_pool!r}")
        if self.replay_mode not in ("off", "record", "strict"):
            raise ConfigError(f"bad replay_mode {self.replay_mode!r}")
        if self.k_min < 2 or self.k_max < self.k_min:
            raise ConfigError(f"bad cluster range [{self.k_min}, {self.k_max}]")
        if not 0.0 < self.ratio <= 1.0:
            raise ConfigError("ratio must be in (0, 1]")
        if self.max_attempts < 1 or self.max_iterations < 0 or self.batch_size < 1:
            raise ConfigError("max_attempts/batch_size must be >= 1 and max_iterations >= 0")

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "RunConfig":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls.from_dict(raw, **overrides)

    @classmethod
    def from_dict(cls, raw: dict, **overrides) -> "RunConfig":
        raw = dict(raw)
        raw.update({k: v for k, v in overrides.items() if v is not None})
        required = ("train_file", "val_file", "task", "run_dir")
        for key in required:
            if key not in raw:
                raise ConfigError(f"config missing required key {key!r}")
        known = set(required) | set(_CONFIG_DEFAULTS)
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        task = TaskSpec.from_dict(raw.pop("task"))
        kwargs = {k: raw.get(k, v) for k, v in _CONFIG_DEFAULTS.items()}
        return cls(
            train_file=raw["train_file"],
            val_file=raw["val_file"],
            task=task,
            run_dir=raw["run_dir"],
            **kwargs,
        )

    def summary(self) -> dict:
        return {
            "seed": self.seed,
            "max_iterations": self.max_iterations,
            "task_kind": self.task.kind,
            "subsample_n": self.subsample_n,
            "k_range": [self.k_min, self.k_max],
            "ratio": self.ratio,
            "threshold": self.threshold,
            "max_attempts": self.max_attempts,
            "batch_size": self.batch_size,
            "num_samples_per_example": self.num_samples_per_example,
            "seed_pool": self.seed_pool,
            "dry_run": self.dry_run,
        }


def _parse_binding(raw: dict, fallback_model: str) -> ProviderBinding:
    retry_raw = raw.get("retry") or {}
    return ProviderBinding(
        endpoint=raw.get("endpoint", ""),
        model_id=raw.get("model_id", fallback_model),
        api_key_env=raw.get("api_key_env"),
        max_concurrency=int(raw.get("max_concurrency", 4)),
        retry=RetryPolicy(
            max_attempts=int(retry_raw.get("max_attempts", 3)),
            backoff=tuple(retry_raw.get("backoff", (0.5, 2.0, 8.0))),
        ),
    )


def resolve_bindings(cfg: RunConfig) -> dict[str, ProviderBinding]:
    """Per-purpose bindings; in dry runs absent providers get synthetic ones."""
    providers = cfg.providers or {}
    bindings: dict[str, ProviderBinding] = {}
    default_raw = providers.get("default")
    for purpose in AGENT_PURPOSES + ("student_eval",):
        raw = providers.get(purpose, default_raw)
        if raw is not None:
            bindings[purpose] = _parse_binding(raw, fallback_model=f"{purpose}-model")
        elif cfg.dry_run:
            model = "dryrun-judge" if purpose == "quality_control" else "dryrun-agent"
            bindings[purpose] = ProviderBinding(endpoint="dryrun://", model_id=model)
        else:
            raise ConfigError(f"no provider configured for purpose {purpose!r}")
    if cfg.distinct_judge:
        judge = bindings["quality_control"].model_id
        for purpose in ("error_analysis", "categorization", "strategy", "generation"):
            if bindings[purpose].model_id == judge:
                raise ConfigError(
                    f"distinct_judge is set but {purpose} and quality_control share model {judge!r}"
                )
    return bindings


def scan_text_for_validation(text: str, val_ds: Dataset) -> list[str]:
    """Validation ids (word-bounded) or contents occurring in text."""
    hits = []
    for s in val_ds.samples:
        if re.search(rf"\b{re.escape(s.id)}\b", text):
            hits.append(f"id:{s.id}")
        if s.user_text and s.user_text in text:
            hits.append(f"content:{s.id}")
    return hits


def assert_no_validation_leak(paths: list[str | Path], val_ds: Dataset) -> None:
    """Scan emitted training files for validation ids or contents."""
    for path in paths:
        text = Path(path).read_text(encoding="utf-8")
        hits = scan_text_for_validation(text, val_ds)
        if hits:
            raise ValidationLeak(f"{path}: {hits[:5]}")


class Orchestrator:
    """Single writer of pipeline state, files, and the run report."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.run_dir = Path(cfg.run_dir)
        (self.run_dir / "data").mkdir(parents=True, exist_ok=True)
        (self.run_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
        (self.run_dir / "hook").mkdir(parents=True, exist_ok=True)

        self.train_ds = load_dataset(cfg.train_file, "train")
        self.val_ds = load_dataset(cfg.val_file, "val")
        self.running_train = self.train_ds
        self.prompts = PromptLibrary(cfg.assets_dir)
        self.bindings = resolve_bindings(cfg)
        self.gateway = self._build_gateway()
        self.analyzer = PatternAnalyzer(
            self.gateway, self.prompts, batch_size=cfg.batch_size, max_output_tokens=cfg.max_output_tokens
        )
        self.generator = DataGenerator(
            self.gateway,
            self.prompts,
            num_samples_per_example=cfg.num_samples_per_example,
            max_output_tokens=cfg.max_output_tokens * 4,
            forbidden_example_ids=self.val_ds.ids(),
        )
        self.qc = QualityController(
            self.gateway,
            self.prompts,
            threshold=cfg.threshold,
            max_attempts=cfg.max_attempts,
            accept_last_attempt=cfg.accept_last_attempt,
            max_output_tokens=cfg.max_output_tokens * 2,
        )
        self.hook_invocations = 0
        self.iteration_records: list[dict] = []
        self.state: PipelineState | None = None

    # gateway wiring -----------------------------------------------------

    def _chat_provider(self, binding: ProviderBinding):
        if self.cfg.dry_run:
            provider = DryRunProvider(self.cfg.seed, self.cfg.task)
        else:
            provider = HttpChatProvider(binding)
        if self.cfg.replay_dir:
            inner = None if self.cfg.replay_mode == "strict" else provider
            provider = ReplayProvider(self.cfg.replay_dir, inner=inner)
        return provider

    def _build_gateway(self) -> Gateway:
        routes = {
            purpose: (binding, self._chat_provider(binding))
            for purpose, binding in self.bindings.items()
        }
        embedding = self.cfg.embedding or {}
        if self.cfg.dry_run or embedding.get("kind", "hash") == "hash":
            embedder = HashEmbedder(dim=int(embedding.get("dim", 8)), seed=self.cfg.seed)
        else:
            embedder = HttpEmbedder(_parse_binding(embedding, fallback_model="embedding-model"))
        return Gateway(routes, embedder=embedder, record_requests=True)

    def _rebind_student(self, binding: ProviderBinding) -> None:
        self.bindings["student_eval"] = binding
        self.gateway.bind("student_eval", binding, self._chat_provider(binding))

    # hook ----------------------------------------------------------------

    def _hook_argv(self, train_file: str, iteration: int, output_dir: str) -> list[str]:
        command = self.cfg.hook_command
        if command is None:
            if not self.cfg.dry_run:
                raise ConfigError("hook_command is required outside dry runs")
            command = f"{sys.executable} -m augloop.stub_hook {{train_file}} {{iteration}} {{output_dir}}"
        tokens = shlex.split(command)
        return [
            t.replace("{train_file}", str(train_file))
            .replace("{iteration}", str(iteration))
            .replace("{output_dir}", str(output_dir))
            for t in tokens
        ]

    def invoke_finetune_hook(self, train_file: str | Path, iteration: int) -> ProviderBinding:
        """Run the external fine-tune command and load the new student binding."""
        output_dir = self.run_dir / "hook" / f"iter_{iteration:03d}"
        output_dir.mkdir(parents=True, exist_ok=True)
        argv = self._hook_argv(str(train_file), iteration, str(output_dir))
        proc = subprocess.run(argv, capture_output=True, text=True)
        self.hook_invocations += 1
        if proc.returncode != 0:
            raise HookFailed(proc.returncode, proc.stderr[-500:])
        descriptor_path = output_dir / DESCRIPTOR_FILENAME
        if not descriptor_path.exists():
            raise HookProtocolError(f"hook wrote no {DESCRIPTOR_FILENAME} in {output_dir}")
        try:
            descriptor = json.loads(descriptor_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise HookProtocolError(f"descriptor is not valid JSON: {exc}") from exc
        endpoint = descriptor.get("endpoint")
        model_id = descriptor.get("model_id")
        if not isinstance(endpoint, str) or not isinstance(model_id, str):
            raise HookProtocolError(f"descriptor missing endpoint/model_id: {descriptor}")
        previous = self.bindings["student_eval"]
        return replace(previous, endpoint=endpoint, model_id=model_id)

    # stages ----------------------------------------------------------------

    def _rel(self, path: Path) -> str:
        """Run-dir-relative path for reports, keeping them location-independent."""
        try:
            return str(path.relative_to(self.run_dir))
        except ValueError:
            return str(path)

    def _abs(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.run_dir / p

    def _stage(self, log: list[dict], name: str, skipped: bool = False) -> None:
        entry = {"seq": len(log), "stage": name}
        if skipped:
            entry["skipped"] = True
        log.append(entry)

    def stage_eval(self, log: list[dict]) -> tuple[list[ErrorRecord], list[ErrorRecord]]:
        self._stage(log, "evaluate_train")
        train_preds = predict_all(self.running_train, self.gateway, self.cfg.max_output_tokens)
        errors_train = collect_errors(self.running_train, train_preds, self.cfg.task)
        self._stage(log, "evaluate_val")
        val_preds = predict_all(self.val_ds, self.gateway, self.cfg.max_output_tokens)
        errors_val = collect_errors(self.val_ds, val_preds, self.cfg.task)
        return errors_train, errors_val

    def stage_analysis(
        self, iteration: int, errors_val: list[ErrorRecord], log: list[dict]
    ) -> tuple[int, list[ClusterPattern], list[StrategyCard]]:
        if not errors_val:
            for name in ("subsample_val_errors", "analyze_errors", "cluster", "categorize", "draft_strategies"):
                self._stage(log, name, skipped=True)
            return 0, [], []
        self._stage(log, "subsample_val_errors")
        picked = subsample_errors(errors_val, self.cfg.subsample_n, derive_seed(self.cfg.seed, "valerr", iteration))
        self._stage(log, "analyze_errors")
        analyses = self.analyzer.analyze_all(picked)
        if len(analyses) < 2:
            self.analyzer.flags.append("too_few_analyses_for_clustering")
            for name in ("cluster", "categorize", "draft_strategies"):
                self._stage(log, name, skipped=True)
            return 0, [], []
        self._stage(log, "cluster")
        k, result = self.analyzer.cluster_analyses(
            analyses, self.cfg.k_min, self.cfg.k_max, derive_seed(self.cfg.seed, "cluster", iteration)
        )
        self._stage(log, "categorize")
        patterns: list[ClusterPattern] = []
        for cluster_index in range(result.k):
            members = [analyses[i] for i in result.members(cluster_index)]
            if members:
                patterns.append(self.analyzer.categorize_cluster(members, cluster_index))
        self._stage(log, "draft_strategies")
        strategies = self.analyzer.draft_strategies(patterns) if patterns else []
        return k, patterns, strategies

    def _seed_pool(self) -> Dataset:
        return self.running_train if self.cfg.seed_pool == "merged" else self.train_ds

    def _chunks(self, total: int) -> list[int]:
        if total <= 0:
            return []
        full, rest = divmod(total, self.cfg.batch_size)
        return [self.cfg.batch_size] * full + ([rest] if rest else [])

    def stage_generate(
        self,
        iteration: int,
        strategies: list[StrategyCard],
        errors_train: list[ErrorRecord],
        quota: QuotaPlan,
        log: list[dict],
    ) -> tuple[list[Sample], dict]:
        self.generator.reset_stats()
        accepted: list[Sample] = []
        qc_stats = {"accepted_batches": 0, "dropped_batches": 0, "total_attempts": 0}
        dropped_records: list[dict] = []
        verdict_log: list[dict] = []

        def gate(batch: GenerationBatch, label: str) -> None:
            samples, history = self.qc.qc_gate(self.generator.generate, batch)
            qc_stats["total_attempts"] += len(history)
            verdict_log.append(
                {"batch": label, "attempts": [v.to_dict() for v in history], "accepted": bool(samples)}
            )
            if samples:
                qc_stats["accepted_batches"] += 1
                accepted.extend(samples)
            else:
                qc_stats["dropped_batches"] += 1
                dropped_records.append(
                    {
                        "batch": label,
                        "branch": batch.branch,
                        "strategy": batch.strategy.strategy_name if batch.strategy else None,
                        "scores": [v.batch_score for v in history],
                        "attempts": len(history),
                    }
                )

        self._stage(log, "generate_pattern", skipped=not strategies)
        if strategies:
            pool = self._seed_pool()
            for k_index, card in enumerate(strategies):
                target = quota.per_strategy[k_index] if k_index < len(quota.per_strategy) else 0
                for chunk_index, requested in enumerate(self._chunks(target)):
                    seeds = subsample(
                        pool,
                        self.generator.seeds_needed(requested),
                        derive_seed(self.cfg.seed, "patseeds", iteration, k_index, chunk_index),
                    )
                    batch = GenerationBatch(
                        branch="pattern",
                        requested=requested,
                        seed_samples=seeds.samples,
                        strategy=card,
                    )
                    gate(batch, f"pattern/{card.category_name}/{chunk_index}")

        self._stage(log, "generate_error", skipped=quota.error_total <= 0)
        if quota.error_total > 0 and errors_train:
            pool_errors = self._train_error_pool(iteration, errors_train)
            cursor = 0
            for chunk_index, requested in enumerate(self._chunks(quota.error_total)):
                n_seeds = min(len(pool_errors), self.generator.seeds_needed(requested))
                seeds = tuple(pool_errors[(cursor + j) % len(pool_errors)] for j in range(n_seeds))
                cursor += n_seeds
                batch = GenerationBatch(branch="error", requested=requested, seed_errors=seeds)
                gate(batch, f"error/{chunk_index}")

        artifacts = {
            "qc_stats": qc_stats,
            "dropped_batches": dropped_records,
            "verdicts": verdict_log,
            "generation_stats": self.generator.stats.to_dict(),
        }
        return accepted, artifacts

    def _train_error_pool(self, iteration: int, errors_train: list[ErrorRecord]) -> list[ErrorRecord]:
        n = min(self.cfg.train_error_subsample, len(errors_train))
        rng = random.Random(derive_seed(self.cfg.seed, "trainerr", iteration))
        indices = sorted(rng.sample(range(len(errors_train)), n))
        return [errors_train[i] for i in indices]

    def _unique_ids(self, samples: list[Sample], iteration: int) -> list[Sample]:
        used = set(self.running_train.ids()) | self.val_ds.ids()
        out: list[Sample] = []
        for n, sample in enumerate(samples):
            sid = sample.id
            if sid in used:
                sid = f"{sample.id}_i{iteration}_{n}"
            used.add(sid)
            out.append(replace(sample, id=sid) if sid != sample.id else sample)
        return out

    # iteration ---------------------------------------------------------

    def run_iteration(self, iteration: int) -> dict:
        log: list[dict] = []
        counts_before = self.gateway.snapshot_counts()
        self.analyzer.reset_flags()
        student_before = self.bindings["student_eval"].model_id
        evaluated_train = self.running_train

        errors_train, errors_val = self.stage_eval(log)
        k, patterns, strategies = self.stage_analysis(iteration, errors_val, log)

        self._stage(log, "plan_quota")
        quota = self._plan_iteration_quota(len(strategies), len(errors_train))

        accepted, artifacts = self.stage_generate(iteration, strategies, errors_train, quota, log)
        accepted = self._unique_ids(accepted, iteration)

        self._stage(log, "merge_write")
        syn_ds = Dataset(samples=tuple(accepted), split="synthetic")
        syn_file = self.run_dir / "data" / f"syn_iter_{iteration:03d}.jsonl"
        write_dataset(syn_ds, syn_file)
        merged = merge_augmented(self.running_train, syn_ds)
        merged_file = self.run_dir / "data" / f"merged_train_iter_{iteration:03d}.jsonl"
        write_dataset(merged, merged_file)
        assert_no_validation_leak([syn_file, merged_file], self.val_ds)

        self._stage(log, "finetune_hook")
        binding = self.invoke_finetune_hook(merged_file, iteration)
        self._rebind_student(binding)
        self.running_train = merged

        counts_after = self.gateway.snapshot_counts()
        call_counts = {
            purpose: counts_after.get(purpose, 0) - counts_before.get(purpose, 0)
            for purpose in sorted(set(counts_before) | set(counts_after))
        }
        record = {
            "iteration": iteration,
            "student_model_before": student_before,
            "student_model_after": binding.model_id,
            "error_counts": {"train": len(errors_train), "val": len(errors_val)},
            "accuracy": {
                "train": round(accuracy(evaluated_train, errors_train), 6),
                "val": round(accuracy(self.val_ds, errors_val), 6),
            },
            "k": k,
            "pattern_names": [p.category_name for p in patterns],
            "strategy_names": [s.strategy_name for s in strategies],
            "quota": quota.to_dict(),
            "qc_stats": artifacts["qc_stats"],
            "dropped_batches": artifacts["dropped_batches"],
            "generation_stats": artifacts["generation_stats"],
            "accepted_synthetic": len(accepted),
            "synthetic_file": self._rel(syn_file),
            "merged_train_file": self._rel(merged_file),
            "call_counts": call_counts,
            "flags": list(self.analyzer.flags),
            "stage_log": log,
        }
        if self.state is not None and iteration <= self.state.iteration:
            raise RuntimeError(f"iteration must increase: {iteration} after {self.state.iteration}")
        self.state = PipelineState(
            iteration=iteration,
            train_file=self.cfg.train_file,
            val_file=self.cfg.val_file,
            model_endpoint=binding,
            error_counts=record["error_counts"],
            k=k,
            strategies=tuple(strategies),
            quota=quota,
            qc_stats=artifacts["qc_stats"],
            synthetic_file=str(syn_file),
            merged_train_file=str(merged_file),
        )
        self.iteration_records.append(record)
        self._write_checkpoint(iteration, record, errors_train, errors_val, patterns, strategies, artifacts)
        return record

    def _plan_iteration_quota(self, n_strategies: int, train_error_count: int) -> QuotaPlan:
        total = round(self.cfg.ratio * len(self.train_ds))
        if n_strategies == 0:
            error_total = total if train_error_count > 0 else 0
            return QuotaPlan(total=error_total, pattern_total=0, error_total=error_total, per_strategy=())
        return plan_quota(len(self.train_ds), n_strategies, train_error_count, self.cfg.ratio)

    def _write_checkpoint(
        self,
        iteration: int,
        record: dict,
        errors_train: list[ErrorRecord],
        errors_val: list[ErrorRecord],
        patterns: list[ClusterPattern],
        strategies: list[StrategyCard],
        artifacts: dict,
    ) -> None:
        checkpoint = {
            "record": record,
            "errors_train": [e.__dict__ for e in errors_train],
            "errors_val": [e.__dict__ for e in errors_val],
            "patterns": [
                {
                    "cluster_index": p.cluster_index,
                    "category_name": p.category_name,
                    "error_pattern": p.error_pattern,
                    "representative_samples": list(p.representative_samples),
                }
                for p in patterns
            ],
            "strategies": [
                {
                    "category_name": s.category_name,
                    "error_pattern": s.error_pattern,
                    "representative_samples": list(s.representative_samples),
                    "strategy_name": s.strategy_name,
                    "generation_approach": s.generation_approach,
                    "key_elements": list(s.key_elements),
                    "cluster_index": s.cluster_index,
                }
                for s in strategies
            ],
            "verdicts": artifacts["verdicts"],
            "student": {
                "endpoint": self.bindings["student_eval"].endpoint,
                "model_id": self.bindings["student_eval"].model_id,
            },
        }
        path = self.run_dir / "checkpoints" / f"iter_{iteration:03d}.json"
        path.write_text(json.dumps(checkpoint, indent=2, ensure_ascii=False), encoding="utf-8")

    # pipeline ------------------------------------------------------------

    def run_pipeline(self) -> dict:
        """Initial fine-tune, then the configured number of iterations."""
        initial = self.invoke_finetune_hook(self.cfg.train_file, 0)
        self._rebind_student(initial)
        for iteration in range(1, self.cfg.max_iterations + 1):
            self.run_iteration(iteration)
        return self.emit_report()

    def emit_report(self) -> dict:
        totals = self.gateway.snapshot_counts()
        report = {
            "schema": REPORT_SCHEMA,
            "config": self.cfg.summary(),
            "dataset_sizes": {"train": len(self.train_ds), "val": len(self.val_ds)},
            "hook_invocations": self.hook_invocations,
            "iterations": self.iteration_records,
            "call_counts_total": {p: totals.get(p, 0) for p in sorted(totals)},
            "final_train_size": len(self.running_train),
        }
        path = self.run_dir / "report.json"
        path.write_text(json.dumps(report, indent=2, ensure_ascii=False), encoding="utf-8")
        return report

    # stage-wise execution on checkpointed state --------------------------

    def _checkpoint_path(self, iteration: int) -> Path:
        return self.run_dir / "checkpoints" / f"iter_{iteration:03d}.json"

    def _load_checkpoint(self, iteration: int) -> dict:
        path = self._checkpoint_path(iteration)
        if not path.exists():
            raise FileNotFoundError(f"no checkpoint for iteration {iteration} at {path}")
        return json.loads(path.read_text(encoding="utf-8"))

    def _save_checkpoint(self, iteration: int, data: dict) -> None:
        self._checkpoint_path(iteration).write_text(
            json.dumps(data, indent=2, ensure_ascii=False), encoding="utf-8"
        )

    @staticmethod
    def _errors_from_json(raw: list[dict]) -> list[ErrorRecord]:
        return [ErrorRecord(**entry) for entry in raw]

    def _restore_for_iteration(self, iteration: int) -> None:
        """Rebuild the student binding and training set for a stage-wise entry."""
        if iteration < 1:
            raise ValueError("iterations are numbered from 1")
        if iteration > 1:
            prev = self._load_checkpoint(iteration - 1)
            self.running_train = load_dataset(self._abs(prev["record"]["merged_train_file"]), "train")
            student = prev["student"]
            binding = replace(
                self.bindings["student_eval"],
                endpoint=student["endpoint"],
                model_id=student["model_id"],
            )
        else:
            descriptor_path = self.run_dir / "hook" / "iter_000" / DESCRIPTOR_FILENAME
            if descriptor_path.exists():
                descriptor = json.loads(descriptor_path.read_text(encoding="utf-8"))
                binding = replace(
                    self.bindings["student_eval"],
                    endpoint=descriptor["endpoint"],
                    model_id=descriptor["model_id"],
                )
            else:
                binding = self.invoke_finetune_hook(self.cfg.train_file, 0)
        self._rebind_student(binding)

    def cli_stage_eval(self, iteration: int) -> dict:
        self._restore_for_iteration(iteration)
        log: list[dict] = []
        errors_train, errors_val = self.stage_eval(log)
        checkpoint = {
            "partial": "eval",
            "iteration": iteration,
            "errors_train": [e.__dict__ for e in errors_train],
            "errors_val": [e.__dict__ for e in errors_val],
            "stage_log": log,
            "student": {
                "endpoint": self.bindings["student_eval"].endpoint,
                "model_id": self.bindings["student_eval"].model_id,
            },
        }
        self._save_checkpoint(iteration, checkpoint)
        return checkpoint

    def cli_stage_analyze(self, iteration: int) -> dict:
        checkpoint = self._load_checkpoint(iteration)
        errors_val = self._errors_from_json(checkpoint["errors_val"])
        log = checkpoint.get("stage_log", [])
        self.analyzer.reset_flags()
        k, patterns, strategies = self.stage_analysis(iteration, errors_val, log)
        checkpoint.update(
            {
                "partial": "analyze",
                "k": k,
                "patterns": [
                    {
                        "cluster_index": p.cluster_index,
                        "category_name": p.category_name,
                        "error_pattern": p.error_pattern,
                        "representative_samples": list(p.representative_samples),
                    }
                    for p in patterns
                ],
                "strategies": [
                    {
                        "category_name": s.category_name,
                        "error_pattern": s.error_pattern,
                        "representative_samples": list(s.representative_samples),
                        "strategy_name": s.strategy_name,
                        "generation_approach": s.generation_approach,
                        "key_elements": list(s.key_elements),
                        "cluster_index": s.cluster_index,
                    }
                    for s in strategies
                ],
                "flags": list(self.analyzer.flags),
                "stage_log": log,
            }
        )
        self._save_checkpoint(iteration, checkpoint)
        return checkpoint

    def cli_stage_generate(self, iteration: int) -> dict:
        checkpoint = self._load_checkpoint(iteration)
        if iteration > 1:
            prev = self._load_checkpoint(iteration - 1)
            self.running_train = load_dataset(self._abs(prev["record"]["merged_train_file"]), "train")
        errors_train = self._errors_from_json(checkpoint["errors_train"])
        strategies = [
            StrategyCard(
                category_name=s["category_name"],
                error_pattern=s["error_pattern"],
                representative_samples=tuple(s.get("representative_samples", ())),
                strategy_name=s["strategy_name"],
                generation_approach=s["generation_approach"],
                key_elements=tuple(s.get("key_elements", ())),
                cluster_index=s["cluster_index"],
            )
            for s in checkpoint.get("strategies", [])
        ]
        log = checkpoint.get("stage_log", [])
        self._stage(log, "plan_quota")
        quota = self._plan_iteration_quota(len(strategies), len(errors_train))
        accepted, artifacts = self.stage_generate(iteration, strategies, errors_train, quota, log)
        accepted = self._unique_ids(accepted, iteration)

        self._stage(log, "merge_write")
        syn_ds = Dataset(samples=tuple(accepted), split="synthetic")
        syn_file = self.run_dir / "data" / f"syn_iter_{iteration:03d}.jsonl"
        write_dataset(syn_ds, syn_file)
        merged = merge_augmented(self.running_train, syn_ds)
        merged_file = self.run_dir / "data" / f"merged_train_iter_{iteration:03d}.jsonl"
        write_dataset(merged, merged_file)
        assert_no_validation_leak([syn_file, merged_file], self.val_ds)

        checkpoint.update(
            {
                "partial": "generate",
                "quota": quota.to_dict(),
                "qc_stats": artifacts["qc_stats"],
                "dropped_batches": artifacts["dropped_batches"],
                "verdicts": artifacts["verdicts"],
                "generation_stats": artifacts["generation_stats"],
                "accepted_synthetic": len(accepted),
                "synthetic_file": self._rel(syn_file),
                "merged_train_file": self._rel(merged_file),
                "stage_log": log,
            }
        )
        self._save_checkpoint(iteration, checkpoint)
        return checkpoint

    def standalone_qc(self, syn_file: str | Path) -> dict:
        """One-shot review of a staged synthetic file, no regeneration."""
        syn_ds = load_dataset(syn_file, "synthetic")
        originals = self.running_train.by_id()
        pairs = []
        unmatched = []
        for sample in syn_ds.samples:
            origin = originals.get(sample.based_on_example or "")
            if origin is None:
                unmatched.append(sample.id)
                continue
            pairs.append((origin, sample))
        verdicts = []
        for start in range(0, len(pairs), self.cfg.batch_size):
            verdict = self.qc.review_batch(pairs[start : start + self.cfg.batch_size], [], attempt=1)
            verdicts.append(verdict.to_dict())
        return {
            "synthetic_file": str(syn_file),
            "reviewed": len(pairs),
            "unmatched_originals": unmatched,
            "verdicts": verdicts,
        }

    def rebuild_report(self) -> dict:
        """Reassemble report.json from whatever checkpoints are on disk."""
        records = []
        for path in sorted((self.run_dir / "checkpoints").glob("iter_*.json")):
            checkpoint = json.loads(path.read_text(encoding="utf-8"))
            if "record" in checkpoint:
                records.append(checkpoint["record"])
        hook_count = len(list((self.run_dir / "hook").glob("iter_*/" + DESCRIPTOR_FILENAME)))
        call_totals: dict[str, int] = {}
        for record in records:
            for purpose, count in record.get("call_counts", {}).items():
                call_totals[purpose] = call_totals.get(purpose, 0) + count
        report = {
            "schema": REPORT_SCHEMA,
            "config": self.cfg.summary(),
            "dataset_sizes": {"train": len(self.train_ds), "val": len(self.val_ds)},
            "hook_invocations": hook_count,
            "iterations": records,
            "call_counts_total": {p: call_totals[p] for p in sorted(call_totals)},
            "final_train_size": len(self.running_train),
        }
        path = self.run_dir / "report.json"
        path.write_text(json.dumps(report, indent=2, ensure_ascii=False), encoding="utf-8")
        return report
