"""Evaluation-driven data augmentation loop for fine-tuned small language models."""

from .analysis import ClusterPattern, ErrorAnalysis, PatternAnalyzer, StrategyCard, subsample_errors
from .clustering import ClusterResult, kmeans, select_k_elbow
from .corpus import (
    Dataset,
    DuplicateId,
    MalformedRecord,
    Message,
    Sample,
    ValidationLeak,
    load_dataset,
    merge_augmented,
    subsample,
    write_dataset,
)
from .evaluation import ErrorRecord, TaskSpec, collect_errors, extract_answer, is_failure, predict_all
from .gateway import (
    ChatRequest,
    Gateway,
    HashEmbedder,
    MalformedOutput,
    ProviderBinding,
    ReplayProvider,
    RetryPolicy,
    extract_json,
    temperature_for,
)
from .generation import DataGenerator, GenerationBatch, QuotaPlan, plan_quota
from .pipeline import (
    HookFailed,
    HookProtocolError,
    Orchestrator,
    PipelineState,
    RunConfig,
    assert_no_validation_leak,
)
from .prompts import PromptLibrary
from .quality import QualityController, QualityVerdict
from .simulate import DryRunProvider

__version__ = "0.1.0"

__all__ = [
    "ChatRequest",
    "ClusterPattern",
    "ClusterResult",
    "Dataset",
    "DataGenerator",
    "DryRunProvider",
    "DuplicateId",
    "ErrorAnalysis",
    "ErrorRecord",
    "Gateway",
    "GenerationBatch",
    "HashEmbedder",
    "HookFailed",
    "HookProtocolError",
    "MalformedOutput",
    "MalformedRecord",
    "Message",
    "Orchestrator",
    "PatternAnalyzer",
    "PipelineState",
    "PromptLibrary",
    "ProviderBinding",
    "QualityController",
    "QualityVerdict",
    "QuotaPlan",
    "ReplayProvider",
    "RetryPolicy",
    "RunConfig",
    "Sample",
    "StrategyCard",
    "TaskSpec",
    "ValidationLeak",
    "assert_no_validation_leak",
    "collect_errors",
    "extract_answer",
    "extract_json",
    "is_failure",
    "kmeans",
    "load_dataset",
    "merge_augmented",
    "plan_quota",
    "predict_all",
    "select_k_elbow",
    "subsample",
    "subsample_errors",
    "temperature_for",
    "write_dataset",
]
