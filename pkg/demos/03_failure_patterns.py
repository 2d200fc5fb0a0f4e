"""From student mistakes to generation strategies, with offline providers.

Evaluates a simulated student on a toy validation set, analyzes the
failures, clusters them, and drafts one generation strategy per pattern.
"""

from augloop import (
    Dataset,
    Gateway,
    HashEmbedder,
    Message,
    PatternAnalyzer,
    ProviderBinding,
    PromptLibrary,
    Sample,
    TaskSpec,
    collect_errors,
    predict_all,
    subsample_errors,
)
from augloop.simulate import DryRunProvider

task = TaskSpec(kind="numeric", numeric_marker="####")

val = Dataset(
    samples=tuple(
        Sample(
            id=f"val_{i}",
            messages=(
                Message("user", f"Problem {i}: what is {30 + i} + {2 * i + 5}?"),
                Message("assistant", f"#### {30 + i + 2 * i + 5}"),
            ),
            split="val",
        )
        for i in range(40)
    ),
    split="val",
)

provider = DryRunProvider(seed=3, task=task)
binding = ProviderBinding(endpoint="dryrun://", model_id="student-it1")
gateway = Gateway(
    {purpose: (binding, provider) for purpose in ("student_eval", "error_analysis", "categorization", "strategy")},
    embedder=HashEmbedder(dim=8, seed=3),
)

preds = predict_all(val, gateway)
errors = collect_errors(val, preds, task)
print(f"validation errors: {len(errors)} / {len(val)}")

picked = subsample_errors(errors, 50, seed=3)
analyzer = PatternAnalyzer(gateway, PromptLibrary(), batch_size=10)
analyses = analyzer.analyze_all(picked)
print(f"analyzed {len(analyses)} failures; example cause: {analyses[0].error_cause!r}")

k, clusters = analyzer.cluster_analyses(analyses, 2, 10, seed=3)
print(f"elbow-selected K = {k}")

patterns = []
for c in range(clusters.k):
    members = [analyses[i] for i in clusters.members(c)]
    if members:
        patterns.append(analyzer.categorize_cluster(members, c))

strategies = analyzer.draft_strategies(patterns)
print(f"\n{'category':40s} -> strategy")
for card in strategies:
    print(f"{card.category_name:40s} -> {card.strategy_name}")
    print(f"  approach: {card.generation_approach[:90]}")
print(f"\ngateway calls: {gateway.snapshot_counts()}")
