from __future__ import annotations

import json

import pytest

from augloop.analysis import ClusterPattern, PatternAnalyzer, subsample_errors
from augloop.evaluation import ErrorRecord
from augloop.prompts import PromptLibrary

from conftest import ScriptedProvider, make_gateway


def error(i: int, split: str = "val") -> ErrorRecord:
    return ErrorRecord(sample_id=f"{split}_{i}", x=f"question {i}", y=f"gold {i}", y_hat=f"wrong {i}", split=split)


def make_analyzer(responses_by_purpose: dict, batch_size: int = 10):
    providers = {purpose: ScriptedProvider(responses) for purpose, responses in responses_by_purpose.items()}
    gw = make_gateway(providers)
    return PatternAnalyzer(gw, PromptLibrary(), batch_size=batch_size), providers, gw


# subsampling ---------------------------------------------------------------


def test_subsample_errors_sizes_and_determinism():
    errors = [error(i) for i in range(120)]
    assert len(subsample_errors(errors, 50, seed=4)) == 50
    assert len(subsample_errors([error(i) for i in range(30)], 50, seed=4)) == 30
    a = subsample_errors(errors, 50, seed=4)
    b = subsample_errors(errors, 50, seed=4)
    assert [e.sample_id for e in a] == [e.sample_id for e in b]


def test_subsample_errors_rejects_train_split():
    with pytest.raises(ValueError):
        subsample_errors([error(0, split="train")], 5, seed=0)


# sample-level analysis --------------------------------------------------------


def _analysis_json(entries: list[dict]) -> str:
    return json.dumps(entries)


def test_analyze_errors_maps_back_to_source_ids():
    response = _analysis_json(
        [
            {"sample_idx": 0, "error_cause": "misread units", "scenario_category": "Unit Conversion"},
            {"sample_idx": 1, "error_cause": "dropped a carry", "scenario_category": "Arithmetic"},
        ]
    )
    analyzer, providers, _ = make_analyzer({"error_analysis": [response]})
    batch = [error(0), error(1)]
    analyses = analyzer.analyze_errors(batch)
    assert len(analyses) == 2
    assert analyses[0].source_error_id == "val_0"
    assert analyses[1].source_error_id == "val_1"
    # prompt contains the serialized triples
    prompt = providers["error_analysis"].requests[0].messages[0]["content"]
    assert "USER QUERY: question 0" in prompt and "GROUND TRUTH: gold 1" in prompt


def test_analyze_errors_drops_out_of_range_idx():
    response = _analysis_json(
        [
            {"sample_idx": 9, "error_cause": "x", "scenario_category": "Y"},
            {"sample_idx": 1, "error_cause": "ok", "scenario_category": "Z"},
        ]
    )
    analyzer, _, _ = make_analyzer({"error_analysis": [response]})
    analyses = analyzer.analyze_errors([error(0), error(1)])
    assert [a.sample_idx for a in analyses] == [1]
    assert any("out_of_range" in f for f in analyzer.flags)


def test_analyze_errors_skips_batch_after_double_malformed():
    analyzer, providers, _ = make_analyzer({"error_analysis": ["not json", "still not json"]})
    assert analyzer.analyze_errors([error(0)]) == []
    assert "analysis_batch_skipped" in analyzer.flags
    assert len(providers["error_analysis"].requests) == 2  # one re-ask


def test_analyze_errors_reask_recovers():
    good = _analysis_json([{"sample_idx": 0, "error_cause": "c", "scenario_category": "S"}])
    analyzer, providers, _ = make_analyzer({"error_analysis": ["garbled", good]})
    analyses = analyzer.analyze_errors([error(0)])
    assert len(analyses) == 1
    # the re-ask carries the previous raw output plus a JSON-only nudge
    retry_messages = providers["error_analysis"].requests[1].messages
    assert retry_messages[1]["content"] == "garbled"


def test_analyze_errors_enforces_batch_size():
    analyzer, _, _ = make_analyzer({"error_analysis": []}, batch_size=2)
    with pytest.raises(ValueError):
        analyzer.analyze_errors([error(i) for i in range(3)])


def test_analyze_all_chunks_by_batch_size():
    def response_for(ids: list[int]) -> str:
        return _analysis_json(
            [{"sample_idx": j, "error_cause": f"c{j}", "scenario_category": "S"} for j in range(len(ids))]
        )

    analyzer, providers, gw = make_analyzer(
        {"error_analysis": [response_for([0, 1]), response_for([0])]}, batch_size=2
    )
    analyses = analyzer.analyze_all([error(0), error(1), error(2)])
    assert len(analyses) == 3
    assert gw.snapshot_counts()["error_analysis"] == 2
    assert analyses[2].source_error_id == "val_2"


# embedding --------------------------------------------------------------------


def test_embed_analyses_arity_and_determinism():
    analyzer, _, _ = make_analyzer({})
    from augloop.analysis import ErrorAnalysis

    analyses = [ErrorAnalysis(0, "same cause", "Same Category", f"val_{i}") for i in range(3)]
    vectors = analyzer.embed_analyses(analyses)
    assert len(vectors) == 3
    assert vectors[0] == vectors[1] == vectors[2]
    with pytest.raises(ValueError):
        analyzer.embed_analyses([])


# categorization ----------------------------------------------------------------


def test_categorize_cluster_single_call_and_schema():
    response = json.dumps(
        {
            "category_name": "Science Knowledge Recall Errors",
            "error_pattern": "Inaccurate recall of scientific concepts",
            "representative_samples": ["sample a", "sample b"],
        }
    )
    analyzer, providers, gw = make_analyzer({"categorization": [response]})
    from augloop.analysis import ErrorAnalysis

    pattern = analyzer.categorize_cluster([ErrorAnalysis(0, "c", "S", "val_0")], cluster_index=2)
    assert pattern.category_name == "Science Knowledge Recall Errors"
    assert pattern.cluster_index == 2
    assert gw.snapshot_counts()["categorization"] == 1


def test_categorize_cluster_placeholder_after_double_failure():
    analyzer, _, _ = make_analyzer({"categorization": ["nope", "nope again"]})
    from augloop.analysis import ErrorAnalysis

    pattern = analyzer.categorize_cluster([ErrorAnalysis(0, "c", "S", "val_0")], cluster_index=1)
    assert pattern.category_name == "Uncategorized cluster 1"
    assert "uncategorized_cluster:1" in analyzer.flags


def test_exactly_k_categorization_calls():
    responses = [
        json.dumps({"category_name": f"Cat {i}", "error_pattern": f"p{i}", "representative_samples": []})
        for i in range(4)
    ]
    analyzer, _, gw = make_analyzer({"categorization": responses})
    from augloop.analysis import ErrorAnalysis

    for i in range(4):
        analyzer.categorize_cluster([ErrorAnalysis(0, "c", "S", f"val_{i}")], cluster_index=i)
    assert gw.snapshot_counts()["categorization"] == 4


# strategy drafting ---------------------------------------------------------------


def patterns(n: int) -> list[ClusterPattern]:
    return [ClusterPattern(i, f"Category {i}", f"pattern {i}", ()) for i in range(n)]


def _cards_json(names: list[str]) -> str:
    return json.dumps(
        [
            {
                "category_name": name,
                "strategy_name": f"Strategy for {name}",
                "generation_approach": f"Generate items exercising {name}",
                "key_elements": ["one-turn format"],
            }
            for name in names
        ]
    )


def test_draft_strategies_one_call_matches_all():
    analyzer, _, gw = make_analyzer({"strategy": [_cards_json(["Category 0", "Category 1", "Category 2"])]})
    cards = analyzer.draft_strategies(patterns(3))
    assert len(cards) == 3
    assert [c.cluster_index for c in cards] == [0, 1, 2]
    assert gw.snapshot_counts()["strategy"] == 1


def test_draft_strategies_retries_then_flags_missing():
    analyzer, _, gw = make_analyzer(
        {"strategy": [_cards_json(["Category 0", "Category 1"]), _cards_json(["Category 0", "Category 1"])]}
    )
    cards = analyzer.draft_strategies(patterns(3))
    assert len(cards) == 2
    assert "missing_strategy:Category 2" in analyzer.flags
    assert gw.snapshot_counts()["strategy"] == 2


def test_draft_strategies_matches_case_insensitively():
    analyzer, _, _ = make_analyzer({"strategy": [_cards_json(["category 0"])]})
    cards = analyzer.draft_strategies(patterns(1))
    assert len(cards) == 1
    assert cards[0].category_name == "Category 0"


def test_draft_strategies_aborts_branch_after_double_malformed():
    analyzer, _, _ = make_analyzer({"strategy": ["nope", "still nope"]})
    assert analyzer.draft_strategies(patterns(2)) == []
    assert "strategy_branch_aborted" in analyzer.flags


def test_strategy_example_shape():
    # an ARC-style category should yield a card whose approach starts with guidance
    response = json.dumps(
        [
            {
                "category_name": "Science Knowledge Recall Errors",
                "strategy_name": "Targeted Science Recall",
                "generation_approach": "Generate multiple-choice questions that target specific scientific concepts",
                "key_elements": ["concept coverage"],
            }
        ]
    )
    analyzer, _, _ = make_analyzer({"strategy": [response]})
    source = [ClusterPattern(0, "Science Knowledge Recall Errors", "Inaccurate recall", ())]
    (card,) = analyzer.draft_strategies(source)
    assert card.generation_approach.startswith("Generate multiple-choice questions")


# clustering integration ------------------------------------------------------------


def test_cluster_analyses_k_in_range():
    analyzer, _, _ = make_analyzer({})
    from augloop.analysis import ErrorAnalysis

    analyses = []
    for i in range(30):
        bucket = ("Arithmetic Slips", "Concept Recall", "Formatting")[i % 3]
        analyses.append(ErrorAnalysis(i, f"{bucket} root cause variant", bucket, f"val_{i}"))
    k, result = analyzer.cluster_analyses(analyses, 2, 10, seed=5)
    assert 2 <= k <= 10
    assert len(result.assignments) == 30
