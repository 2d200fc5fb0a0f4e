from __future__ import annotations

import sys
from fractions import Fraction

import pytest

from augloop.corpus import Dataset, Message, Sample
from augloop.evaluation import (
    NO_RESPONSE,
    TaskSpec,
    accuracy,
    collect_errors,
    extract_answer,
    is_failure,
    normalize_exact_match,
    predict_all,
)
from augloop.gateway import ProviderRejected

from conftest import ScriptedProvider, make_gateway


def sample(i: int, q: str, a: str, split: str = "train") -> Sample:
    return Sample(id=f"{split}_{i}", messages=(Message("user", q), Message("assistant", a)), split=split)


# answer extraction ---------------------------------------------------------


def test_choice_extraction_first_standalone_label(mc_task):
    assert extract_answer("The answer is B because...", mc_task) == "B"
    assert extract_answer("(C) looks right", mc_task) == "C"
    assert extract_answer("A or B? On reflection, B", mc_task) == "A"
    assert extract_answer("no label here", mc_task) is None


def test_choice_extraction_ignores_labels_inside_words(mc_task):
    assert extract_answer("A CAB drove by. D", mc_task) == "A"
    assert extract_answer("CAB BAD", mc_task) is None


def test_numeric_extraction_after_last_marker(numeric_task):
    assert extract_answer("5+3=8 so total is 72\n#### 72", numeric_task) == 72
    assert extract_answer("#### 1\nwait\n#### 2", numeric_task) == 2


def test_numeric_extraction_last_number_without_marker(numeric_task):
    assert extract_answer("first 3 then 14 finally 7", numeric_task) == 7
    assert extract_answer("nothing numeric", numeric_task) is None


def test_numeric_extraction_handles_commas_and_decimals(numeric_task):
    assert extract_answer("#### 1,234", numeric_task) == 1234
    assert extract_answer("#### 2.5", numeric_task) == Fraction(5, 2)
    assert extract_answer("#### -42", numeric_task) == -42


def test_em_normalization_cases(em_task):
    assert normalize_exact_match("The Eiffel Tower.") == "eiffel tower"
    assert extract_answer("The Eiffel Tower.", em_task) == extract_answer("Eiffel Tower", em_task)
    assert normalize_exact_match("An  apple, a day!") == "apple day"
    assert normalize_exact_match("YES") == "yes"


# failure criterion ----------------------------------------------------------


def test_is_failure_multiple_choice(mc_task):
    assert is_failure("B", "B", mc_task) is False
    assert is_failure("A", "B", mc_task) is True
    assert is_failure("I refuse", "B", mc_task) is True


def test_is_failure_numeric_exact(numeric_task):
    assert is_failure("#### 41", "#### 42", numeric_task) is True
    assert is_failure("the sum is 42\n#### 42", "#### 42", numeric_task) is False


def test_numeric_epsilon_config():
    loose = TaskSpec(kind="numeric", numeric_marker="####", numeric_epsilon=0.1)
    assert is_failure("#### 42.05", "#### 42", loose) is False
    assert is_failure("#### 42.5", "#### 42", loose) is True


def test_is_failure_exact_match(em_task):
    assert is_failure("The Eiffel Tower.", "Eiffel Tower", em_task) is False
    assert is_failure("Big Ben", "Eiffel Tower", em_task) is True


def test_external_command_exit_status(tmp_path):
    script = tmp_path / "check.py"
    script.write_text(
        "import sys\n"
        "pred = open(sys.argv[1]).read().strip()\n"
        "gold = open(sys.argv[2]).read().strip()\n"
        "sys.exit(0 if pred == gold else 1)\n"
    )
    task = TaskSpec(kind="external_command", command_template=f"{sys.executable} {script} {{pred_file}} {{gold_file}}")
    assert is_failure("same", "same", task) is False
    assert is_failure("same", "different", task) is True


# prediction and error collection ---------------------------------------------


def test_predict_all_order_and_purpose(numeric_task):
    provider = ScriptedProvider(["#### 1", "#### 2", "#### 3"])
    gw = make_gateway({"student_eval": provider}, max_concurrency=1)
    ds = Dataset(samples=tuple(sample(i, f"what is {i}+0?", f"#### {i}") for i in range(3)), split="train")
    preds = predict_all(ds, gw)
    assert preds == [("train_0", "#### 1"), ("train_1", "#### 2"), ("train_2", "#### 3")]
    assert all(r.purpose == "student_eval" and r.temperature == 0.0 for r in provider.requests)


def test_predict_failure_becomes_error(numeric_task):
    provider = ScriptedProvider(["#### 0", ProviderRejected("down"), "#### 2"])
    gw = make_gateway({"student_eval": provider}, max_concurrency=1)
    ds = Dataset(samples=tuple(sample(i, f"q{i}", f"#### {i}") for i in range(3)), split="train")
    preds = predict_all(ds, gw)
    assert preds[1] == ("train_1", NO_RESPONSE)
    errors = collect_errors(ds, preds, numeric_task)
    assert [e.sample_id for e in errors] == ["train_1"]
    assert errors[0].y_hat == NO_RESPONSE


def test_predict_all_empty_dataset():
    gw = make_gateway({"student_eval": ScriptedProvider([])})
    assert predict_all(Dataset(samples=(), split="train"), gw) == []


def test_collect_errors_matches_brute_force(numeric_task):
    ds = Dataset(samples=tuple(sample(i, f"what is {i} + {i}?", f"#### {2 * i}", split="val") for i in range(10)), split="val")
    # scripted student: wrong on indices 1, 4, 6, 9
    preds = []
    for i in range(10):
        value = 2 * i if i not in (1, 4, 6, 9) else 2 * i + 1
        preds.append((f"val_{i}", f"#### {value}"))
    errors = collect_errors(ds, preds, numeric_task)
    brute = [
        s.id
        for s, (_, y_hat) in zip(ds.samples, preds)
        if is_failure(y_hat, s.assistant_text, numeric_task)
    ]
    assert [e.sample_id for e in errors] == brute == ["val_1", "val_4", "val_6", "val_9"]
    assert all(e.split == "val" for e in errors)
    assert accuracy(ds, errors) == pytest.approx(0.6)


def test_collect_errors_checks_length(numeric_task):
    ds = Dataset(samples=(sample(0, "q", "#### 1"),), split="train")
    with pytest.raises(ValueError):
        collect_errors(ds, [], numeric_task)


def test_all_correct_yields_empty_error_set(numeric_task):
    ds = Dataset(samples=tuple(sample(i, "q", f"#### {i}") for i in range(4)), split="train")
    preds = [(s.id, s.assistant_text) for s in ds.samples]
    assert collect_errors(ds, preds, numeric_task) == []


def test_task_spec_validation():
    with pytest.raises(ValueError):
        TaskSpec(kind="multiple_choice")
    with pytest.raises(ValueError):
        TaskSpec(kind="numeric")
    with pytest.raises(ValueError):
        TaskSpec(kind="sorting")
