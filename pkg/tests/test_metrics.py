"""Evaluation metric arithmetic against brute-force oracles."""

from __future__ import annotations

import random

import pytest
from hypothesis import given, strategies as st

from codeaudit.metrics import (
    ClassMetrics,
    ConfusionCounts,
    EvaluationError,
    confusion_counts,
    evaluate_features,
    evaluate_label_field,
    link_retrieval_accuracy,
    micro_average,
    precision_recall_f1,
    weighted_average,
)


def test_identity_predictions_have_no_errors():
    labels = {f"i{k}": k % 2 == 0 for k in range(10)}
    counts = confusion_counts(labels, labels)
    for c in counts.values():
        assert c.fp == 0 and c.fn == 0


def test_all_flipped_booleans():
    gold = {f"i{k}": k % 2 == 0 for k in range(10)}
    pred = {k: not v for k, v in gold.items()}
    counts = confusion_counts(pred, gold)
    for c in counts.values():
        assert c.tp == 0 and c.tn == 0


def test_confusion_matches_independent_tally():
    rng = random.Random(3)
    values = ["a", "b", "c"]
    gold = {f"i{k}": rng.choice(values) for k in range(50)}
    pred = {f"i{k}": rng.choice(values) for k in range(50)}
    counts = confusion_counts(pred, gold)
    for cls in values:
        tp = fp = fn = tn = 0
        for k in gold:
            p, g = pred[k] == cls, gold[k] == cls
            if p and g:
                tp += 1
            elif p:
                fp += 1
            elif g:
                fn += 1
            else:
                tn += 1
        assert counts[cls] == ConfusionCounts(tp, fp, fn, tn)


def test_missing_ids_raise_with_listing():
    with pytest.raises(EvaluationError, match="i1"):
        confusion_counts({"i0": True}, {"i0": True, "i1": False})


def test_conditional_none_gold_excluded():
    gold = {"a": True, "b": None, "c": False}
    counts = confusion_counts({"a": True, "c": False}, gold)
    assert counts[True].total() == 2


def test_prf_hand_arithmetic():
    m = precision_recall_f1(ConfusionCounts(tp=3, fp=1, fn=2))
    assert m.precision == pytest.approx(0.75)
    assert m.recall == pytest.approx(0.6)
    assert m.f1 == pytest.approx(2 * 0.45 / 1.35)
    assert m.support == 5


def test_prf_zero_denominators_flagged():
    m = precision_recall_f1(ConfusionCounts())
    assert (m.precision, m.recall, m.f1) == (0.0, 0.0, 0.0)
    assert m.degenerate


def test_prf_negative_counts_rejected():
    with pytest.raises(EvaluationError):
        precision_recall_f1(ConfusionCounts(tp=-1))


def test_weighted_average_reproduces_scope_table():
    per = {
        "Out of scope": ClassMetrics(0.93, 0.94, 0.93, 105),
        "In scope": ClassMetrics(0.98, 0.98, 0.98, 395),
    }
    wa = weighted_average(per)
    assert round(wa["f1"], 2) == 0.97
    assert round(wa["precision"], 2) == 0.97
    assert round(wa["recall"], 2) == 0.97


def test_weighted_average_reproduces_rubric_table():
    rows = [
        (1.00, 1.00, 1.00, 29), (0.70, 1.00, 0.82, 24), (0.62, 1.00, 0.76, 29),
        (1.00, 0.86, 0.92, 8), (1.00, 1.00, 1.00, 29), (0.71, 0.71, 0.71, 29),
        (1.00, 0.85, 0.92, 29), (1.00, 1.00, 1.00, 29), (0.71, 0.83, 0.77, 22),
        (0.50, 1.00, 0.67, 29), (0.50, 1.00, 0.67, 29), (1.00, 0.57, 0.73, 29),
        (0.71, 1.00, 0.83, 29),
    ]
    per = {str(i): ClassMetrics(*row) for i, row in enumerate(rows)}
    wa = weighted_average(per)
    assert round(wa["precision"], 2) == 0.80
    assert round(wa["recall"], 2) == 0.91
    assert round(wa["f1"], 2) == 0.83


def test_weighted_single_label_is_identity():
    per = {"only": ClassMetrics(0.4, 0.5, 0.44, 7)}
    wa = weighted_average(per)
    assert wa == {"precision": 0.4, "recall": 0.5, "f1": 0.44}


def test_weighted_average_matches_brute_force():
    rng = random.Random(11)
    per = {
        f"l{k}": ClassMetrics(rng.random(), rng.random(), rng.random(), rng.randint(1, 40))
        for k in range(3)
    }
    wa = weighted_average(per)
    total = sum(m.support for m in per.values())
    assert wa["f1"] == pytest.approx(sum(m.f1 * m.support for m in per.values()) / total)


def test_weighted_average_zero_support_errors():
    with pytest.raises(EvaluationError):
        weighted_average({"l": ClassMetrics(1, 1, 1, 0)})


def test_micro_average_pools_counts():
    counts = {
        "a": ConfusionCounts(tp=2, fp=1, fn=1, tn=6),
        "b": ConfusionCounts(tp=3, fp=0, fn=2, tn=5),
    }
    micro = micro_average(counts)
    assert micro["precision"] == pytest.approx(5 / 6)
    assert micro["recall"] == pytest.approx(5 / 8)


@given(
    st.dictionaries(
        st.text(min_size=1, max_size=4),
        st.tuples(st.booleans(), st.booleans()),
        min_size=1,
        max_size=30,
    )
)
def test_metric_bounds_and_f1_between(pairs):
    pred = {k: v[0] for k, v in pairs.items()}
    gold = {k: v[1] for k, v in pairs.items()}
    for counts in confusion_counts(pred, gold).values():
        m = precision_recall_f1(counts)
        assert 0.0 <= m.precision <= 1.0
        assert 0.0 <= m.recall <= 1.0
        assert 0.0 <= m.f1 <= 1.0
        if m.precision > 0 and m.recall > 0:
            assert min(m.precision, m.recall) <= m.f1 <= max(m.precision, m.recall)


def test_permutation_invariance():
    rng = random.Random(5)
    items = [(f"i{k}", rng.random() < 0.5, rng.random() < 0.5) for k in range(40)]
    pred = {k: p for k, p, _ in items}
    gold = {k: g for k, _, g in items}
    base = evaluate_label_field(pred, gold)
    rng.shuffle(items)
    shuffled = evaluate_label_field(
        {k: p for k, p, _ in items}, {k: g for k, _, g in items}
    )
    assert base.to_dict() == shuffled.to_dict()


def test_weighted_average_of_identical_metrics_is_that_metric():
    per = {
        "a": ClassMetrics(0.7, 0.8, 0.75, 10),
        "b": ClassMetrics(0.7, 0.8, 0.75, 90),
    }
    wa = weighted_average(per)
    assert wa["precision"] == pytest.approx(0.7)
    assert wa["recall"] == pytest.approx(0.8)
    assert wa["f1"] == pytest.approx(0.75)


def test_evaluate_features_conditional_supports():
    gold = {
        "r1": {"contains_readme": True, "readme_purpose_and_outputs": True},
        "r2": {"contains_readme": False, "readme_purpose_and_outputs": None},
        "r3": {"contains_readme": True, "readme_purpose_and_outputs": False},
    }
    pred = {
        "r1": {"contains_readme": True, "readme_purpose_and_outputs": True},
        "r2": {"contains_readme": False, "readme_purpose_and_outputs": None},
        "r3": {"contains_readme": True, "readme_purpose_and_outputs": False},
    }
    report = evaluate_features(pred, gold, ["contains_readme", "readme_purpose_and_outputs"])
    assert report.per_label["contains_readme"].support == 3
    assert report.per_label["readme_purpose_and_outputs"].support == 2
    assert report.per_label["contains_readme"].f1 == pytest.approx(1.0)


# -- link retrieval accuracy ---------------------------------------------------


def test_link_accuracy_36_of_39():
    gold = {f"a{k}": f"https://github.com/u/r{k}" for k in range(39)}
    pred = dict(gold)
    pred["a0"] = "https://github.com/u/other"  # wrong link
    pred["a1"] = None  # missed
    del pred["a2"]  # missed
    assert link_retrieval_accuracy(pred, gold) == pytest.approx(36 / 39, abs=1e-9)


def test_link_accuracy_exact_match_is_one():
    gold = {"a": "https://github.com/u/r", "b": "Appendix"}
    assert link_retrieval_accuracy(dict(gold), gold) == 1.0


def test_link_accuracy_doi_equivalence(fake_resolver):
    gold = {"a": "https://doi.org/10.5281/zenodo.4077342"}
    pred = {"a": "https://zenodo.org/record/4077342"}
    assert link_retrieval_accuracy(pred, gold, doi_resolver=fake_resolver) == 1.0


def test_link_accuracy_messy_equivalence():
    gold = {"a": "https://github.com/U/R"}
    pred = {"a": "https://www.github.com/U/R/tree/main"}
    assert link_retrieval_accuracy(pred, gold) == 1.0


def test_link_accuracy_empty_evaluation_set_errors():
    with pytest.raises(EvaluationError):
        link_retrieval_accuracy({}, {"a": None})


def test_render_metric_table_layout():
    from codeaudit.metrics import MetricReport, render_metric_table

    report = MetricReport(
        per_label={
            "Out of scope": ClassMetrics(0.93, 0.94, 0.93, 105),
            "In scope": ClassMetrics(0.98, 0.98, 0.98, 395),
        },
        weighted_average={"precision": 0.9695, "recall": 0.9716, "f1": 0.9695},
    )
    table = render_metric_table(report, "Scope classification")
    lines = table.splitlines()
    assert lines[0] == "Scope classification"
    assert "Precision" in lines[1] and "Support" in lines[1]
    assert lines[2].startswith("Out of scope") and lines[2].endswith("105")
    assert lines[-1].startswith("Weighted average")
    assert "0.97" in lines[-1]
