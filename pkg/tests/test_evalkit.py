"""Tests for ranking metrics and evaluation reports."""

import csv
import json
import math

import numpy as np
import pytest
from sklearn.metrics import average_precision_score, roc_auc_score

from tagad.evalkit import (
    EvalReport,
    auc,
    average_precision,
    evaluate,
    per_type_auc,
    roc_points,
    trapezoid_area,
    write_report,
    write_roc,
)
from tagad.graph import InjectionLabel

LABELS = [1, 0, 1, 0]
SCORES = [0.9, 0.8, 0.7, 0.1]


def pair_count_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    total = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return total / (len(pos) * len(neg))


def rank_walk_ap(scores, labels):
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    hits, total = 0, 0.0
    for k, i in enumerate(order, start=1):
        if labels[i]:
            hits += 1
            total += hits / k
    return total / hits


def test_auc_example():
    assert auc(SCORES, LABELS) == 0.75


def test_ap_example():
    assert abs(average_precision(SCORES, LABELS) - 5 / 6) < 1e-15


def test_perfect_separation():
    assert auc([3, 2, 1, 0], [1, 1, 0, 0]) == 1.0
    assert average_precision([3, 2, 1, 0], [1, 1, 0, 0]) == 1.0


def test_all_ties_auc_is_half():
    assert auc(np.zeros(6), [1, 0, 0, 1, 0, 1]) == 0.5


def test_single_positive_last():
    n = 8
    labels = np.zeros(n)
    labels[-1] = 1
    assert average_precision(-np.arange(n), labels) == pytest.approx(1 / n)


def test_ap_ties_follow_node_id():
    assert average_precision([1.0, 1.0], [0, 1]) == 0.5
    assert average_precision([1.0, 1.0], [1, 0]) == 1.0


@pytest.mark.parametrize("labels", [[0, 0, 0], [1, 1, 1]])
def test_single_class_auc(labels):
    with pytest.raises(ValueError, match="undefined"):
        auc([0.1, 0.2, 0.3], labels)


def test_ap_without_positives():
    with pytest.raises(ValueError):
        average_precision([0.1, 0.2], [0, 0])


def test_length_mismatch():
    with pytest.raises(ValueError, match="differ in length"):
        auc([0.1, 0.2], [0, 1, 1])


@pytest.mark.parametrize("trial", range(200))
def test_metrics_match_oracles(trial):
    rng = np.random.default_rng(trial)
    n = int(rng.integers(2, 51))
    labels = rng.integers(0, 2, n)
    labels[0], labels[1] = 1, 0
    # coarse scores so ties occur
    scores = rng.integers(0, 10, n) / 10.0

    assert abs(auc(scores, labels) - pair_count_auc(scores.tolist(), labels.tolist())) <= 1e-12
    assert abs(average_precision(scores, labels) - rank_walk_ap(scores.tolist(), labels.tolist())) <= 1e-12
    assert abs(trapezoid_area(roc_points(scores, labels)) - auc(scores, labels)) <= 1e-9


def test_matches_sklearn_on_distinct_scores():
    rng = np.random.default_rng(7)
    scores = rng.normal(size=300)
    labels = rng.random(300) < 0.1
    assert auc(scores, labels) == pytest.approx(roc_auc_score(labels, scores), abs=1e-12)
    assert average_precision(scores, labels) == pytest.approx(
        average_precision_score(labels, scores), abs=1e-12
    )


def test_auc_invariant_under_increasing_maps():
    rng = np.random.default_rng(3)
    scores = rng.normal(size=100)
    labels = rng.random(100) < 0.3
    base = auc(scores, labels)
    assert auc(np.exp(scores), labels) == base
    assert auc(3.5 * scores - 2.0, labels) == base


def test_auc_of_negated_scores():
    rng = np.random.default_rng(4)
    scores = rng.normal(size=100)
    labels = rng.random(100) < 0.3
    assert abs(auc(scores, labels) + auc(-scores, labels) - 1.0) < 1e-12


def test_roc_step_curve():
    points = roc_points([0.9, 0.1], [1, 0])
    assert [(f, t) for f, t, _ in points] == [(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]
    assert points[0][2] == math.inf


def test_roc_all_ties_is_diagonal():
    points = roc_points([0.5] * 4, [1, 0, 1, 0])
    assert [(f, t) for f, t, _ in points] == [(0.0, 0.0), (1.0, 1.0)]
    assert trapezoid_area(points) == 0.5


def test_roc_example_points():
    points = roc_points(SCORES, LABELS)
    assert points == [
        (0.0, 0.0, math.inf),
        (0.0, 0.5, 0.9),
        (0.5, 0.5, 0.8),
        (0.5, 1.0, 0.7),
        (1.0, 1.0, 0.1),
    ]


def test_roc_is_monotone():
    rng = np.random.default_rng(5)
    points = roc_points(rng.normal(size=100), rng.random(100) < 0.2)
    fpr = [p[0] for p in points]
    tpr = [p[1] for p in points]
    assert fpr == sorted(fpr)
    assert tpr == sorted(tpr)
    assert points[-1][:2] == (1.0, 1.0)


def test_per_type_structural_absent():
    labels = InjectionLabel(np.array([0, 1, 2, 0, 0]))
    contextual, structural = per_type_auc([0.1, 0.9, 0.8, 0.2, 0.3], labels)
    assert contextual == 1.0
    assert structural is None


def test_per_type_ties():
    labels = InjectionLabel(np.array([0, 1, 3, 0, 4, 2]))
    assert per_type_auc(np.ones(6), labels) == (0.5, 0.5)


def test_per_type_matches_filtered_subsets():
    rng = np.random.default_rng(6)
    tags = rng.integers(0, 5, 80)
    scores = rng.normal(size=80)
    contextual, structural = per_type_auc(scores, InjectionLabel(tags))

    keep = np.isin(tags, [0, 1, 2])
    assert contextual == auc(scores[keep], tags[keep] > 0)
    keep = np.isin(tags, [0, 3, 4])
    assert structural == auc(scores[keep], tags[keep] > 0)


def test_evaluate_report_fields():
    labels = InjectionLabel(np.array([1, 0, 3, 0]))
    report = evaluate(SCORES, labels)

    assert report.auc == 0.75
    assert report.positive_count == 2
    assert report.node_count == 4
    assert report.prevalence == 0.5
    assert report.contextual_auc == 1.0
    assert report.structural_auc == 0.5


def test_write_report(tmp_path):
    report = evaluate(SCORES, InjectionLabel(np.array([1, 0, 1, 0])))
    write_report(report, tmp_path / "report.json")

    data = json.loads((tmp_path / "report.json").read_text())
    assert data["auc"] == 0.75
    assert data["per_type_auc"] == {"contextual": 0.75}
    assert data["roc"][0] == {"fpr": 0.0, "tpr": 0.0, "threshold": None}
    assert data["roc"][-1]["threshold"] == 0.1


def test_report_omits_absent_types():
    data = EvalReport(auc=0.5, ap=0.5, positive_count=1, node_count=2).to_dict()
    assert data["per_type_auc"] == {}
    assert data["roc"] == []


def test_write_roc(tmp_path):
    write_roc(roc_points(SCORES, LABELS), tmp_path / "roc.csv")
    with (tmp_path / "roc.csv").open() as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["fpr", "tpr", "threshold"]
    assert rows[1] == ["0.0", "0.0", "inf"]
    assert len(rows) == 6
