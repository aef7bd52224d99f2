"""Ranking metrics for anomaly scores: AUC, AP, per-type AUC and ROC points.

Ties: AUC gives half credit to tied positive/negative pairs; AP breaks ties
by ascending node id. All metrics are computed in double precision.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy.stats import rankdata

from .graph import CONTEXTUAL_TYPES, STRUCTURAL_TYPES, AnomalyType, InjectionLabel

logger = logging.getLogger(__name__)


def _binary(scores: Any, labels: Any) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(bool)
    if scores.shape != labels.shape:
        raise ValueError(f"scores ({scores.shape[0]}) and labels ({labels.shape[0]}) differ in length")
    return scores, labels


def auc(scores: Any, labels: Any) -> float:
    """Mann-Whitney AUC: (concordant + 0.5 * tied) / (P * N).

    Raises:
        ValueError: If labels hold a single class
    """
    scores, labels = _binary(scores, labels)
    positives = int(labels.sum())
    negatives = len(labels) - positives
    if positives == 0 or negatives == 0:
        raise ValueError("AUC undefined for single-class labels")
    ranks = rankdata(scores, method="average")
    u = ranks[labels].sum() - positives * (positives + 1) / 2
    return float(u / (positives * negatives))


def average_precision(scores: Any, labels: Any) -> float:
    """Mean precision@k over the ranks k of the positives (descending scores, ties by id).

    Raises:
        ValueError: If there are no positives
    """
    scores, labels = _binary(scores, labels)
    positives = int(labels.sum())
    if positives == 0:
        raise ValueError("average precision undefined without positives")
    order = np.lexsort((np.arange(len(scores)), -scores))
    hits = labels[order]
    precision = np.cumsum(hits) / np.arange(1, len(hits) + 1)
    return float(precision[hits].sum() / positives)


def _masked_auc(scores: np.ndarray, tags: np.ndarray, kinds: tuple[AnomalyType, ...]) -> float | None:
    keep = (tags == AnomalyType.NORMAL) | np.isin(tags, kinds)
    subset = tags[keep] != AnomalyType.NORMAL
    if not subset.any() or subset.all():
        return None
    return auc(scores[keep], subset)


def per_type_auc(scores: Any, labels: InjectionLabel) -> tuple[float | None, float | None]:
    """AUC per anomaly family with the other family's nodes removed.

    Returns:
        Tuple of (contextual auc, structural auc); an entry is None when that
        family (or the normal class) is absent
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if len(scores) != len(labels):
        raise ValueError(f"scores ({len(scores)}) and labels ({len(labels)}) differ in length")
    return (
        _masked_auc(scores, labels.tags, CONTEXTUAL_TYPES),
        _masked_auc(scores, labels.tags, STRUCTURAL_TYPES),
    )


def roc_points(scores: Any, labels: Any) -> list[tuple[float, float, float]]:
    """(fpr, tpr, threshold) from (0, 0, inf) through one point per distinct score.

    Each point counts nodes with score >= threshold as flagged, so the last
    point is (1, 1) at the lowest score.
    """
    scores, labels = _binary(scores, labels)
    positives = int(labels.sum())
    negatives = len(labels) - positives
    if positives == 0 or negatives == 0:
        raise ValueError("ROC undefined for single-class labels")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    tp = np.cumsum(labels[order])
    fp = np.cumsum(~labels[order])
    # last index of each run of equal scores
    ends = np.flatnonzero(np.append(sorted_scores[1:] != sorted_scores[:-1], True))
    points = [(0.0, 0.0, math.inf)]
    for end in ends:
        points.append((fp[end] / negatives, tp[end] / positives, float(sorted_scores[end])))
    return [(float(f), float(t), th) for f, t, th in points]


def trapezoid_area(points: list[tuple[float, float, float]]) -> float:
    fpr = np.array([p[0] for p in points])
    tpr = np.array([p[1] for p in points])
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2))


@dataclass
class EvalReport:
    """Metrics for one scored dataset."""

    auc: float
    ap: float
    positive_count: int
    node_count: int
    contextual_auc: float | None = None
    structural_auc: float | None = None
    roc: list[tuple[float, float, float]] = field(default_factory=list)

    @property
    def prevalence(self) -> float:
        return self.positive_count / self.node_count

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready mapping; absent per-type entries are omitted and the
        infinite starting threshold is written as null."""
        data: dict[str, Any] = {
            "auc": self.auc,
            "ap": self.ap,
            "positive_count": self.positive_count,
            "node_count": self.node_count,
        }
        per_type = {}
        if self.contextual_auc is not None:
            per_type["contextual"] = self.contextual_auc
        if self.structural_auc is not None:
            per_type["structural"] = self.structural_auc
        data["per_type_auc"] = per_type
        data["roc"] = [
            {"fpr": f, "tpr": t, "threshold": th if math.isfinite(th) else None}
            for f, t, th in self.roc
        ]
        return data


def evaluate(scores: Any, labels: InjectionLabel) -> EvalReport:
    """Bundle auc, ap, per-type aucs, counts and ROC points for ``scores``."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    binary = labels.is_anomaly
    contextual, structural = per_type_auc(scores, labels)
    report = EvalReport(
        auc=auc(scores, binary),
        ap=average_precision(scores, binary),
        positive_count=int(binary.sum()),
        node_count=len(scores),
        contextual_auc=contextual,
        structural_auc=structural,
        roc=roc_points(scores, binary),
    )
    logger.info(
        f"AUC {report.auc:.4f}, AP {report.ap:.4f} "
        f"({report.positive_count}/{report.node_count} anomalous)"
    )
    return report


def write_report(report: EvalReport, path: Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as handle:
        json.dump(report.to_dict(), handle, indent=2, sort_keys=True)
        handle.write("\n")


def write_roc(points: list[tuple[float, float, float]], path: Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["fpr", "tpr", "threshold"])
        for fpr, tpr, threshold in points:
            writer.writerow([repr(fpr), repr(tpr), repr(threshold)])
