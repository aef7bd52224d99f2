"""Train-free anomaly scores from per-view contrastive inconsistency.

A node's score in one view is s_neg - s_pos + C, where s_pos is its positive
logit, s_neg the mean of its negative logits and C its cross-entropy term.
Views are summed with the training weights; R re-batched rounds are then
aggregated as mean plus population standard deviation.
"""

from __future__ import annotations

import csv
import logging
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from scipy.special import logsumexp

from .config import RunConfig
from .errors import DatasetError
from .encoders import BiModalModel, EmbeddingSet, ModelInputs
from .featurizer import FrozenFeatures
from .graph import TagGraph
from .objective import build_views, select_views
from .trainer import STREAM_SCORING, make_batches, stream

logger = logging.getLogger(__name__)


def view_score(row: np.ndarray, index: int, weight: float = 1.0, entropy: bool = True) -> float:
    """Weighted inconsistency of one logits row whose positive sits at ``index``.

    Raises:
        ValueError: If the row has fewer than 2 entries
    """
    row = np.asarray(row, dtype=np.float64)
    if len(row) < 2:
        raise ValueError("view_score needs N >= 2 (no negatives otherwise)")
    positive = row[index]
    negative = (row.sum() - positive) / (len(row) - 1)
    cross_entropy = logsumexp(row) - positive if entropy else 0.0
    return float(weight * (negative - positive + cross_entropy))


def view_scores(logits: np.ndarray, weight: float = 1.0, entropy: bool = True) -> np.ndarray:
    """``view_score`` for every row of an N x N logits matrix."""
    logits = np.asarray(logits, dtype=np.float64)
    n = logits.shape[0]
    if n < 2:
        raise ValueError("view_score needs N >= 2 (no negatives otherwise)")
    positive = np.diagonal(logits)
    negative = (logits.sum(axis=1) - positive) / (n - 1)
    scores = negative - positive
    if entropy:
        scores = scores + logsumexp(logits, axis=1) - positive
    return weight * scores


@dataclass(frozen=True, eq=False)
class ScoreRecord:
    """Per-round scores (R x n) and their aggregates.

    ``score`` is the estimator's output: mean + std by default, or one of
    the two alone for the consistency-only / stability-only variants.
    """

    rounds: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    score: np.ndarray

    @property
    def round_count(self) -> int:
        return self.rounds.shape[0]


def aggregate(per_round: np.ndarray, estimator: str = "full") -> ScoreRecord:
    """Mean and population standard deviation across rounds (axis 0)."""
    per_round = np.asarray(per_round, dtype=np.float64)
    if per_round.ndim != 2:
        raise ValueError(f"per-round scores must be (rounds, nodes), got shape {per_round.shape}")
    if per_round.shape[0] < 1:
        raise ValueError("aggregate needs at least one round")
    mean = per_round.mean(axis=0)
    std = np.sqrt(((per_round - mean) ** 2).mean(axis=0))
    if estimator == "full":
        score = mean + std
    elif estimator == "cons":
        score = mean
    elif estimator == "stab":
        score = std
    else:
        raise ValueError(f"unknown estimator '{estimator}'")
    return ScoreRecord(per_round, mean, std, score)


def round_scores(
    embeddings: EmbeddingSet,
    config: RunConfig,
    rng: np.random.Generator,
    batch_size: int | None = None,
) -> np.ndarray:
    """One scoring round: re-batch all nodes and sum weighted view scores per node."""
    n = len(embeddings.node_ids)
    batch_size = batch_size or config.scoring_batch_size
    specs = select_views(config.views, config.symmetric_views)
    scores = np.zeros(n, dtype=np.float64)
    for batch in make_batches(n, batch_size, rng):
        bundle = build_views(
            batch, embeddings, config.tau, config.gamma, specs,
            uniform_weights=config.score_uniform_weights,
        )
        for weight, logits in zip(bundle.weights, bundle.logits):
            scores[batch] += view_scores(logits.double().numpy(), weight, config.score_entropy)
    return scores


def score_nodes(
    model: BiModalModel,
    graph: TagGraph,
    features: FrozenFeatures,
    rounds: int | None = None,
    config: RunConfig | None = None,
    on_round: Callable[[int], None] | None = None,
) -> ScoreRecord:
    """Score every node over ``rounds`` rounds; round r draws from stream (seed, r).

    Embeddings do not depend on batch composition, so they are computed once
    and only the batching changes between rounds.
    """
    config = config or model.config
    rounds = config.rounds if rounds is None else rounds
    if rounds < 1:
        raise ValueError(f"rounds must be >= 1, got {rounds}")
    inputs = ModelInputs.prepare(graph, features, config)
    embeddings = model.embed_all(inputs).to(torch.float64)

    per_round = np.empty((rounds, graph.node_count), dtype=np.float64)
    for r in range(rounds):
        per_round[r] = round_scores(embeddings, config, stream(config.seed, STREAM_SCORING, r))
        if on_round is not None:
            on_round(r)
    logger.info(f"Scored {graph.node_count} node(s) over {rounds} round(s)")
    return aggregate(per_round, config.estimator)


def write_scores(record: ScoreRecord, path: Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["id", "score", "mean", "std"])
        for node, (score, mean, std) in enumerate(zip(record.score, record.mean, record.std)):
            writer.writerow([node, repr(float(score)), repr(float(mean)), repr(float(std))])


def read_scores(path: Path) -> np.ndarray:
    """Scores column of a scores.csv, indexed by node id."""
    path = Path(path)
    with path.open(encoding="utf-8", newline="") as handle:
        rows = list(csv.DictReader(handle))
    scores = np.full(len(rows), np.nan)
    try:
        for row in rows:
            scores[int(row["id"])] = float(row["score"])
    except (KeyError, ValueError, IndexError) as e:
        raise DatasetError(f"{path}: malformed scores file: {e}") from e
    if np.isnan(scores).any():
        raise DatasetError(f"{path}: node ids must cover 0..{len(rows) - 1} exactly once")
    return scores
