"""Stage runners behind the CLI: inject, featurize, train, score, eval, bench and the sweeps.

Every stage reads its inputs from disk and writes its artifacts to a fresh
location; input directories are never modified.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import torch

from .config import RunConfig, log_config, save_config
from .encoders import BiModalModel, ModelInputs, load_checkpoint, save_checkpoint
from .errors import DatasetError, NumericError
from .evalkit import EvalReport, auc, evaluate, write_report, write_roc
from .featurizer import FrozenFeatures, hashed_features, load_external_features, save_features
from .graph import InjectionLabel, TagGraph, load_dataset_dir, read_labels, save_dataset
from .injector import InjectionPlan, InjectionReport, run_injection
from .scorer import ScoreRecord, aggregate, read_scores, round_scores, score_nodes, write_scores
from .trainer import STREAM_SCORING, TrainState, stream, train, write_loss_log

logger = logging.getLogger(__name__)

DATA_DIR = "data"
FEATURES_FILE = "features.tsv"
CHECKPOINT_FILE = "model.ckpt"
LOSS_LOG_FILE = "loss_log.csv"
SCORES_FILE = "scores.csv"
REPORT_FILE = "report.json"
ROC_FILE = "roc.csv"
CONFIG_FILE = "config.json"
INJECTION_REPORT_FILE = "report.json"
BENCH_FILE = "bench.json"
LAST_GOOD_SUFFIX = ".last_good"


@dataclass
class StageResult:
    """Outcome of one pipeline stage."""

    name: str
    seconds: float
    artifacts: list[Path] = field(default_factory=list)


def featurize(graph: TagGraph, config: RunConfig, features_path: Path | None = None,
              seed: int | None = None) -> FrozenFeatures:
    """External features when a file is given, hashed features otherwise."""
    if features_path is not None:
        return load_external_features(Path(features_path), graph)
    return hashed_features(graph, config.d_in, config.seed if seed is None else seed)


def run_inject(config: RunConfig, in_dir: Path, out_dir: Path) -> tuple[TagGraph, InjectionLabel, InjectionReport]:
    """Plant anomalies into the clean dataset at ``in_dir`` and save it to ``out_dir``.

    Dissimilarity for the contextual strategies is measured on hashed
    features of the clean graph.
    """
    in_dir, out_dir = Path(in_dir), Path(out_dir)
    if in_dir.resolve() == out_dir.resolve():
        raise DatasetError(f"inject output must differ from its input directory ({in_dir})")
    graph, _ = load_dataset_dir(in_dir)
    features = hashed_features(graph, config.d_in, config.seed)
    plan = InjectionPlan.from_config(config, graph.node_count)
    injected, labels, report = run_injection(graph, plan, features)
    save_dataset(injected, labels, out_dir)
    report.write(out_dir / INJECTION_REPORT_FILE)
    return injected, labels, report


def last_good_path(checkpoint: Path) -> Path:
    """Where the last finite weights go when training at ``checkpoint`` diverges."""
    checkpoint = Path(checkpoint)
    return checkpoint.with_name(checkpoint.name + LAST_GOOD_SUFFIX)


def _checkpoint_extra(config: RunConfig, features: FrozenFeatures) -> dict[str, Any]:
    return {"feature_seed": config.seed, "features": features.provenance.value}


def _train_or_save_last_good(graph: TagGraph, features: FrozenFeatures, config: RunConfig,
                             checkpoint: Path) -> TrainState:
    """Train; on divergence write the last finite weights beside ``checkpoint`` and re-raise."""
    try:
        return train(graph, features, config)
    except NumericError as e:
        if e.last_good is None:
            raise
        model = BiModalModel(config)
        model.load_state_dict(e.last_good)
        path = last_good_path(checkpoint)
        path.parent.mkdir(parents=True, exist_ok=True)
        save_checkpoint(model, path, extra=_checkpoint_extra(config, features))
        logger.error(f"Training diverged; last finite weights saved to {path}")
        raise


def run_train(config: RunConfig, data_dir: Path, out_path: Path,
              features_path: Path | None = None) -> TrainState:
    """Train on ``data_dir``; writes the checkpoint and loss_log.csv next to it.

    If training diverges, the last finite weights are saved to
    ``<out_path>.last_good`` before the NumericError propagates.
    """
    out_path = Path(out_path)
    graph, _ = load_dataset_dir(data_dir)
    features = featurize(graph, config, features_path)
    state = _train_or_save_last_good(graph, features, config, out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(state.model, out_path, extra=_checkpoint_extra(config, features))
    write_loss_log(state.losses, out_path.parent / LOSS_LOG_FILE)
    return state


def _model_features(model: BiModalModel, extra: dict[str, Any], graph: TagGraph,
                    features_path: Path | None) -> FrozenFeatures:
    seed = int(extra.get("feature_seed", model.config.seed))
    return featurize(graph, model.config, features_path, seed=seed)


def run_score(model_path: Path, data_dir: Path, out_path: Path, rounds: int | None = None,
              seed: int | None = None, features_path: Path | None = None) -> ScoreRecord:
    """Score every node of ``data_dir`` with a trained checkpoint."""
    model, extra = load_checkpoint(model_path)
    config = model.config
    changes: dict[str, Any] = {}
    if rounds is not None:
        changes["rounds"] = rounds
    if seed is not None:
        changes["seed"] = seed
    if changes:
        config = config.replace(**changes)
    log_config(config, explicit_seed=seed is not None)
    graph, _ = load_dataset_dir(data_dir)
    features = _model_features(model, extra, graph, features_path)
    record = score_nodes(model, graph, features, config=config)
    write_scores(record, Path(out_path))
    return record


def run_eval(scores_path: Path, labels_path: Path, out_path: Path,
             roc_path: Path | None = None) -> EvalReport:
    scores = read_scores(Path(scores_path))
    labels = read_labels(Path(labels_path), len(scores))
    report = evaluate(scores, labels)
    write_report(report, Path(out_path))
    if roc_path is not None:
        write_roc(report.roc, Path(roc_path))
    return report


def run_pipeline(config: RunConfig, data_dir: Path, out_dir: Path,
                 features_path: Path | None = None) -> tuple[EvalReport, list[StageResult]]:
    """inject -> featurize -> train -> score -> eval, with every artifact under ``out_dir``.

    Layout of ``out_dir``::

        config.json        resolved configuration
        data/              injected dataset plus the injection report.json
        features.tsv       frozen node features
        model.ckpt         trained checkpoint, with loss_log.csv
        scores.csv         per-node scores
        report.json        evaluation report, with roc.csv

    The first failing stage raises and nothing after it runs.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_config(config, out_dir / CONFIG_FILE)
    stages: list[StageResult] = []

    def _stage(name: str, started: float, *artifacts: Path) -> None:
        stages.append(StageResult(name, time.perf_counter() - started, list(artifacts)))
        logger.info(f"Stage '{name}' finished in {stages[-1].seconds:.2f}s")

    started = time.perf_counter()
    data = out_dir / DATA_DIR
    graph, labels, _ = run_inject(config, data_dir, data)
    _stage("inject", started, data)

    started = time.perf_counter()
    features = featurize(graph, config, features_path)
    save_features(features, out_dir / FEATURES_FILE)
    _stage("featurize", started, out_dir / FEATURES_FILE)

    started = time.perf_counter()
    state = _train_or_save_last_good(graph, features, config, out_dir / CHECKPOINT_FILE)
    save_checkpoint(state.model, out_dir / CHECKPOINT_FILE, extra=_checkpoint_extra(config, features))
    write_loss_log(state.losses, out_dir / LOSS_LOG_FILE)
    _stage("train", started, out_dir / CHECKPOINT_FILE, out_dir / LOSS_LOG_FILE)

    started = time.perf_counter()
    record = score_nodes(state.model, graph, features, config=config)
    write_scores(record, out_dir / SCORES_FILE)
    _stage("score", started, out_dir / SCORES_FILE)

    started = time.perf_counter()
    report = evaluate(record.score, labels)
    write_report(report, out_dir / REPORT_FILE)
    write_roc(report.roc, out_dir / ROC_FILE)
    _stage("eval", started, out_dir / REPORT_FILE, out_dir / ROC_FILE)
    return report, stages


def run_bench(config: RunConfig, data_dir: Path, out_path: Path,
              features_path: Path | None = None) -> dict[str, Any]:
    """Wall-clock timings of featurize, each training epoch and each scoring round.

    The stage keys are fixed; only the timing values vary between runs.
    """
    graph, _ = load_dataset_dir(data_dir)

    started = time.perf_counter()
    features = featurize(graph, config, features_path)
    featurize_seconds = time.perf_counter() - started

    state = train(graph, features, config)

    started = time.perf_counter()
    inputs = ModelInputs.prepare(graph, features, config)
    embeddings = state.model.embed_all(inputs).to(torch.float64)
    embed_seconds = time.perf_counter() - started

    round_seconds = []
    for r in range(config.rounds):
        started = time.perf_counter()
        round_scores(embeddings, config, stream(config.seed, STREAM_SCORING, r))
        round_seconds.append(time.perf_counter() - started)

    timings = {
        "node_count": graph.node_count,
        "edge_count": graph.edge_count,
        "epochs": config.epochs,
        "rounds": config.rounds,
        "stages": {
            "featurize": featurize_seconds,
            "train_epochs": state.epoch_seconds,
            "embed": embed_seconds,
            "score_rounds": round_seconds,
        },
        "totals": {
            "train": float(sum(state.epoch_seconds)),
            "score": float(embed_seconds + sum(round_seconds)),
        },
    }
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(timings, indent=2) + "\n", encoding="utf-8")
    logger.info(
        f"Bench: featurize {featurize_seconds:.2f}s, train {timings['totals']['train']:.2f}s, "
        f"score {timings['totals']['score']:.2f}s"
    )
    return timings


def sweep_rounds(model: BiModalModel, graph: TagGraph, features: FrozenFeatures,
                 labels: InjectionLabel, round_counts: list[int]) -> list[dict[str, float]]:
    """AUC of the aggregated score for each round count R.

    Rounds are drawn once up to max(R); each R aggregates the first R of them,
    so the curves for different R share their rounds.
    """
    if not round_counts or min(round_counts) < 1:
        raise ValueError(f"round counts must be positive, got {round_counts}")
    config = model.config.replace(rounds=max(round_counts))
    record = score_nodes(model, graph, features, config=config)
    binary = labels.is_anomaly
    rows = []
    for count in sorted(set(round_counts)):
        partial = aggregate(record.rounds[:count], config.estimator)
        rows.append({"rounds": count, "auc": auc(partial.score, binary)})
        logger.info(f"R={count}: AUC {rows[-1]['auc']:.4f}")
    return rows


def run_sweep_rounds(model_path: Path, data_dir: Path, round_counts: list[int],
                     out_path: Path | None = None,
                     features_path: Path | None = None) -> list[dict[str, float]]:
    model, extra = load_checkpoint(model_path)
    data_dir = Path(data_dir)
    graph, labels = load_dataset_dir(data_dir, require_labels=True)
    features = _model_features(model, extra, graph, features_path)
    rows = sweep_rounds(model, graph, features, labels, round_counts)
    if out_path is not None:
        Path(out_path).write_text(json.dumps(rows, indent=2) + "\n", encoding="utf-8")
    return rows


def sweep_gamma(config: RunConfig, graph: TagGraph, features: FrozenFeatures,
                labels: InjectionLabel, gammas: list[float]) -> list[dict[str, float]]:
    """AUC after training and scoring once per uni-modal weight γ.

    Every γ reuses ``config`` otherwise, seed included, so runs differ only in γ.
    """
    if not gammas or min(gammas) < 0:
        raise ValueError(f"gammas must be non-negative, got {gammas}")
    binary = labels.is_anomaly
    rows = []
    for gamma in sorted(set(gammas)):
        run_config = config.replace(gamma=gamma)
        state = train(graph, features, run_config)
        record = score_nodes(state.model, graph, features, config=run_config)
        rows.append({"gamma": gamma, "auc": auc(record.score, binary)})
        logger.info(f"gamma={gamma}: AUC {rows[-1]['auc']:.4f}")
    return rows


def run_sweep_gamma(config: RunConfig, data_dir: Path, gammas: list[float],
                    out_path: Path | None = None,
                    features_path: Path | None = None) -> list[dict[str, float]]:
    graph, labels = load_dataset_dir(Path(data_dir), require_labels=True)
    features = featurize(graph, config, features_path)
    rows = sweep_gamma(config, graph, features, labels, gammas)
    if out_path is not None:
        Path(out_path).write_text(json.dumps(rows, indent=2) + "\n", encoding="utf-8")
    return rows
