"""Mini-batch training of both encoders and a finite-difference gradient checker."""

from __future__ import annotations

import csv
import logging
import math
import time
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import torch

from .config import RunConfig
from .encoders import BiModalModel, ModelInputs
from .errors import NumericError
from .featurizer import FrozenFeatures, hashed_features
from .graph import TagGraph
from .objective import build_views, joint_loss, select_views
from .synthgen import SynthSpec, generate

logger = logging.getLogger(__name__)

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8

# spawn keys separating the random streams derived from one seed
STREAM_BATCHES = 1
STREAM_SCORING = 2


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for (seed, key...)."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def make_batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffle 0..n-1 into chunks of ``batch_size``; a trailing singleton joins the previous chunk.

    Raises:
        ValueError: If n < 2 or batch_size < 2
    """
    if n < 2:
        raise ValueError(f"need at least 2 nodes to form contrastive batches, got {n}")
    if batch_size < 2:
        raise ValueError(f"batch_size must be >= 2, got {batch_size}")
    order = rng.permutation(n)
    batches = [order[i : i + batch_size] for i in range(0, n, batch_size)]
    if len(batches) > 1 and len(batches[-1]) == 1:
        tail = batches.pop()
        batches[-1] = np.concatenate([batches[-1], tail])
    return batches


@dataclass(frozen=True)
class LossRecord:
    epoch: int
    batch: int
    loss: float


@dataclass
class TrainState:
    """Model, optimizer moments, counters and the batching RNG."""

    model: BiModalModel
    optimizer: torch.optim.Adam
    rng: np.random.Generator
    step: int = 0
    epoch: int = 0
    losses: list[LossRecord] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)


def batch_loss(model: BiModalModel, inputs: ModelInputs, batch: np.ndarray) -> torch.Tensor:
    config = model.config
    embeddings = model.embed(batch, inputs)
    bundle = build_views(
        batch,
        embeddings,
        config.tau,
        config.gamma,
        select_views(config.views, config.symmetric_views),
    )
    return joint_loss(bundle)


def _all_finite(model: BiModalModel) -> bool:
    return all(torch.isfinite(p).all() for p in model.parameters())


@torch.no_grad()
def _refresh(buffer: dict[str, torch.Tensor], model: BiModalModel) -> None:
    for name, value in model.state_dict().items():
        buffer[name].copy_(value)


def _snapshot(buffer: dict[str, torch.Tensor]) -> dict[str, torch.Tensor]:
    return {name: value.clone() for name, value in buffer.items()}


def train(
    graph: TagGraph,
    features: FrozenFeatures,
    config: RunConfig,
    on_epoch: Callable[[TrainState], None] | None = None,
) -> TrainState:
    """Optimize the joint objective with Adam over shuffled mini-batches.

    Args:
        graph: Dataset graph
        features: Frozen node features for the graph encoder
        config: Run configuration (seed, lr, epochs, batch size, ...)
        on_epoch: Optional callback invoked after every epoch

    Returns:
        Final TrainState, including the per-batch loss log

    Raises:
        NumericError: If a loss or parameter becomes non-finite; carries the
            last finite state_dict
    """
    if graph.node_count < 2:
        raise ValueError(f"training needs at least 2 nodes, got {graph.node_count}")

    model = BiModalModel(config)
    inputs = ModelInputs.prepare(graph, features, config)
    optimizer = torch.optim.Adam(
        model.parameters(), lr=config.learning_rate, betas=ADAM_BETAS, eps=ADAM_EPS
    )
    state = TrainState(model=model, optimizer=optimizer, rng=stream(config.seed, STREAM_BATCHES))
    logger.info(
        f"Training on {graph.node_count} node(s): epochs={config.epochs}, "
        f"batch_size={config.batch_size}, lr={config.learning_rate}, views={config.views}"
    )

    # allocated once, refreshed in place after every finite step
    last_good = {k: v.detach().clone() for k, v in model.state_dict().items()}

    for epoch in range(config.epochs):
        started = time.perf_counter()
        batches = make_batches(graph.node_count, config.batch_size, state.rng)
        for index, batch in enumerate(batches):
            optimizer.zero_grad()
            loss = batch_loss(model, inputs, batch)
            value = float(loss.detach())
            if not math.isfinite(value):
                raise NumericError(
                    f"loss diverged at epoch {epoch}, batch {index} (value {value})",
                    _snapshot(last_good),
                )
            loss.backward()
            optimizer.step()
            if not _all_finite(model):
                raise NumericError(
                    f"non-finite parameters after epoch {epoch}, batch {index}", _snapshot(last_good)
                )
            _refresh(last_good, model)
            state.step += 1
            state.losses.append(LossRecord(epoch, index, value))
            logger.debug(f"epoch {epoch} batch {index}/{len(batches)} loss {value:.6f}")

        state.epoch = epoch + 1
        state.epoch_seconds.append(time.perf_counter() - started)
        epoch_losses = [r.loss for r in state.losses if r.epoch == epoch]
        logger.info(f"Epoch {epoch + 1}/{config.epochs} mean loss {np.mean(epoch_losses):.6f}")
        if on_epoch is not None:
            on_epoch(state)

    return state


def write_loss_log(losses: list[LossRecord], path: Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["epoch", "batch", "loss"])
        for record in losses:
            writer.writerow([record.epoch, record.batch, repr(record.loss)])


GRAD_CHECK_STEP = 1e-4


def tiny_config(**overrides: Any) -> RunConfig:
    """Small double-precision configuration used for derivative checks."""
    values: dict[str, Any] = dict(
        batch_size=4, embed_dim=8, text_layers=1, text_width=8, text_heads=2,
        text_ff_mult=2, max_len=12, vocab_size=64, graph_layers=2, d_in=16,
        precision="float64",
    )
    values.update(overrides)
    return RunConfig(**values)


def tiny_problem(config: RunConfig, node_count: int = 8) -> tuple[TagGraph, FrozenFeatures]:
    """A small deterministic text-attributed graph for ``config``."""
    spec = SynthSpec(
        node_count=node_count, communities=2, p_in=0.8, p_out=0.1,
        block_size=6, tokens_mean=6, tokens_jitter=2, noise=0.1, seed=config.seed,
    )
    graph = generate(spec)
    return graph, hashed_features(graph, config.d_in, config.seed)


def loss_and_gradients(
    model: BiModalModel, inputs: ModelInputs, batch: np.ndarray
) -> tuple[float, dict[str, torch.Tensor]]:
    model.zero_grad()
    loss = batch_loss(model, inputs, batch)
    loss.backward()
    grads = {
        name: (p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p))
        for name, p in model.named_parameters()
    }
    return float(loss.detach()), grads


def grad_check(
    config: RunConfig,
    sample_count: int = 64,
    node_count: int = 8,
    step: float = GRAD_CHECK_STEP,
) -> float:
    """Max relative error between autograd and central-difference derivatives.

    Checks ``sample_count`` scalar parameters chosen uniformly over all
    parameter entries; relative error is |a - f| / max(1, |a|, |f|).
    """
    if config.precision != "float64":
        config = config.replace(precision="float64")
    graph, features = tiny_problem(config, node_count)
    model = BiModalModel(config)
    inputs = ModelInputs.prepare(graph, features, config)
    batch = make_batches(graph.node_count, config.batch_size, stream(config.seed, STREAM_BATCHES))[0]

    _, grads = loss_and_gradients(model, inputs, batch)
    named = list(model.named_parameters())
    sizes = np.array([p.numel() for _, p in named])
    rng = np.random.default_rng(config.seed)
    flat_choices = rng.choice(int(sizes.sum()), size=sample_count, replace=sample_count > sizes.sum())
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    worst = 0.0
    with torch.no_grad():
        for flat in flat_choices:
            which = int(np.searchsorted(offsets, flat, side="right") - 1)
            name, param = named[which]
            index = tuple(int(i) for i in np.unravel_index(int(flat - offsets[which]), tuple(param.shape)))
            original = param[index].item()

            param[index] = original + step
            plus = float(batch_loss(model, inputs, batch))
            param[index] = original - step
            minus = float(batch_loss(model, inputs, batch))
            param[index] = original

            numeric = (plus - minus) / (2 * step)
            analytic = float(grads[name][index])
            error = abs(analytic - numeric) / max(1.0, abs(analytic), abs(numeric))
            if error > worst:
                logger.debug(f"{name}{index}: analytic {analytic:.3e} numeric {numeric:.3e}")
            worst = max(worst, error)

    logger.info(f"Gradient check over {sample_count} parameter(s): max relative error {worst:.3e}")
    return worst
