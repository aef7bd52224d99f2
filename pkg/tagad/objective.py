"""Contrastive views, InfoNCE and the joint cross-/uni-modal objective."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .encoders import EmbeddingSet
from .errors import ConfigError


@dataclass(frozen=True)
class ViewSpec:
    """One contrastive view: anchors of one table against targets of another."""

    name: str
    anchor: str
    target: str
    group: str

    @property
    def is_cross(self) -> bool:
        return self.group.startswith("cross")


# anchors come first; positives are matching row indices
VIEW_SPECS: tuple[ViewSpec, ...] = (
    ViewSpec("g2t-nn", "graph_node", "text_node", "cross_inner"),
    ViewSpec("g2t-cc", "graph_context", "text_context", "cross_inner"),
    ViewSpec("g2t-nc", "graph_node", "text_context", "cross_inter"),
    ViewSpec("g2t-cn", "graph_context", "text_node", "cross_inter"),
    ViewSpec("t2t-nc", "text_node", "text_context", "uni"),
    ViewSpec("g2g-nc", "graph_node", "graph_context", "uni"),
)

VIEW_GROUPS: dict[str, tuple[str, ...]] = {
    "full": ("cross_inner", "cross_inter", "uni"),
    "cross": ("cross_inner", "cross_inter"),
    "cross_inner": ("cross_inner",),
    "cross_inter": ("cross_inter",),
    "uni": ("uni",),
}


def _mirror(spec: ViewSpec) -> ViewSpec:
    anchor_mod, target_mod = spec.name[0], spec.name[2]
    scales = spec.name.split("-")[1]
    return ViewSpec(f"{target_mod}2{anchor_mod}-{scales[::-1]}", spec.target, spec.anchor, spec.group)


def select_views(views: str = "full", symmetric: bool = False) -> tuple[ViewSpec, ...]:
    """View specs enabled by a ``views`` setting, optionally with mirrored terms."""
    if views not in VIEW_GROUPS:
        raise ConfigError(f"Unknown view set '{views}'")
    chosen = tuple(s for s in VIEW_SPECS if s.group in VIEW_GROUPS[views])
    if symmetric:
        chosen = chosen + tuple(_mirror(s) for s in chosen)
    return chosen


def view_weight(spec: ViewSpec, gamma: float) -> float:
    return 1.0 if spec.is_cross else gamma


@dataclass(frozen=True, eq=False)
class ViewBundle:
    """Per-view N x N logits (already divided by tau) with their weights."""

    specs: tuple[ViewSpec, ...]
    logits: tuple[torch.Tensor, ...]
    weights: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.specs)

    def __getitem__(self, name: str) -> torch.Tensor:
        for spec, logits in zip(self.specs, self.logits):
            if spec.name == name:
                return logits
        raise KeyError(name)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.specs)


def similarity_matrix(anchors: torch.Tensor, targets: torch.Tensor, tau: float) -> torch.Tensor:
    """Entry (i, j) = <a_i, t_j> / tau; cosine similarity for unit rows."""
    if not tau > 0:
        raise ConfigError(f"tau must be positive, got {tau}")
    return anchors @ targets.T / tau


def info_nce(logits: torch.Tensor) -> torch.Tensor:
    """Mean over rows of logsumexp(row) - row[i, i]."""
    diagonal = torch.diagonal(logits)
    return (torch.logsumexp(logits, dim=1) - diagonal).mean()


def build_views(
    batch: np.ndarray,
    embeddings: EmbeddingSet,
    tau: float,
    gamma: float,
    specs: tuple[ViewSpec, ...] = VIEW_SPECS,
    uniform_weights: bool = False,
) -> ViewBundle:
    """Assemble the similarity matrices of every enabled view for one batch.

    Raises:
        ValueError: If the batch repeats a node (it would be its own negative)
    """
    batch = np.asarray(batch, dtype=np.int64)
    if len(np.unique(batch)) != len(batch):
        raise ValueError("duplicate node ids in batch")
    rows = embeddings.positions(batch)
    logits = tuple(
        similarity_matrix(
            embeddings.tables[s.anchor].values[rows],
            embeddings.tables[s.target].values[rows],
            tau,
        )
        for s in specs
    )
    weights = tuple(1.0 if uniform_weights else view_weight(s, gamma) for s in specs)
    return ViewBundle(specs, logits, weights)


def joint_loss(bundle: ViewBundle) -> torch.Tensor:
    """Sum of weighted InfoNCE terms: L_cross + gamma * L_uni."""
    terms = [w * info_nce(logits) for w, logits in zip(bundle.weights, bundle.logits)]
    return torch.stack(terms).sum()
