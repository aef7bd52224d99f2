"""Text and graph encoders, neighborhood readout and model checkpoints.

Both encoders map into a shared ``embed_dim`` space and L2-normalize their
outputs. The graph encoder can evaluate any node subset exactly: it walks the
neighborhood closure outward one hop per GCN layer and slices the full-graph
normalized adjacency, so degrees always come from the whole graph.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import scipy.sparse as sp
import torch
import torch.nn.functional as F
from torch import nn

from .config import RunConfig, build_dataclass
from .errors import DatasetError
from .featurizer import FrozenFeatures, TokenBatch, tokenize_graph
from .graph import TagGraph

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = "TAGAD-CKPT"
CHECKPOINT_VERSION = 1

# below this norm a neighbor mean is treated as cancelled out
CANCEL_EPS = 1e-9

MODALITIES = ("text", "graph")
SCALES = ("node", "context")


def torch_dtype(precision: str) -> torch.dtype:
    return torch.float64 if precision == "float64" else torch.float32


def uniform_init_(module: nn.Module, generator: torch.Generator) -> None:
    """Seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every non-LayerNorm parameter.

    fan_in is the trailing dimension of a weight matrix; a bias uses the fan_in
    of its sibling weight.
    """
    for sub in module.modules():
        if isinstance(sub, nn.LayerNorm):
            continue
        params = dict(sub.named_parameters(recurse=False))
        for name, param in params.items():
            if param.dim() > 1:
                fan_in = param.shape[1]
            else:
                sibling = params.get(name.replace("bias", "weight"))
                fan_in = sibling.shape[1] if sibling is not None else param.shape[0]
            bound = 1.0 / math.sqrt(fan_in)
            with torch.no_grad():
                param.uniform_(-bound, bound, generator=generator)


class TextBlock(nn.Module):
    """Pre-norm transformer block: x + Attn(LN(x)), then x + FF(LN(x))."""

    def __init__(self, width: int, heads: int, ff_mult: int):
        super().__init__()
        self.norm_attn = nn.LayerNorm(width)
        self.attn = nn.MultiheadAttention(width, heads, dropout=0.0, batch_first=True)
        self.norm_ff = nn.LayerNorm(width)
        self.ff = nn.Sequential(
            nn.Linear(width, ff_mult * width),
            nn.ReLU(),
            nn.Linear(ff_mult * width, width),
        )

    def forward(self, x: torch.Tensor, padding_mask: torch.Tensor) -> torch.Tensor:
        h = self.norm_attn(x)
        attended, _ = self.attn(h, h, h, key_padding_mask=padding_mask, need_weights=False)
        x = x + attended
        return x + self.ff(self.norm_ff(x))


class TextEncoder(nn.Module):
    """Transformer over hashed tokens; the EOS hidden state is the node's text embedding."""

    def __init__(self, vocab_size: int, max_len: int, width: int, heads: int,
                 layers: int, embed_dim: int, ff_mult: int = 4):
        super().__init__()
        if width % heads:
            raise ValueError(f"width ({width}) must be divisible by heads ({heads})")
        self.token_embedding = nn.Embedding(vocab_size, width)
        self.position_embedding = nn.Parameter(torch.empty(max_len, width))
        self.blocks = nn.ModuleList(TextBlock(width, heads, ff_mult) for _ in range(layers))
        self.projection = nn.Linear(width, embed_dim, bias=False)

    def forward(self, tokens: TokenBatch) -> torch.Tensor:
        ids, lengths = tokens.ids, tokens.lengths
        seq_len = ids.shape[1]
        x = self.token_embedding(ids) + self.position_embedding[:seq_len]
        padding_mask = torch.arange(seq_len).unsqueeze(0) >= lengths.unsqueeze(1)
        for block in self.blocks:
            x = block(x, padding_mask)
        eos = x[torch.arange(len(ids)), lengths - 1]
        return F.normalize(self.projection(eos), dim=1)


def normalized_adjacency(graph: TagGraph) -> sp.csr_matrix:
    """D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I."""
    a_tilde = graph.adjacency_matrix() + sp.identity(graph.node_count, format="csr")
    inv_sqrt = 1.0 / np.sqrt(np.asarray(a_tilde.sum(axis=1)).ravel())
    scale = sp.diags(inv_sqrt)
    a_hat = (scale @ a_tilde @ scale).tocsr()
    a_hat.sort_indices()
    return a_hat


def _to_torch_sparse(matrix: sp.spmatrix, dtype: torch.dtype) -> torch.Tensor:
    coo = matrix.tocoo()
    indices = torch.from_numpy(np.vstack([coo.row, coo.col]).astype(np.int64))
    values = torch.from_numpy(coo.data).to(dtype)
    return torch.sparse_coo_tensor(indices, values, coo.shape).coalesce()


class GraphEncoder(nn.Module):
    """Input projection followed by residual GCN layers: X + ReLU(Â X W)."""

    def __init__(self, d_in: int, embed_dim: int, layers: int = 2):
        super().__init__()
        self.input_projection = nn.Linear(d_in, embed_dim, bias=False)
        self.layers = nn.ModuleList(nn.Linear(embed_dim, embed_dim, bias=False) for _ in range(layers))

    def closure(self, graph: TagGraph, targets: np.ndarray) -> list[np.ndarray]:
        """Sorted node sets feeding each layer; the last entry is ``targets`` sorted."""
        current = np.unique(targets)
        sets = [current]
        for _ in self.layers:
            hop = np.concatenate([current] + [graph.neighbors(int(u)) for u in current])
            current = np.unique(hop)
            sets.append(current)
        return sets[::-1]

    def forward_nodes(self, features: torch.Tensor, a_hat: sp.csr_matrix,
                      graph: TagGraph, targets: np.ndarray) -> tuple[np.ndarray, torch.Tensor]:
        """Exact embeddings for ``targets`` computed on their receptive field only.

        Returns:
            Tuple of (sorted target ids, row-aligned normalized embeddings)
        """
        sets = self.closure(graph, targets)
        x = self.input_projection(features[torch.from_numpy(sets[0])])
        for layer, (inputs, outputs) in zip(self.layers, zip(sets[:-1], sets[1:])):
            block = _to_torch_sparse(a_hat[outputs][:, inputs], x.dtype)
            residual = x[torch.from_numpy(np.searchsorted(inputs, outputs))]
            x = torch.relu(torch.sparse.mm(block, layer(x))) + residual
        return sets[-1], F.normalize(x, dim=1)

    def forward(self, features: torch.Tensor, a_hat: torch.Tensor) -> torch.Tensor:
        """Full-graph forward with a dense or sparse torch Â."""
        x = self.input_projection(features)
        for layer in self.layers:
            x = torch.relu(a_hat @ layer(x)) + x
        return F.normalize(x, dim=1)


def gcn_forward(encoder: GraphEncoder, features: FrozenFeatures, graph: TagGraph) -> torch.Tensor:
    """Node-level graph embeddings for every node."""
    dtype = encoder.input_projection.weight.dtype
    a_hat = _to_torch_sparse(normalized_adjacency(graph), dtype)
    return encoder(torch.from_numpy(features.matrix).to(dtype), a_hat)


def capped_neighbors(graph: TagGraph, node: int, max_neighbors: int | None, seed: int) -> np.ndarray:
    """Neighbor list, or a fixed seeded subset of it when the degree exceeds the cap."""
    nbrs = graph.neighbors(node)
    if max_neighbors is None or len(nbrs) <= max_neighbors:
        return nbrs
    rng = np.random.default_rng([seed, node])
    return np.sort(rng.choice(nbrs, size=max_neighbors, replace=False))


@dataclass(frozen=True)
class BatchNeighborhood:
    """Batch nodes, their 1-hop support set and the row-mean readout operator."""

    batch: np.ndarray
    support: np.ndarray
    batch_positions: np.ndarray
    readout: sp.csr_matrix


def build_neighborhood(graph: TagGraph, batch: np.ndarray,
                       max_neighbors: int | None = None, seed: int = 0) -> BatchNeighborhood:
    batch = np.asarray(batch, dtype=np.int64)
    neighbor_lists = [capped_neighbors(graph, int(u), max_neighbors, seed) for u in batch]
    support = np.unique(np.concatenate([batch, *neighbor_lists]))
    rows, cols, vals = [], [], []
    for row, nbrs in enumerate(neighbor_lists):
        if len(nbrs):
            rows.extend([row] * len(nbrs))
            cols.extend(np.searchsorted(support, nbrs).tolist())
            vals.extend([1.0 / len(nbrs)] * len(nbrs))
    readout = sp.csr_matrix((vals, (rows, cols)), shape=(len(batch), len(support)))
    return BatchNeighborhood(batch, support, np.searchsorted(support, batch), readout)


def readout_rows(node_embeddings: torch.Tensor, readout: sp.csr_matrix,
                 own_positions: np.ndarray) -> torch.Tensor:
    """Normalized neighbor means; isolated or cancelled rows fall back to the node's own embedding."""
    mean = torch.sparse.mm(_to_torch_sparse(readout, node_embeddings.dtype), node_embeddings)
    norms = mean.norm(dim=1, keepdim=True)
    own = node_embeddings[torch.from_numpy(own_positions)]
    context = torch.where(norms < CANCEL_EPS, own, mean / norms.clamp_min(CANCEL_EPS))
    return F.normalize(context, dim=1)


def readout_context(node_embeddings: torch.Tensor, graph: TagGraph,
                    max_neighbors: int | None = None, seed: int = 0) -> torch.Tensor:
    """Context-level embeddings for all nodes from full node-level embeddings."""
    hood = build_neighborhood(graph, np.arange(graph.node_count), max_neighbors, seed)
    return readout_rows(node_embeddings, hood.readout, hood.batch_positions)


@dataclass(frozen=True)
class EmbeddingTable:
    """Embedding rows for one modality and one scale."""

    values: torch.Tensor
    modality: str
    scale: str
    normalized: bool = True

    @property
    def key(self) -> str:
        return f"{self.modality}_{self.scale}"


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    """The four embedding tables, row-aligned with ``node_ids``."""

    node_ids: np.ndarray
    tables: dict[str, EmbeddingTable]

    @classmethod
    def from_tensors(cls, node_ids: np.ndarray, text_node: torch.Tensor, text_context: torch.Tensor,
                     graph_node: torch.Tensor, graph_context: torch.Tensor) -> EmbeddingSet:
        tables = [
            EmbeddingTable(text_node, "text", "node"),
            EmbeddingTable(text_context, "text", "context"),
            EmbeddingTable(graph_node, "graph", "node"),
            EmbeddingTable(graph_context, "graph", "context"),
        ]
        return cls(np.asarray(node_ids, dtype=np.int64), {t.key: t for t in tables})

    def table(self, modality: str, scale: str) -> EmbeddingTable:
        return self.tables[f"{modality}_{scale}"]

    def positions(self, ids: np.ndarray) -> torch.Tensor:
        lookup = {int(n): i for i, n in enumerate(self.node_ids)}
        try:
            return torch.tensor([lookup[int(i)] for i in ids], dtype=torch.long)
        except KeyError as e:
            raise ValueError(f"node {e.args[0]} has no embedding row") from e

    def to(self, dtype: torch.dtype) -> EmbeddingSet:
        return EmbeddingSet(
            self.node_ids,
            {k: EmbeddingTable(t.values.detach().to(dtype), t.modality, t.scale, t.normalized)
             for k, t in self.tables.items()},
        )


@dataclass(frozen=True, eq=False)
class ModelInputs:
    """Everything about a dataset the encoders read, prepared once."""

    graph: TagGraph
    tokens: TokenBatch
    features: torch.Tensor
    a_hat: sp.csr_matrix

    @classmethod
    def prepare(cls, graph: TagGraph, features: FrozenFeatures, config: RunConfig) -> ModelInputs:
        if len(features) != graph.node_count:
            raise DatasetError(
                f"features have {len(features)} row(s) but graph has {graph.node_count} node(s)"
            )
        if features.dim != config.d_in:
            raise DatasetError(f"features have dimension {features.dim}, config expects d_in={config.d_in}")
        return cls(
            graph=graph,
            tokens=tokenize_graph(graph, config.vocab_size, config.max_len),
            features=torch.from_numpy(features.matrix).to(torch_dtype(config.precision)),
            a_hat=normalized_adjacency(graph),
        )


class BiModalModel(nn.Module):
    """Text and graph encoders trained jointly into one embedding space."""

    def __init__(self, config: RunConfig):
        super().__init__()
        self.config = config
        self.text = TextEncoder(
            vocab_size=config.vocab_size,
            max_len=config.max_len,
            width=config.text_width,
            heads=config.text_heads,
            layers=config.text_layers,
            embed_dim=config.embed_dim,
            ff_mult=config.text_ff_mult,
        )
        self.graph = GraphEncoder(config.d_in, config.embed_dim, config.graph_layers)
        generator = torch.Generator().manual_seed(config.seed)
        uniform_init_(self, generator)
        self.to(torch_dtype(config.precision))

    def embed(self, batch: np.ndarray, inputs: ModelInputs) -> EmbeddingSet:
        """Node- and context-level embeddings of both modalities for ``batch``.

        Only the batch's 1-hop support (and, for the GCN, its receptive
        field) is encoded.
        """
        hood = build_neighborhood(inputs.graph, batch, self.config.max_neighbors, self.config.seed)
        text_nodes = self.text(inputs.tokens.select(hood.support))
        _, graph_nodes = self.graph.forward_nodes(inputs.features, inputs.a_hat, inputs.graph, hood.support)

        own = torch.from_numpy(hood.batch_positions)
        return EmbeddingSet.from_tensors(
            hood.batch,
            text_node=text_nodes[own],
            text_context=readout_rows(text_nodes, hood.readout, hood.batch_positions),
            graph_node=graph_nodes[own],
            graph_context=readout_rows(graph_nodes, hood.readout, hood.batch_positions),
        )

    @torch.no_grad()
    def embed_all(self, inputs: ModelInputs, chunk_size: int = 256) -> EmbeddingSet:
        """Embeddings for every node without gradient tracking."""
        n = inputs.graph.node_count
        text_nodes = torch.cat([
            self.text(inputs.tokens.select(np.arange(start, min(start + chunk_size, n))))
            for start in range(0, n, chunk_size)
        ]) if n else torch.empty(0, self.config.embed_dim)
        a_hat = _to_torch_sparse(inputs.a_hat, inputs.features.dtype)
        graph_nodes = self.graph(inputs.features, a_hat)

        hood = build_neighborhood(inputs.graph, np.arange(n), self.config.max_neighbors, self.config.seed)
        return EmbeddingSet.from_tensors(
            np.arange(n),
            text_node=text_nodes,
            text_context=readout_rows(text_nodes, hood.readout, hood.batch_positions),
            graph_node=graph_nodes,
            graph_context=readout_rows(graph_nodes, hood.readout, hood.batch_positions),
        )


def save_checkpoint(model: BiModalModel, path: Path, extra: dict[str, Any] | None = None) -> None:
    """Write a versioned checkpoint.

    Layout (a ``torch.save`` dictionary):
        magic: "TAGAD-CKPT"
        version: 1
        config: RunConfig as a plain dict
        state_dict: parameter name -> tensor (shapes travel with the tensors)
        extra: optional caller metadata
    """
    payload = {
        "magic": CHECKPOINT_MAGIC,
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "state_dict": model.state_dict(),
        "extra": extra or {},
    }
    torch.save(payload, Path(path))
    logger.info(f"Saved checkpoint to {path}")


def load_checkpoint(path: Path) -> tuple[BiModalModel, dict[str, Any]]:
    """Rebuild a model from a checkpoint.

    Raises:
        DatasetError: If the file is not a tagad checkpoint of a supported version
    """
    path = Path(path)
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as e:
        raise DatasetError(f"Cannot read checkpoint {path}: {e}") from e
    if not isinstance(payload, dict) or payload.get("magic") != CHECKPOINT_MAGIC:
        raise DatasetError(f"{path} is not a tagad checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise DatasetError(f"{path}: unsupported checkpoint version {payload.get('version')}")

    config = build_dataclass(RunConfig, payload["config"], str(path))
    model = BiModalModel(config)
    model.load_state_dict(payload["state_dict"])
    logger.info(f"Loaded checkpoint from {path}")
    return model, payload.get("extra", {})
