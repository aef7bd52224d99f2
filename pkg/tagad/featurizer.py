"""Tokenization and frozen initial node features.

Tokens are hashed with 64-bit FNV-1a over their UTF-8 bytes, so token ids do
not depend on the platform, the interpreter's hash seed or the locale.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
import torch

from .errors import DatasetError
from .graph import TagGraph

logger = logging.getLogger(__name__)

PAD_ID = 0
EOS_ID = 1
UNK_ID = 2
RESERVED_IDS = 3

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

# lowercase alphanumeric runs; underscore counts as a separator
WORD_PATTERN = re.compile(r"[^\W_]+")


def fnv1a_64(data: bytes) -> int:
    """64-bit FNV-1a hash."""
    value = FNV64_OFFSET
    for byte in data:
        value ^= byte
        value = (value * FNV64_PRIME) & _MASK64
    return value


def words(text: str) -> list[str]:
    return WORD_PATTERN.findall(text.lower())


def token_id(word: str, vocab_size: int) -> int:
    return RESERVED_IDS + fnv1a_64(word.encode("utf-8")) % (vocab_size - RESERVED_IDS)


@dataclass(frozen=True)
class TokenSequence:
    """Token ids of one text; the last entry is always EOS."""

    ids: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.ids)


def tokenize(text: str, vocab_size: int, max_len: int) -> TokenSequence:
    """Map text to hashed token ids, truncated to max_len - 1 and terminated by EOS."""
    if vocab_size < 4:
        raise ValueError(f"vocab_size must be >= 4, got {vocab_size}")
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    ids = [token_id(w, vocab_size) for w in words(text)[: max_len - 1]]
    ids.append(EOS_ID)
    return TokenSequence(tuple(ids))


@dataclass(frozen=True)
class TokenBatch:
    """Right-padded token matrix with per-row lengths (EOS sits at length - 1)."""

    ids: torch.Tensor
    lengths: torch.Tensor

    def select(self, rows: torch.Tensor | np.ndarray) -> TokenBatch:
        rows = torch.as_tensor(rows, dtype=torch.long)
        lengths = self.lengths[rows]
        width = int(lengths.max()) if len(rows) else 1
        return TokenBatch(self.ids[rows, :width], lengths)


def pad_sequences(sequences: list[TokenSequence], width: int | None = None) -> TokenBatch:
    """Stack token sequences into a PAD-filled matrix."""
    longest = max((len(s) for s in sequences), default=1)
    width = max(width or longest, longest)
    ids = torch.full((len(sequences), width), PAD_ID, dtype=torch.long)
    for row, seq in enumerate(sequences):
        ids[row, : len(seq)] = torch.tensor(seq.ids, dtype=torch.long)
    lengths = torch.tensor([len(s) for s in sequences], dtype=torch.long)
    return TokenBatch(ids, lengths)


def tokenize_graph(graph: TagGraph, vocab_size: int, max_len: int) -> TokenBatch:
    return pad_sequences([tokenize(t, vocab_size, max_len) for t in graph.texts])


class Provenance(str, Enum):
    HASHED = "hashed-fallback"
    EXTERNAL = "external-file"


@dataclass(frozen=True, eq=False)
class FrozenFeatures:
    """Fixed n x d_in node attributes fed to the graph encoder."""

    matrix: np.ndarray
    provenance: Provenance

    def __post_init__(self) -> None:
        if self.matrix.ndim != 2:
            raise DatasetError(f"features must be a matrix, got shape {self.matrix.shape}")
        if not np.isfinite(self.matrix).all():
            raise DatasetError("features contain non-finite entries")

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return self.matrix.shape[0]


def _sign_row(word_hash: int, d_in: int, seed: int) -> np.ndarray:
    # one row of the random sign projection, generated on demand per hashed word
    rng = np.random.default_rng([seed & _MASK64, word_hash])
    return rng.integers(0, 2, size=d_in).astype(np.float64) * 2.0 - 1.0


def hashed_features(graph: TagGraph, d_in: int = 768, seed: int = 0) -> FrozenFeatures:
    """Term-frequency vectors over hashed words, randomly sign-projected and L2-normalized.

    Empty texts (and the vanishingly rare all-cancelling projection) map to e0.
    """
    if d_in < 1:
        raise ValueError(f"d_in must be >= 1, got {d_in}")
    matrix = np.zeros((graph.node_count, d_in), dtype=np.float64)
    cache: dict[int, np.ndarray] = {}
    fallback = 0

    for node, text in enumerate(graph.texts):
        counts: dict[int, int] = {}
        for word in words(text):
            h = fnv1a_64(word.encode("utf-8"))
            counts[h] = counts.get(h, 0) + 1
        row = matrix[node]
        for h in sorted(counts):
            if h not in cache:
                cache[h] = _sign_row(h, d_in, seed)
            row += counts[h] * cache[h]
        norm = np.linalg.norm(row)
        if norm > 0:
            row /= norm
        else:
            row[:] = 0.0
            row[0] = 1.0
            fallback += 1

    if fallback:
        logger.debug(f"{fallback} node(s) fell back to the e0 feature row")
    logger.info(f"Hashed features: {graph.node_count} x {d_in} over {len(cache)} distinct word(s)")
    return FrozenFeatures(matrix, Provenance.HASHED)


def load_external_features(path: Path, graph: TagGraph) -> FrozenFeatures:
    """Read a tab-separated dense feature matrix with one row per node.

    Raises:
        DatasetError: On unparseable values, row count mismatch or non-finite entries
    """
    path = Path(path)
    try:
        matrix = np.loadtxt(path, delimiter="\t", dtype=np.float64, ndmin=2)
    except (OSError, ValueError) as e:
        raise DatasetError(f"Cannot parse features file {path}: {e}") from e
    if graph.node_count == 0:
        matrix = matrix.reshape(0, matrix.shape[1] if matrix.size else 1)
    if matrix.shape[0] != graph.node_count:
        raise DatasetError(
            f"{path}: dimension mismatch, {matrix.shape[0]} row(s) for {graph.node_count} node(s)"
        )
    if not np.isfinite(matrix).all():
        raise DatasetError(f"{path}: non-finite feature values")
    logger.info(f"Loaded external features {matrix.shape[0]} x {matrix.shape[1]} from {path}")
    return FrozenFeatures(matrix, Provenance.EXTERNAL)


def save_features(features: FrozenFeatures, path: Path) -> None:
    np.savetxt(Path(path), features.matrix, delimiter="\t", fmt="%.17g")
