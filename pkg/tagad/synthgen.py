"""Seeded stochastic-block-model graphs with community-correlated text."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import build_dataclass, read_mapping
from .errors import ConfigError
from .graph import TagGraph

logger = logging.getLogger(__name__)

_ONSETS = ("b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z")
_NUCLEI = ("a", "e", "i", "o", "u")


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of a synthetic text-attributed graph."""

    node_count: int = 500
    communities: int = 4
    p_in: float = 0.05
    p_out: float = 0.002
    block_size: int = 60
    tokens_mean: int = 30
    tokens_jitter: int = 10
    sentence_length: int = 8
    noise: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.communities < 2:
            raise ConfigError(f"communities must be >= 2, got {self.communities}")
        if self.node_count < self.communities:
            raise ConfigError(
                f"node_count ({self.node_count}) must be >= communities ({self.communities})"
            )
        if not 0 <= self.p_out < self.p_in <= 1:
            raise ConfigError(f"need 0 <= p_out < p_in <= 1, got p_in={self.p_in}, p_out={self.p_out}")
        if self.block_size < 1 or self.tokens_mean < 1 or self.sentence_length < 1:
            raise ConfigError("block_size, tokens_mean and sentence_length must be positive")
        if not 0 <= self.tokens_jitter < self.tokens_mean:
            raise ConfigError(f"tokens_jitter must lie in [0, tokens_mean), got {self.tokens_jitter}")
        if not 0 <= self.noise <= 1:
            raise ConfigError(f"noise must lie in [0, 1], got {self.noise}")
        if self.seed < 0:
            raise ConfigError(f"seed must be nonnegative, got {self.seed}")


def load_spec(path: Path) -> SynthSpec:
    return build_dataclass(SynthSpec, read_mapping(path), str(path))


def pseudo_word(index: int) -> str:
    """Deterministic pronounceable word for a global vocabulary index (bijective)."""
    syllables = []
    base = len(_ONSETS) * len(_NUCLEI)
    value = index
    while True:
        value, digit = divmod(value, base)
        syllables.append(_ONSETS[digit // len(_NUCLEI)] + _NUCLEI[digit % len(_NUCLEI)])
        if value == 0:
            break
        value -= 1
    return "".join(reversed(syllables))


def community_of(node: int, communities: int) -> int:
    return node % communities


def vocabulary_block(community: int, block_size: int) -> list[str]:
    start = community * block_size
    return [pseudo_word(i) for i in range(start, start + block_size)]


def _render(tokens: list[str], sentence_length: int) -> str:
    sentences = []
    for start in range(0, len(tokens), sentence_length):
        chunk = tokens[start : start + sentence_length]
        sentences.append(chunk[0].capitalize() + "".join(" " + w for w in chunk[1:]) + ".")
    return " ".join(sentences)


def generate(spec: SynthSpec) -> TagGraph:
    """Draw a clean graph: round-robin communities, SBM edges, block-vocabulary text.

    Draw order: edges row by row (node i against every j > i), then for each
    node its text length, per-token noise coins and word choices.
    """
    rng = np.random.default_rng(spec.seed)
    n, c = spec.node_count, spec.communities
    membership = np.arange(n) % c

    sources, targets = [], []
    for i in range(n - 1):
        others = np.arange(i + 1, n)
        probs = np.where(membership[others] == membership[i], spec.p_in, spec.p_out)
        hits = others[rng.random(len(others)) < probs]
        sources.append(np.full(len(hits), i))
        targets.append(hits)
    edges = (
        np.stack([np.concatenate(sources), np.concatenate(targets)], axis=1)
        if sources else np.empty((0, 2), dtype=np.int64)
    )

    blocks = [vocabulary_block(k, spec.block_size) for k in range(c)]
    global_vocabulary = [w for block in blocks for w in block]
    texts = []
    for node in range(n):
        length = int(rng.integers(spec.tokens_mean - spec.tokens_jitter,
                                  spec.tokens_mean + spec.tokens_jitter + 1))
        noisy = rng.random(length) < spec.noise
        own = blocks[membership[node]]
        tokens = [
            global_vocabulary[rng.integers(len(global_vocabulary))] if is_noise
            else own[rng.integers(len(own))]
            for is_noise in noisy
        ]
        texts.append(_render(tokens, spec.sentence_length))

    graph = TagGraph.from_edges(n, edges, texts)
    logger.info(
        f"Generated synthetic graph: {n} node(s), {c} communities, {graph.edge_count} edge(s)"
    )
    return graph
