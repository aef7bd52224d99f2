"""Contextual and structural anomaly injection into a clean text-attributed graph.

Four strategies plant m anomalies each:

1. contextual insert: a span of sentences from a dissimilar node is spliced in
2. contextual replace: sentences are swapped with a dissimilar node's sentences
3. cliques: groups of q nodes become fully connected
4. degree-sampled edges: a node gains as many random edges as a degree drawn
   from the original graph

All randomness comes from one generator seeded by the plan, consumed in the
order: insert targets, per-target (candidates, span start, boundary); replace
targets, per-target (candidates, positions, source sentences); clique groups;
random-edge targets, per-target (degree, new neighbors).
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import InjectionError
from .featurizer import FrozenFeatures
from .graph import AnomalyType, InjectionLabel, TagGraph

logger = logging.getLogger(__name__)

SENTENCE_BOUNDARY = re.compile(r"(?<=[.!?])(?:\s+|$)")


def split_sentences(text: str) -> list[str]:
    """Split after '.', '!' or '?' followed by whitespace or end of text; drop empty pieces."""
    return [s.strip() for s in SENTENCE_BOUNDARY.split(text) if s.strip()]


def join_sentences(sentences: list[str]) -> str:
    return " ".join(sentences)


@dataclass(frozen=True)
class InjectionPlan:
    """How many anomalies of each kind to plant.

    Attributes:
        total: Anomaly budget 4m
        candidate_k: Candidates examined per contextual target
        clique_size: Nodes per injected clique (q)
        seed: Seed of the single generator driving the injection
    """

    total: int
    candidate_k: int = 50
    clique_size: int = 15
    seed: int = 0

    def __post_init__(self) -> None:
        if self.total < 0 or self.total % 4:
            raise InjectionError(f"anomaly budget must be a nonnegative multiple of 4, got {self.total}")
        if self.candidate_k < 1:
            raise InjectionError(f"candidate_k must be >= 1, got {self.candidate_k}")
        if self.clique_size < 2:
            raise InjectionError(f"clique_size must be >= 2, got {self.clique_size}")

    @property
    def per_strategy(self) -> int:
        return self.total // 4

    @property
    def clique_count(self) -> int:
        return self.per_strategy // self.clique_size

    @classmethod
    def from_config(cls, config: RunConfig, node_count: int) -> InjectionPlan:
        """Plan from config; the default budget is anomaly_rate * n rounded to a multiple of 4."""
        total = config.anomaly_count
        if total is None:
            total = 4 * int(round(config.anomaly_rate * node_count / 4))
        return cls(total, config.candidate_k, config.clique_size, config.seed)


@dataclass
class InjectionReport:
    """Per-strategy counts and edits, serialized to report.json."""

    counts: dict[str, int] = field(default_factory=dict)
    edges_added: dict[str, int] = field(default_factory=dict)
    contextual_sources: list[dict[str, int]] = field(default_factory=list)
    cliques: list[dict[str, object]] = field(default_factory=list)
    degree_samples: list[dict[str, int]] = field(default_factory=list)
    truncations: list[dict[str, int]] = field(default_factory=list)

    def to_dict(self) -> dict[str, object]:
        return asdict(self)

    def write(self, path: Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


class WorkingGraph:
    """Mutable copy of a TagGraph used while injecting."""

    def __init__(self, graph: TagGraph):
        self.node_count = graph.node_count
        self.texts = list(graph.texts)
        self.adjacency = [set(graph.neighbors(u).tolist()) for u in range(graph.node_count)]
        self.original_ids = graph.original_ids
        self.labels = np.zeros(graph.node_count, dtype=np.int8)

    def add_edge(self, u: int, v: int) -> bool:
        if u == v or v in self.adjacency[u]:
            return False
        self.adjacency[u].add(v)
        self.adjacency[v].add(u)
        return True

    def unlabeled(self) -> np.ndarray:
        return np.flatnonzero(self.labels == 0)

    def take(self, count: int, rng: np.random.Generator, tag: AnomalyType) -> np.ndarray:
        pool = self.unlabeled()
        if count > len(pool):
            raise InjectionError(
                f"not enough unlabeled nodes: need {count}, have {len(pool)}"
            )
        chosen = rng.choice(pool, size=count, replace=False)
        self.labels[chosen] = tag
        return chosen

    def freeze(self) -> tuple[TagGraph, InjectionLabel]:
        edges = [(u, v) for u in range(self.node_count) for v in self.adjacency[u] if u < v]
        graph = TagGraph.from_edges(self.node_count, edges, self.texts, self.original_ids)
        return graph, InjectionLabel(self.labels)


def pick_dissimilar(target: int, candidates: list[int] | np.ndarray, features: np.ndarray) -> int:
    """Candidate with the lowest cosine similarity to ``target``; ties go to the lowest id.

    Raises:
        InjectionError: On an empty candidate list or an all-zero feature row
    """
    candidates = np.sort(np.asarray(candidates, dtype=np.int64))
    if len(candidates) == 0:
        raise InjectionError("no candidates to choose from")
    rows = np.asarray(features, dtype=np.float64)[np.concatenate([[target], candidates])]
    norms = np.linalg.norm(rows, axis=1)
    if (norms == 0).any():
        bad = ([target] + candidates.tolist())[int(np.argmin(norms))]
        raise InjectionError(f"degenerate feature: all-zero row for node {bad}")
    unit = rows / norms[:, None]
    similarity = unit[1:] @ unit[0]
    return int(candidates[int(np.argmin(similarity))])


def inject_contextual_insert(graph: TagGraph | WorkingGraph, target: int, source: int,
                             rng: np.random.Generator) -> str:
    """New text for ``target``: half of the source's sentences (at least one), as a
    contiguous span, inserted at a uniformly random sentence boundary."""
    target_text, source_text = graph.texts[target], graph.texts[source]
    inserted = split_sentences(source_text)
    if not inserted:
        raise InjectionError("source text has no sentences to insert")
    kept = split_sentences(target_text)
    span = max(1, len(inserted) // 2)
    start = int(rng.integers(0, len(inserted) - span + 1))
    boundary = int(rng.integers(0, len(kept) + 1))
    return join_sentences(kept[:boundary] + inserted[start : start + span] + kept[boundary:])


def inject_contextual_replace(graph: TagGraph | WorkingGraph, target: int, source: int,
                              rng: np.random.Generator) -> str:
    """New text for ``target`` with max(1, min(|S_i|, |S_j|) // 2) of its sentences,
    at uniformly chosen positions, replaced by distinct source sentences."""
    target_text, source_text = graph.texts[target], graph.texts[source]
    sentences = split_sentences(target_text)
    donors = split_sentences(source_text)
    if not sentences or not donors:
        raise InjectionError("contextual replace needs non-empty target and source texts")
    count = max(1, min(len(sentences), len(donors)) // 2)
    positions = np.sort(rng.choice(len(sentences), size=count, replace=False))
    picks = rng.choice(len(donors), size=count, replace=False)
    for position, pick in zip(positions, picks):
        sentences[int(position)] = donors[int(pick)]
    return join_sentences(sentences)


def _contextual(work: WorkingGraph, m: int, tag: AnomalyType, features: np.ndarray,
                plan: InjectionPlan, rng: np.random.Generator, report: InjectionReport) -> None:
    targets = work.take(m, rng, tag)
    for target in targets:
        pool = work.unlabeled()
        if len(pool) == 0:
            raise InjectionError("no unlabeled nodes left to source contextual anomalies from")
        k = min(plan.candidate_k, len(pool))
        candidates = rng.choice(pool, size=k, replace=False)
        source = pick_dissimilar(int(target), candidates, features)
        if tag == AnomalyType.CONTEXT_INSERT:
            text = inject_contextual_insert(work, int(target), source, rng)
        else:
            text = inject_contextual_replace(work, int(target), source, rng)
        work.texts[target] = text
        report.contextual_sources.append({"target": int(target), "source": source, "label": int(tag)})
        logger.debug(f"Contextual anomaly ({tag.name}) on node {target} from node {source}")


def inject_cliques(work: WorkingGraph, m: int, q: int,
                   rng: np.random.Generator) -> tuple[list[tuple[int, int]], np.ndarray, list[dict[str, object]]]:
    """Turn floor(m / q) disjoint groups of q unlabeled nodes into cliques.

    Returns:
        Tuple of (edges added, labeled nodes, per-group details)

    Raises:
        InjectionError: If q < 2, floor(m / q) < 1 or unlabeled nodes run out
    """
    if q < 2:
        raise InjectionError(f"clique size must be >= 2, got {q}")
    groups = m // q
    if groups < 1:
        raise InjectionError(f"budget {m} is smaller than one clique of size {q}")
    added: list[tuple[int, int]] = []
    details: list[dict[str, object]] = []
    labeled = []
    for _ in range(groups):
        members = np.sort(work.take(q, rng, AnomalyType.CLIQUE))
        existing = 0
        for a in range(q):
            for b in range(a + 1, q):
                u, v = int(members[a]), int(members[b])
                if work.add_edge(u, v):
                    added.append((u, v))
                else:
                    existing += 1
        details.append({
            "members": members.tolist(),
            "existing_internal_edges": existing,
            "edges_added": q * (q - 1) // 2 - existing,
        })
        labeled.extend(members.tolist())
        logger.debug(f"Clique of {q} node(s) with {existing} pre-existing internal edge(s)")
    return added, np.array(labeled, dtype=np.int64), details


def inject_degree_sampled_edges(
    work: WorkingGraph, m: int, rng: np.random.Generator, degree_multiset: np.ndarray
) -> tuple[list[tuple[int, int]], np.ndarray, list[dict[str, int]], list[dict[str, int]]]:
    """Connect each of m unlabeled targets to d random non-neighbors, d drawn from the original degrees.

    Returns:
        Tuple of (edges added, labeled nodes, per-target samples, truncations)
    """
    degree_multiset = np.asarray(degree_multiset, dtype=np.int64)
    if m and len(degree_multiset) == 0:
        raise InjectionError("empty degree multiset")
    targets = work.take(m, rng, AnomalyType.RANDOM_EDGE)
    added: list[tuple[int, int]] = []
    samples: list[dict[str, int]] = []
    truncations: list[dict[str, int]] = []
    everyone = np.arange(work.node_count)
    for target in targets:
        target = int(target)
        sampled = int(rng.choice(degree_multiset))
        blocked = np.fromiter(work.adjacency[target] | {target}, dtype=np.int64)
        available = np.setdiff1d(everyone, blocked, assume_unique=True)
        count = min(sampled, len(available))
        if count < sampled:
            truncations.append({"target": target, "sampled_degree": sampled, "edges_added": count})
            logger.warning(
                f"Node {target}: sampled degree {sampled} but only {len(available)} non-neighbor(s)"
            )
        for v in rng.choice(available, size=count, replace=False):
            work.add_edge(target, int(v))
            added.append((min(target, int(v)), max(target, int(v))))
        samples.append({"target": target, "sampled_degree": sampled, "edges_added": count})
    return added, np.sort(targets).astype(np.int64), samples, truncations


def sampling_degrees(graph: TagGraph) -> np.ndarray:
    """Original degree multiset used for strategy 4, isolated nodes included; a drawn 0 adds no edges."""
    return graph.degrees()


def run_injection(
    graph: TagGraph, plan: InjectionPlan, features: FrozenFeatures | np.ndarray
) -> tuple[TagGraph, InjectionLabel, InjectionReport]:
    """Plant all four anomaly kinds with disjoint targets.

    Clique slots that do not fill a whole clique (m - p*q) move to the
    degree-sampled strategy so exactly 4m nodes end up labeled.

    Raises:
        InjectionError: If the budget exceeds the node count or a sub-step fails
    """
    matrix = features.matrix if isinstance(features, FrozenFeatures) else np.asarray(features)
    if plan.total > graph.node_count:
        raise InjectionError(f"anomaly budget {plan.total} exceeds node count {graph.node_count}")
    if len(matrix) != graph.node_count:
        raise InjectionError(f"features have {len(matrix)} row(s) for {graph.node_count} node(s)")

    rng = np.random.default_rng(plan.seed)
    work = WorkingGraph(graph)
    report = InjectionReport()
    degree_multiset = sampling_degrees(graph)
    m = plan.per_strategy

    _contextual(work, m, AnomalyType.CONTEXT_INSERT, matrix, plan, rng, report)
    _contextual(work, m, AnomalyType.CONTEXT_REPLACE, matrix, plan, rng, report)

    clique_edges: list[tuple[int, int]] = []
    clique_nodes = np.empty(0, dtype=np.int64)
    if plan.clique_count >= 1:
        clique_edges, clique_nodes, report.cliques = inject_cliques(work, m, plan.clique_size, rng)
    random_quota = m + (m - len(clique_nodes))
    random_edges, random_nodes, report.degree_samples, report.truncations = (
        inject_degree_sampled_edges(work, random_quota, rng, degree_multiset)
    )

    report.counts = {
        AnomalyType.CONTEXT_INSERT.name.lower(): m,
        AnomalyType.CONTEXT_REPLACE.name.lower(): m,
        AnomalyType.CLIQUE.name.lower(): len(clique_nodes),
        AnomalyType.RANDOM_EDGE.name.lower(): len(random_nodes),
    }
    report.edges_added = {
        AnomalyType.CLIQUE.name.lower(): len(clique_edges),
        AnomalyType.RANDOM_EDGE.name.lower(): len(random_edges),
    }
    injected, labels = work.freeze()
    logger.info(
        f"Injected {int(labels.is_anomaly.sum())} anomal(ies): {report.counts}, "
        f"{sum(report.edges_added.values())} edge(s) added"
    )
    return injected, labels, report
