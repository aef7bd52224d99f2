"""Text-attributed graph data model, ground-truth labels and dataset file IO."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import DatasetError

logger = logging.getLogger(__name__)

NODES_FILE = "nodes.jsonl"
EDGES_FILE = "edges.tsv"
LABELS_FILE = "labels.csv"
IDMAP_FILE = "idmap.csv"


class AnomalyType(IntEnum):
    """Per-node ground-truth tag."""

    NORMAL = 0
    CONTEXT_INSERT = 1
    CONTEXT_REPLACE = 2
    CLIQUE = 3
    RANDOM_EDGE = 4


CONTEXTUAL_TYPES = (AnomalyType.CONTEXT_INSERT, AnomalyType.CONTEXT_REPLACE)
STRUCTURAL_TYPES = (AnomalyType.CLIQUE, AnomalyType.RANDOM_EDGE)


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class TagGraph:
    """Immutable simple undirected graph with raw text on every node.

    Adjacency is stored in compressed sparse row form: the neighbors of node
    ``u`` are ``indices[indptr[u]:indptr[u + 1]]``, sorted ascending.

    Attributes:
        node_count: Number of nodes; ids are dense integers 0..node_count-1
        texts: Raw text per node (empty string allowed)
        indptr: Row pointer array of length node_count + 1
        indices: Concatenated sorted neighbor lists
        original_ids: Source ids when the loader remapped sparse ids, else None
    """

    node_count: int
    texts: tuple[str, ...]
    indptr: np.ndarray
    indices: np.ndarray
    original_ids: tuple[int, ...] | None = field(default=None)

    @classmethod
    def from_edges(
        cls,
        node_count: int,
        edges: np.ndarray | list[tuple[int, int]],
        texts: list[str] | tuple[str, ...] | None = None,
        original_ids: tuple[int, ...] | None = None,
    ) -> TagGraph:
        """Build a validated graph from an edge list.

        Reversed and repeated pairs collapse to a single undirected edge.

        Raises:
            DatasetError: On self-loops, out-of-range ids or a text count mismatch
        """
        if node_count < 0:
            raise DatasetError(f"node_count must be nonnegative, got {node_count}")
        if texts is None:
            texts = [""] * node_count
        if len(texts) != node_count:
            raise DatasetError(
                f"texts has {len(texts)} entries but node_count is {node_count}"
            )

        pairs = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if len(pairs):
            if pairs.min() < 0 or pairs.max() >= node_count:
                bad = pairs[(pairs < 0).any(axis=1) | (pairs >= node_count).any(axis=1)][0]
                raise DatasetError(
                    f"node id out of range: edge ({bad[0]}, {bad[1]}) with {node_count} nodes"
                )
            loops = pairs[:, 0] == pairs[:, 1]
            if loops.any():
                raise DatasetError(f"self-loop on node {pairs[loops][0, 0]}")

        canonical = np.sort(pairs, axis=1)
        unique = np.unique(canonical, axis=0) if len(canonical) else canonical
        if len(unique) < len(pairs):
            logger.debug(f"Collapsed {len(pairs) - len(unique)} duplicate edge line(s)")

        rows = np.concatenate([unique[:, 0], unique[:, 1]])
        cols = np.concatenate([unique[:, 1], unique[:, 0]])
        matrix = sp.csr_matrix(
            (np.ones(len(rows), dtype=np.int8), (rows, cols)),
            shape=(node_count, node_count),
        )
        matrix.sort_indices()

        return cls(
            node_count=node_count,
            texts=tuple(texts),
            indptr=_frozen(matrix.indptr.astype(np.int64)),
            indices=_frozen(matrix.indices.astype(np.int64)),
            original_ids=original_ids,
        )

    @property
    def edge_count(self) -> int:
        return len(self.indices) // 2

    @property
    def edges(self) -> np.ndarray:
        """Edge list as an (E, 2) array with u < v, sorted lexicographically."""
        rows = np.repeat(np.arange(self.node_count), np.diff(self.indptr))
        upper = rows < self.indices
        return np.stack([rows[upper], self.indices[upper]], axis=1)

    def neighbors(self, node: int) -> np.ndarray:
        return self.indices[self.indptr[node] : self.indptr[node + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def has_edge(self, u: int, v: int) -> bool:
        nbrs = self.neighbors(u)
        pos = np.searchsorted(nbrs, v)
        return bool(pos < len(nbrs) and nbrs[pos] == v)

    def adjacency_matrix(self) -> sp.csr_matrix:
        """Binary symmetric adjacency A as a scipy CSR matrix."""
        data = np.ones(len(self.indices), dtype=np.float64)
        return sp.csr_matrix(
            (data, self.indices, self.indptr), shape=(self.node_count, self.node_count)
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TagGraph):
            return NotImplemented
        return (
            self.node_count == other.node_count
            and self.texts == other.texts
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
        )

    def __hash__(self) -> int:
        return hash((self.node_count, self.texts, self.indices.tobytes()))


@dataclass(frozen=True, eq=False)
class InjectionLabel:
    """Ground-truth anomaly tag per node (see ``AnomalyType``)."""

    tags: np.ndarray

    def __post_init__(self) -> None:
        tags = np.asarray(self.tags, dtype=np.int8)
        if tags.ndim != 1:
            raise DatasetError("labels must be a 1-d array")
        if len(tags) and (tags.min() < 0 or tags.max() > max(AnomalyType)):
            raise DatasetError(f"label outside 0..{int(max(AnomalyType))}")
        object.__setattr__(self, "tags", _frozen(tags.copy()))

    @classmethod
    def normal(cls, node_count: int) -> InjectionLabel:
        return cls(np.zeros(node_count, dtype=np.int8))

    def __len__(self) -> int:
        return len(self.tags)

    @property
    def is_anomaly(self) -> np.ndarray:
        return self.tags > 0

    def histogram(self) -> dict[int, int]:
        """Count of nodes per nonzero tag present."""
        values, counts = np.unique(self.tags[self.tags > 0], return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, InjectionLabel):
            return NotImplemented
        return np.array_equal(self.tags, other.tags)

    def __hash__(self) -> int:
        return hash(self.tags.tobytes())


def _read_nodes(path: Path) -> tuple[list[int], list[str]]:
    ids: list[int] = []
    texts: list[str] = []
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetError(f"{path}:{lineno}: invalid JSON: {e}") from e
            if not isinstance(record, dict) or "id" not in record or "text" not in record:
                raise DatasetError(f"{path}:{lineno}: expected object with 'id' and 'text'")
            node_id, text = record["id"], record["text"]
            if not isinstance(node_id, int) or isinstance(node_id, bool):
                raise DatasetError(f"{path}:{lineno}: 'id' must be an integer")
            if not isinstance(text, str):
                raise DatasetError(f"{path}:{lineno}: 'text' must be a string")
            ids.append(node_id)
            texts.append(text)
    return ids, texts


def _read_edges(path: Path, id_lookup: dict[int, int] | None, node_count: int) -> list[tuple[int, int]]:
    edges: list[tuple[int, int]] = []
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise DatasetError(f"{path}:{lineno}: expected 'u<TAB>v', got {line.strip()!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError as e:
                raise DatasetError(f"{path}:{lineno}: non-integer node id") from e
            if u == v:
                raise DatasetError(f"{path}:{lineno}: self-loop on node {u}")
            if id_lookup is not None:
                if u not in id_lookup or v not in id_lookup:
                    raise DatasetError(f"{path}:{lineno}: node id out of range ({u}, {v})")
                u, v = id_lookup[u], id_lookup[v]
            elif not (0 <= u < node_count and 0 <= v < node_count):
                raise DatasetError(f"{path}:{lineno}: node id out of range ({u}, {v})")
            edges.append((u, v))
    return edges


def _read_labels(path: Path, id_lookup: dict[int, int] | None, node_count: int) -> InjectionLabel:
    tags = np.zeros(node_count, dtype=np.int8)
    seen = np.zeros(node_count, dtype=bool)
    with path.open(encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != ["id", "label"]:
            raise DatasetError(f"{path}:1: expected header 'id,label', got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                node_id, label = int(row[0]), int(row[1])
            except (ValueError, IndexError) as e:
                raise DatasetError(f"{path}:{lineno}: malformed row {row}") from e
            if id_lookup is not None:
                if node_id not in id_lookup:
                    raise DatasetError(f"{path}:{lineno}: node id out of range ({node_id})")
                node_id = id_lookup[node_id]
            elif not 0 <= node_id < node_count:
                raise DatasetError(f"{path}:{lineno}: node id out of range ({node_id})")
            if not 0 <= label <= int(max(AnomalyType)):
                raise DatasetError(f"{path}:{lineno}: label {label} outside 0..4")
            tags[node_id] = label
            seen[node_id] = True
    if not seen.all():
        logger.warning(f"{path}: {int((~seen).sum())} node(s) without a label row, treated as normal")
    return InjectionLabel(tags)


def read_labels(path: Path, node_count: int) -> InjectionLabel:
    """Read a labels.csv keyed by dense node ids 0..node_count-1."""
    return _read_labels(Path(path), None, node_count)


def load_dataset(
    nodes_path: Path, edges_path: Path, labels_path: Path | None = None
) -> tuple[TagGraph, InjectionLabel | None]:
    """Load and validate a dataset from its three files.

    Node ids that are not exactly 0..n-1 are remapped densely in ascending
    order; the source ids are kept on ``TagGraph.original_ids``.

    Args:
        nodes_path: nodes.jsonl with one ``{"id", "text"}`` object per line
        edges_path: edges.tsv with one ``u<TAB>v`` pair per line
        labels_path: Optional labels.csv with header ``id,label``

    Returns:
        Tuple of (graph, labels or None)

    Raises:
        DatasetError: On malformed lines, self-loops or ids out of range
    """
    nodes_path, edges_path = Path(nodes_path), Path(edges_path)
    ids, texts = _read_nodes(nodes_path)
    node_count = len(ids)

    if len(set(ids)) != node_count:
        raise DatasetError(f"{nodes_path}: duplicate node id")

    id_lookup: dict[int, int] | None = None
    original_ids: tuple[int, ...] | None = None
    if sorted(ids) != list(range(node_count)):
        original_ids = tuple(sorted(ids))
        id_lookup = {orig: dense for dense, orig in enumerate(original_ids)}
        logger.info(f"Remapping {node_count} sparse node id(s) to dense ids")

    ordered = [""] * node_count
    for node_id, text in zip(ids, texts):
        ordered[id_lookup[node_id] if id_lookup else node_id] = text

    edges = _read_edges(edges_path, id_lookup, node_count)
    graph = TagGraph.from_edges(node_count, edges, ordered, original_ids=original_ids)

    labels = None
    if labels_path is not None:
        labels = _read_labels(Path(labels_path), id_lookup, node_count)

    isolated = int((graph.degrees() == 0).sum())
    if isolated:
        logger.debug(f"{isolated} isolated node(s) in {nodes_path.parent}")
    logger.info(
        f"Loaded graph with {graph.node_count} node(s) and {graph.edge_count} edge(s) "
        f"from {nodes_path.parent}"
    )
    return graph, labels


def load_dataset_dir(data_dir: Path, require_labels: bool = False) -> tuple[TagGraph, InjectionLabel | None]:
    """Load a dataset from a directory holding the standard file names."""
    data_dir = Path(data_dir)
    labels_path = data_dir / LABELS_FILE
    if require_labels and not labels_path.exists():
        raise DatasetError(f"{labels_path} not found")
    graph, labels = load_dataset(
        data_dir / NODES_FILE,
        data_dir / EDGES_FILE,
        labels_path if labels_path.exists() else None,
    )
    idmap_path = data_dir / IDMAP_FILE
    if graph.original_ids is None and idmap_path.exists():
        with idmap_path.open(encoding="utf-8", newline="") as handle:
            rows = list(csv.DictReader(handle))
        originals = tuple(int(r["original_id"]) for r in sorted(rows, key=lambda r: int(r["dense_id"])))
        if len(originals) == graph.node_count:
            graph = TagGraph(
                graph.node_count, graph.texts, graph.indptr, graph.indices, originals
            )
    return graph, labels


def save_dataset(graph: TagGraph, labels: InjectionLabel | None, out_dir: Path) -> None:
    """Write nodes.jsonl, edges.tsv, labels.csv (and idmap.csv when remapped).

    Output uses dense ids so the files load back into an equal graph.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if labels is None:
        labels = InjectionLabel.normal(graph.node_count)
    if len(labels) != graph.node_count:
        raise DatasetError(
            f"labels cover {len(labels)} node(s) but graph has {graph.node_count}"
        )

    with (out_dir / NODES_FILE).open("w", encoding="utf-8", newline="\n") as handle:
        for node_id, text in enumerate(graph.texts):
            handle.write(json.dumps({"id": node_id, "text": text}, ensure_ascii=False) + "\n")

    with (out_dir / EDGES_FILE).open("w", encoding="utf-8", newline="\n") as handle:
        for u, v in graph.edges:
            handle.write(f"{u}\t{v}\n")

    with (out_dir / LABELS_FILE).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["id", "label"])
        for node_id, tag in enumerate(labels.tags):
            writer.writerow([node_id, int(tag)])

    if graph.original_ids is not None:
        with (out_dir / IDMAP_FILE).open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["original_id", "dense_id"])
            for dense, original in enumerate(graph.original_ids):
                writer.writerow([original, dense])

    logger.info(
        f"Saved dataset ({graph.node_count} node(s), {graph.edge_count} edge(s)) to {out_dir}"
    )
