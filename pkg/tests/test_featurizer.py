"""Tests for tokenization and frozen features."""

import numpy as np
import pytest
import torch

from tagad.errors import DatasetError
from tagad.featurizer import (
    EOS_ID,
    PAD_ID,
    Provenance,
    fnv1a_64,
    hashed_features,
    load_external_features,
    pad_sequences,
    save_features,
    tokenize,
    tokenize_graph,
)
from tagad.graph import TagGraph


@pytest.fixture
def graph():
    return TagGraph.from_edges(
        4, [(0, 1), (2, 3)], ["Graph anomaly.", "Graph anomaly.", "", "text attributed graph"]
    )


def test_fnv1a_reference_values():
    """Test against the published FNV-1a 64-bit vectors."""
    assert fnv1a_64(b"") == 0xCBF29CE484222325
    assert fnv1a_64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a_64(b"foobar") == 0x85944171F73967E8


def test_empty_text_is_eos_only():
    assert tokenize("", 64, 8).ids == (EOS_ID,)


def test_max_len_one_keeps_only_eos():
    assert tokenize("several words of text", 64, 1).ids == (EOS_ID,)


def test_case_folding():
    ids = tokenize("Graph graph GRAPH", 8192, 16).ids
    assert len(ids) == 4
    assert ids[0] == ids[1] == ids[2]
    assert ids[-1] == EOS_ID


def test_truncation_keeps_eos_last():
    ids = tokenize("a b c d e f g", 64, 4).ids
    assert len(ids) == 4
    assert ids[-1] == EOS_ID
    assert all(i >= 3 for i in ids[:-1])


def test_tokenize_rejects_tiny_vocab():
    with pytest.raises(ValueError, match="vocab_size"):
        tokenize("x", 3, 8)


def test_pad_sequences():
    batch = pad_sequences([tokenize("a b", 64, 8), tokenize("", 64, 8)])
    assert batch.ids.shape == (2, 3)
    assert batch.lengths.tolist() == [3, 1]
    assert batch.ids[1, 1:].tolist() == [PAD_ID, PAD_ID]

    selected = batch.select(torch.tensor([1]))
    assert selected.ids.shape == (1, 1)


def test_tokenize_graph_rows(graph):
    tokens = tokenize_graph(graph, 64, 8)
    assert tokens.ids.shape[0] == graph.node_count
    assert torch.equal(tokens.ids[0], tokens.ids[1])


def test_identical_texts_identical_rows(graph):
    features = hashed_features(graph, d_in=32, seed=1)
    np.testing.assert_array_equal(features.matrix[0], features.matrix[1])
    assert features.provenance is Provenance.HASHED


def test_empty_text_maps_to_e0(graph):
    features = hashed_features(graph, d_in=32)
    expected = np.zeros(32)
    expected[0] = 1.0
    np.testing.assert_array_equal(features.matrix[2], expected)


def test_rows_are_unit_norm(graph):
    features = hashed_features(graph, d_in=768)
    np.testing.assert_allclose(np.linalg.norm(features.matrix, axis=1), 1.0, atol=1e-9)


def test_hashed_features_depend_on_seed(graph):
    a = hashed_features(graph, d_in=64, seed=0).matrix
    b = hashed_features(graph, d_in=64, seed=1).matrix
    assert not np.allclose(a[3], b[3])
    np.testing.assert_array_equal(a, hashed_features(graph, d_in=64, seed=0).matrix)


def test_external_features_accepted(tmp_path):
    graph = TagGraph.from_edges(3, [], ["a", "b", "c"])
    path = tmp_path / "features.tsv"
    np.savetxt(path, np.random.default_rng(0).normal(size=(3, 768)), delimiter="\t")

    features = load_external_features(path, graph)

    assert features.matrix.shape == (3, 768)
    assert features.provenance is Provenance.EXTERNAL


def test_external_features_row_mismatch(tmp_path):
    graph = TagGraph.from_edges(3, [], ["a", "b", "c"])
    path = tmp_path / "features.tsv"
    path.write_text("1\t2\n3\t4\n")
    with pytest.raises(DatasetError, match="dimension mismatch"):
        load_external_features(path, graph)


def test_external_features_nan(tmp_path):
    graph = TagGraph.from_edges(2, [], ["a", "b"])
    path = tmp_path / "features.tsv"
    path.write_text("1\tnan\n3\t4\n")
    with pytest.raises(DatasetError, match="non-finite"):
        load_external_features(path, graph)


def test_save_features_round_trip(tmp_path, graph):
    features = hashed_features(graph, d_in=16, seed=4)
    save_features(features, tmp_path / "features.tsv")
    loaded = load_external_features(tmp_path / "features.tsv", graph)
    np.testing.assert_array_equal(loaded.matrix, features.matrix)
