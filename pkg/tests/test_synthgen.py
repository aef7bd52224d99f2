"""Tests for the synthetic graph generator."""

import math

import numpy as np
import pytest

from tagad.errors import ConfigError
from tagad.featurizer import hashed_features
from tagad.synthgen import SynthSpec, community_of, generate, load_spec, pseudo_word, vocabulary_block


def _words(text):
    return [w.strip(".").lower() for w in text.split()]


def test_disconnected_communities():
    graph = generate(SynthSpec(node_count=4, communities=2, p_in=1.0, p_out=0.0))
    assert graph.edges.tolist() == [[0, 2], [1, 3]]


def test_noise_free_text_stays_in_block():
    spec = SynthSpec(node_count=40, communities=4, block_size=10, noise=0.0, seed=3)
    graph = generate(spec)
    for node, text in enumerate(graph.texts):
        block = set(vocabulary_block(community_of(node, 4), 10))
        assert set(_words(text)) <= block


def test_text_lengths_within_jitter():
    spec = SynthSpec(node_count=50, tokens_mean=12, tokens_jitter=3, seed=1)
    for text in generate(spec).texts:
        assert 9 <= len(_words(text)) <= 15


def test_edge_counts_within_three_sigma():
    spec = SynthSpec(node_count=500, communities=4, p_in=0.05, p_out=0.002, seed=0)
    graph = generate(spec)
    same = (graph.edges[:, 0] % 4) == (graph.edges[:, 1] % 4)

    intra_pairs = 4 * math.comb(125, 2)
    inter_pairs = math.comb(500, 2) - intra_pairs
    for observed, pairs, p in ((same.sum(), intra_pairs, 0.05), ((~same).sum(), inter_pairs, 0.002)):
        mean, sigma = pairs * p, math.sqrt(pairs * p * (1 - p))
        assert abs(observed - mean) <= 3 * sigma


def test_same_seed_same_graph():
    spec = SynthSpec(node_count=120, seed=9)
    assert generate(spec) == generate(spec)
    assert generate(spec) != generate(SynthSpec(node_count=120, seed=10))


def test_text_predicts_community():
    """Test that nearest-centroid on hashed text features recovers communities."""
    graph = generate(SynthSpec(node_count=400, seed=2))
    features = hashed_features(graph, d_in=512, seed=0).matrix
    membership = np.arange(graph.node_count) % 4

    train = np.arange(graph.node_count) < 200
    centroids = np.stack([features[train & (membership == k)].mean(axis=0) for k in range(4)])
    predicted = np.argmax(features[~train] @ centroids.T, axis=1)
    assert np.mean(predicted == membership[~train]) >= 0.9


def test_pseudo_words_are_distinct():
    words = [pseudo_word(i) for i in range(5000)]
    assert len(set(words)) == 5000


@pytest.mark.parametrize(
    "overrides, match",
    [
        ({"communities": 1}, "communities"),
        ({"node_count": 2, "communities": 3}, "node_count"),
        ({"p_in": 0.1, "p_out": 0.2}, "p_out"),
        ({"noise": 1.5}, "noise"),
        ({"tokens_mean": 5, "tokens_jitter": 5}, "tokens_jitter"),
        ({"seed": -1}, "seed"),
    ],
)
def test_invalid_specs(overrides, match):
    with pytest.raises(ConfigError, match=match):
        SynthSpec(**overrides)


def test_load_spec(tmp_path):
    path = tmp_path / "spec.yaml"
    path.write_text("node_count: 60\ncommunities: 3\nseed: 4\n")
    assert load_spec(path) == SynthSpec(node_count=60, communities=3, seed=4)


def test_load_spec_unknown_key(tmp_path):
    path = tmp_path / "spec.yaml"
    path.write_text("nodes: 60\n")
    with pytest.raises(ConfigError):
        load_spec(path)
