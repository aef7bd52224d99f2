"""Tests for contrastive views and the joint objective."""

import math

import numpy as np
import pytest
import torch
import torch.nn.functional as F
from hypothesis import given, settings
from hypothesis import strategies as st

from tagad.encoders import EmbeddingSet
from tagad.errors import ConfigError
from tagad.objective import (
    VIEW_SPECS,
    build_views,
    info_nce,
    joint_loss,
    select_views,
    similarity_matrix,
)

# anchor/target table per view, written out independently of VIEW_SPECS
EXPECTED_VIEWS = {
    "g2t-nn": ("graph_node", "text_node", 1.0),
    "g2t-cc": ("graph_context", "text_context", 1.0),
    "g2t-nc": ("graph_node", "text_context", 1.0),
    "g2t-cn": ("graph_context", "text_node", 1.0),
    "t2t-nc": ("text_node", "text_context", "gamma"),
    "g2g-nc": ("graph_node", "graph_context", "gamma"),
}


def random_embeddings(n, d, seed=0):
    gen = torch.Generator().manual_seed(seed)

    def unit():
        return F.normalize(torch.randn(n, d, generator=gen, dtype=torch.float64), dim=1)

    return EmbeddingSet.from_tensors(
        np.arange(n), text_node=unit(), text_context=unit(), graph_node=unit(), graph_context=unit()
    )


def naive_info_nce(anchors, targets, tau):
    """Per-pair double loop with max-shifted log-sum-exp."""
    n = len(anchors)
    total = 0.0
    for i in range(n):
        row = [float(anchors[i] @ targets[j]) / tau for j in range(n)]
        top = max(row)
        lse = top + math.log(sum(math.exp(v - top) for v in row))
        total += lse - row[i]
    return total / n


def test_self_similarity_diagonal():
    x = F.normalize(torch.randn(5, 3, dtype=torch.float64), dim=1)
    torch.testing.assert_close(torch.diagonal(similarity_matrix(x, x, 1.0)), torch.ones(5, dtype=torch.float64))


def test_orthonormal_similarity():
    eye = torch.eye(4, dtype=torch.float64)
    logits = similarity_matrix(eye, eye, 0.07)
    torch.testing.assert_close(logits, eye / 0.07)


def test_similarity_matches_double_loop():
    a = F.normalize(torch.randn(6, 4, dtype=torch.float64), dim=1)
    t = F.normalize(torch.randn(6, 4, dtype=torch.float64), dim=1)
    logits = similarity_matrix(a, t, 0.5)
    for i in range(6):
        for j in range(6):
            assert abs(float(logits[i, j]) - float(a[i] @ t[j]) / 0.5) < 1e-12


@pytest.mark.parametrize("tau", [0.0, -0.1])
def test_nonpositive_tau(tau):
    x = torch.eye(2)
    with pytest.raises(ConfigError, match="tau"):
        similarity_matrix(x, x, tau)


def test_info_nce_single_pair_is_zero():
    assert float(info_nce(torch.tensor([[3.7]], dtype=torch.float64))) == 0.0


@pytest.mark.parametrize("n", [2, 4, 8, 64])
def test_info_nce_uniform_is_log_n(n):
    logits = torch.full((n, n), 2.5, dtype=torch.float64)
    assert abs(float(info_nce(logits)) - math.log(n)) < 1e-9


def test_info_nce_closed_form():
    """Test N=2 against a scalar-arithmetic evaluation."""
    tau = 0.07
    anchors = torch.tensor([[1.0, 0.0], [0.0, 1.0]], dtype=torch.float64)
    r = math.sqrt(2) / 2
    targets = torch.tensor([[1.0, 0.0], [r, r]], dtype=torch.float64)
    loss = float(info_nce(similarity_matrix(anchors, targets, tau)))

    row0 = [1.0 / tau, r / tau]
    row1 = [0.0, r / tau]
    term0 = math.log(math.exp(row0[0]) + math.exp(row0[1])) - row0[0]
    term1 = math.log(math.exp(row1[0]) + math.exp(row1[1])) - row1[1]
    assert abs(loss - (term0 + term1) / 2) < 1e-12


def test_info_nce_large_logits_stay_finite():
    logits = torch.tensor([[1000.0, -1000.0], [900.0, 1000.0]], dtype=torch.float64)
    assert math.isfinite(float(info_nce(logits)))


@settings(max_examples=50, deadline=None)
@given(n=st.integers(2, 8), seed=st.integers(0, 10_000), shift=st.floats(-50, 50))
def test_info_nce_row_shift_invariance(n, seed, shift):
    gen = torch.Generator().manual_seed(seed)
    logits = torch.randn(n, n, generator=gen, dtype=torch.float64) * 5
    shifts = torch.linspace(-1, 1, n, dtype=torch.float64).unsqueeze(1) * shift
    assert abs(float(info_nce(logits + shifts)) - float(info_nce(logits))) < 1e-9


def test_info_nce_positive_on_finite_inputs():
    logits = torch.randn(6, 6, dtype=torch.float64) * 3
    assert float(info_nce(logits)) > 0


def test_build_views_shapes():
    bundle = build_views(np.array([0, 1]), random_embeddings(2, 3), 0.07, 0.01)
    assert len(bundle) == 6
    assert all(tuple(l.shape) == (2, 2) for l in bundle.logits)


def test_build_views_table_oracle():
    gamma, tau = 0.3, 0.2
    emb = random_embeddings(5, 4, seed=2)
    batch = np.array([4, 0, 2])
    bundle = build_views(batch, emb, tau, gamma)

    assert set(bundle.names) == set(EXPECTED_VIEWS)
    rows = torch.tensor(batch)
    for spec, logits, weight in zip(bundle.specs, bundle.logits, bundle.weights):
        anchor, target, expected_weight = EXPECTED_VIEWS[spec.name]
        expected = emb.tables[anchor].values[rows] @ emb.tables[target].values[rows].T / tau
        torch.testing.assert_close(logits, expected)
        assert weight == (gamma if expected_weight == "gamma" else 1.0)


def test_gamma_zero_weights():
    bundle = build_views(np.array([0, 1, 2]), random_embeddings(3, 2), 0.07, 0.0)
    weights = dict(zip(bundle.names, bundle.weights))
    assert weights["t2t-nc"] == weights["g2g-nc"] == 0.0
    assert weights["g2t-nn"] == 1.0


def test_duplicate_batch_ids_rejected():
    with pytest.raises(ValueError, match="duplicate"):
        build_views(np.array([1, 1]), random_embeddings(3, 2), 0.07, 0.01)


def test_joint_loss_uniform_composition():
    gamma, n = 0.01, 4
    emb = EmbeddingSet.from_tensors(
        np.arange(n), *(torch.ones(n, 3, dtype=torch.float64) / math.sqrt(3) for _ in range(4))
    )
    loss = float(joint_loss(build_views(np.arange(n), emb, 0.07, gamma)))
    assert abs(loss - (4 * math.log(4) + gamma * 2 * math.log(4))) < 1e-9


def test_gamma_zero_equals_cross_only():
    emb = random_embeddings(6, 4, seed=5)
    batch = np.arange(6)
    full = joint_loss(build_views(batch, emb, 0.1, 0.0))
    cross = joint_loss(build_views(batch, emb, 0.1, 0.0, select_views("cross")))
    assert abs(float(full) - float(cross)) < 1e-12


@pytest.mark.parametrize("trial", range(100))
def test_joint_loss_matches_naive_double_loop(trial):
    rng = np.random.default_rng(trial)
    n, d = int(rng.integers(2, 17)), int(rng.integers(1, 17))
    tau, gamma = float(rng.uniform(0.05, 1.0)), float(rng.uniform(0, 1))
    emb = random_embeddings(n, d, seed=trial)
    batch = rng.permutation(n)

    loss = float(joint_loss(build_views(batch, emb, tau, gamma)))

    rows = torch.tensor(batch)
    expected = 0.0
    for anchor, target, weight in EXPECTED_VIEWS.values():
        w = gamma if weight == "gamma" else 1.0
        expected += w * naive_info_nce(
            emb.tables[anchor].values[rows], emb.tables[target].values[rows], tau
        )
    assert abs(loss - expected) < 1e-10


def test_joint_loss_permutation_invariant():
    emb = random_embeddings(8, 5, seed=9)
    a = joint_loss(build_views(np.arange(8), emb, 0.07, 0.01))
    b = joint_loss(build_views(np.array([3, 7, 0, 5, 1, 6, 2, 4]), emb, 0.07, 0.01))
    assert abs(float(a) - float(b)) < 1e-9


@pytest.mark.parametrize(
    "views, names",
    [
        ("full", {"g2t-nn", "g2t-cc", "g2t-nc", "g2t-cn", "t2t-nc", "g2g-nc"}),
        ("cross_inner", {"g2t-nn", "g2t-cc"}),
        ("cross_inter", {"g2t-nc", "g2t-cn"}),
        ("cross", {"g2t-nn", "g2t-cc", "g2t-nc", "g2t-cn"}),
        ("uni", {"t2t-nc", "g2g-nc"}),
    ],
)
def test_view_sets(views, names):
    assert {s.name for s in select_views(views)} == names


def test_symmetric_views_add_mirrors():
    specs = select_views("full", symmetric=True)
    assert len(specs) == 2 * len(VIEW_SPECS)
    mirrored = {s.name: s for s in specs}
    assert mirrored["t2g-nn"].anchor == "text_node"
    assert mirrored["t2g-nn"].target == "graph_node"
    assert mirrored["t2t-cn"].anchor == "text_context"
    assert mirrored["t2g-cn"].anchor == "text_context"
    assert mirrored["t2g-cn"].target == "graph_node"


def test_unknown_view_set():
    with pytest.raises(ConfigError):
        select_views("everything")
