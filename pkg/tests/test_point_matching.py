import numpy as np
import pytest
from hypothesis import given, strategies as st

from hybridreg.features import FeatureSet
from hybridreg.point_matching import (NON_SALIENT_CLASS, PointConfig, match_patch_pairs, mutual_top_k, patch_cost,
                                      sinkhorn, sinkhorn_batch)

import oracles


def _marginal_error(P, m, n):
    return max(np.abs(P[:m, :].sum(1) - 1).max(), np.abs(P[:, :n].sum(0) - 1).max(),
               abs(P[m].sum() - n), abs(P[:, n].sum() - m))


def test_patch_cost_examples():
    e = np.eye(33)
    assert patch_cost(e[:1], e[:1]).entries[0, 0] == pytest.approx(1 / np.sqrt(33))
    assert patch_cost(e[:1], e[1:2]).entries[0, 0] == 0.0
    c = patch_cost(FeatureSet(e[:2]), FeatureSet(e[:3]), NON_SALIENT_CLASS)
    assert c.label == NON_SALIENT_CLASS and c.entries.shape == (2, 3)
    with pytest.raises(ValueError):
        patch_cost(np.zeros((0, 33)), e[:1])
    with pytest.raises(ValueError):
        patch_cost(np.ones((1, 3)), np.ones((1, 4)))


@given(st.integers(0, 2**31))
def test_patch_cost_bound(seed):
    rng = np.random.default_rng(seed)
    P = rng.normal(size=(5, 33))
    Q = rng.normal(size=(7, 33))
    P /= np.linalg.norm(P, axis=1, keepdims=True)
    Q /= np.linalg.norm(Q, axis=1, keepdims=True)
    assert np.all(np.abs(patch_cost(P, Q).entries) <= 1 / np.sqrt(33) + 1e-15)


def test_two_by_two_fixed_point():
    assert np.allclose(sinkhorn(np.zeros((1, 1)), 0.0, 100), oracles.sinkhorn_2x2_fixed_point(), atol=1e-12)


@pytest.mark.parametrize("alpha", [-2.0, 0.0, 1.5])
def test_uniform_cost_gives_uniform_block(alpha):
    P = sinkhorn(np.full((4, 6), 0.3), alpha, 100)
    inner = P[:4, :6]
    assert np.allclose(inner, inner[0, 0])


@given(st.integers(0, 2**31))
def test_marginals_and_shift_invariance(seed):
    rng = np.random.default_rng(seed)
    m, n = (int(v) for v in rng.integers(1, 65, 2))
    M = rng.normal(size=(m, n))
    P = sinkhorn(M, 0.0, 100)
    assert _marginal_error(P, m, n) < 1e-6
    assert np.all(P >= 0)
    c = float(rng.uniform(-5, 5))
    # the dustbin score is a cost too, so it moves with the shift
    assert np.abs(sinkhorn(M + c, c, 100) - P).max() < 1e-9


def test_batch_matches_single_and_pads_with_zeros():
    rng = np.random.default_rng(3)
    A, B = rng.normal(size=(3, 5)), rng.normal(size=(6, 2))
    S = np.zeros((2, 6, 5))
    S[0, :3, :5] = A
    S[1, :6, :2] = B
    out = sinkhorn_batch(S, [3, 6], [5, 2], 0.0, 100)
    assert np.allclose(out[0, :3, :5], sinkhorn(A)[:3, :5])
    assert np.allclose(out[0, 3:6, :], 0)
    assert np.allclose(out[0, :3, 5], sinkhorn(A)[:3, 5])
    assert np.allclose(out[1, :6, :2], sinkhorn(B)[:6, :2])


def test_sinkhorn_needs_iterations():
    with pytest.raises(ValueError):
        sinkhorn(np.zeros((2, 2)), 0.0, 0)


def test_mutual_top_k_examples():
    S = np.eye(4) + 0.01
    pairs, _ = mutual_top_k(S, 1, has_dustbin=False)
    assert pairs.tolist() == [[0, 0], [1, 1], [2, 2], [3, 3]]
    rng = np.random.default_rng(0)
    S = rng.uniform(size=(5, 7))
    pairs, conf = mutual_top_k(S, 7, has_dustbin=False)
    assert len(pairs) == 35
    # the dustbin row and column are never selected
    pairs, _ = mutual_top_k(np.pad(S, ((0, 1), (0, 1)), constant_values=10.0), 2)
    assert pairs.max(axis=0).tolist() <= [4, 6]
    with pytest.raises(ValueError):
        mutual_top_k(S, 0)


@pytest.mark.parametrize("seed", range(25))
def test_mutual_top_k_rank_oracle(seed):
    rng = np.random.default_rng(seed)
    m, n = (int(v) for v in rng.integers(1, 16, 2))
    k = int(rng.integers(1, 5))
    S = rng.integers(0, 4, (m, n)).astype(float) if seed % 2 else rng.uniform(size=(m, n))
    pairs, conf = mutual_top_k(S, k, has_dustbin=False)
    assert sorted(map(tuple, pairs.tolist())) == oracles.rank_mutual_top_k(S, k)
    assert np.array_equal(conf, S[pairs[:, 0], pairs[:, 1]])
    assert len(pairs) <= k * min(m, n)


@given(st.integers(0, 2**31))
def test_mutual_top_k_transpose_symmetry(seed):
    rng = np.random.default_rng(seed)
    S = rng.uniform(size=(int(rng.integers(1, 10)), int(rng.integers(1, 10))))
    a, _ = mutual_top_k(S, 2, has_dustbin=False)
    b, _ = mutual_top_k(S.T, 2, has_dustbin=False)
    assert sorted(map(tuple, a.tolist())) == sorted(map(tuple, b[:, ::-1].tolist()))


def test_match_patch_pairs_recovers_identity_matching():
    rng = np.random.default_rng(7)
    D = rng.normal(size=(20, 33))
    D /= np.linalg.norm(D, axis=1, keepdims=True)
    F = FeatureSet(D * 4)
    members = [np.arange(0, 10), np.arange(10, 20)]
    out = match_patch_pairs(F, F, members, members, [(0, 0), (1, 1)], PointConfig(k=1))
    for (src, tgt, conf), mem in zip(out, members):
        assert np.array_equal(src, tgt)
        assert set(src.tolist()) <= set(mem.tolist())
    assert match_patch_pairs(F, F, members, members, np.zeros((0, 2)), PointConfig()) == []
