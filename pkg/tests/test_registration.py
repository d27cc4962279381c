import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.spatial.transform import Rotation

from hybridreg.core import RigidTransform, random_transform, rotation_about_axis
from hybridreg.harness.metrics import rre_rte
from hybridreg.registration import (DegenerateConfigurationError, RegistrationFailure, lgr, ransac, residuals,
                                    weighted_svd)


def test_identity_on_equal_sets():
    p = np.random.default_rng(0).normal(size=(8, 3))
    T = weighted_svd(p, p)
    assert np.allclose(T.as_matrix(), np.eye(4), atol=1e-12)
    assert residuals(T, p, p).max() < 1e-12


def test_recovers_planted_transform():
    rng = np.random.default_rng(1)
    T0 = RigidTransform(rotation_about_axis((0, 0, 1), 30), (1, 2, 3))
    p = rng.normal(size=(10, 3))
    T = weighted_svd(p, T0.apply(p))
    assert np.abs(T.rotation - T0.rotation).max() < 1e-9
    assert np.abs(T.translation - T0.translation).max() < 1e-9


@pytest.mark.parametrize("pts", [
    [[0, 0, 0], [1, 1, 1], [2, 2, 2]],
    [[0, 0, 0], [1, 0, 0]],
    [[0, 0, 0], [0, 0, 0], [0, 0, 0], [0, 0, 0]],
])
def test_degenerate_inputs(pts):
    with pytest.raises(DegenerateConfigurationError):
        weighted_svd(pts, pts)


def test_bad_weights():
    p = np.eye(3)
    with pytest.raises(DegenerateConfigurationError):
        weighted_svd(p, p, [0, 0, 0])
    with pytest.raises(ValueError):
        weighted_svd(p, p, [1, 1])


def test_reflection_is_corrected():
    # a mirrored target pulls an unconstrained solver towards det -1
    rng = np.random.default_rng(2)
    p = rng.normal(size=(20, 3))
    q = p * [1, 1, -1]
    T = weighted_svd(p, q)
    assert np.linalg.det(T.rotation) == pytest.approx(1.0)


@given(st.integers(0, 2**31))
def test_equivariance_and_weight_scale(seed):
    rng = np.random.default_rng(seed)
    p = rng.normal(size=(12, 3))
    q = random_transform(rng).apply(p) + rng.normal(0, 0.05, p.shape)
    w = rng.uniform(0.1, 2, 12)
    T = weighted_svd(p, q, w)
    T0 = random_transform(rng)
    T1 = weighted_svd(T0.apply(p), q, w)
    assert np.abs((T1 @ T0).as_matrix() - T.as_matrix()).max() < 1e-9
    assert np.abs(weighted_svd(p, q, 2 * w).as_matrix() - T.as_matrix()).max() < 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_optimal_against_rotation_grid(seed):
    rng = np.random.default_rng(seed)
    p = rng.normal(size=(3, 3))
    q = rng.normal(size=(3, 3))
    T = weighted_svd(p, q)
    best_svd = np.sum(residuals(T, p, q) ** 2)
    pc, qc = p - p.mean(0), q - q.mean(0)
    # identity on centred data is one candidate; a dense random grid gives many more
    Rs = Rotation.random(20000, random_state=seed).as_matrix()
    grid = np.einsum("rij,nj->rni", Rs, pc) - qc[None]
    assert best_svd <= np.sum((pc - qc) ** 2) + 1e-12
    assert best_svd <= (grid ** 2).sum(axis=(1, 2)).min() + 1e-12


def _patches(rng, T, n_patches=10, per=12, noise=0.0):
    out = []
    for _ in range(n_patches):
        c = rng.uniform(-2, 2, 3)
        s = c + rng.normal(0, 0.3, (per, 3))
        out.append((s, T.apply(s) + rng.normal(0, noise, s.shape), rng.uniform(0.5, 1, per)))
    return out


def test_lgr_exact_consensus():
    rng = np.random.default_rng(3)
    T = random_transform(rng)
    res = lgr(_patches(rng, T))
    assert np.abs(res.T.as_matrix() - T.as_matrix()).max() < 1e-9
    assert res.residual < 1e-9


def test_lgr_ignores_poisoned_patch():
    rng = np.random.default_rng(4)
    T = random_transform(rng)
    patches = _patches(rng, T, 9)
    s = rng.uniform(-2, 2, (12, 3))
    patches.insert(4, (s, rng.uniform(-2, 2, (12, 3)), np.ones(12)))
    res, cands = lgr(patches, return_candidates=True)
    best = max(cands, key=lambda c: c.inlier_count)
    assert best.patch != 4
    assert rre_rte(res.T, T)[0] < 0.1
    assert len(res.inliers) >= max(c.inlier_count for c in cands)


@given(st.integers(0, 2**31))
def test_lgr_never_loses_to_a_candidate(seed):
    rng = np.random.default_rng(seed)
    T = random_transform(rng)
    patches = _patches(rng, T, 6, 8, noise=0.05)
    for k in range(3):
        s = rng.uniform(-2, 2, (8, 3))
        patches.append((s, rng.uniform(-2, 2, (8, 3)), np.ones(8)))
    res, cands = lgr(patches, 0.1, 5, return_candidates=True)
    assert len(res.inliers) >= max(c.inlier_count for c in cands)
    assert res.residual >= 0


def test_lgr_failures():
    with pytest.raises(RegistrationFailure):
        lgr([(np.zeros((2, 3)), np.zeros((2, 3)), None)])
    with pytest.raises(RegistrationFailure):
        lgr([])


def test_ransac_all_inliers():
    rng = np.random.default_rng(5)
    T = random_transform(rng)
    p = rng.normal(size=(50, 3))
    res = ransac(p, T.apply(p), 100, 0.05, seed=1)
    assert np.abs(res.T.as_matrix() - T.as_matrix()).max() < 1e-6


def test_ransac_half_outliers_and_determinism():
    rng = np.random.default_rng(6)
    T = random_transform(rng)
    p = rng.uniform(-1, 1, (100, 3))
    q = T.apply(p)
    q[50:] = rng.uniform(-1, 1, (50, 3))
    a = ransac(p, q, 1000, 0.05, seed=3)
    b = ransac(p, q, 1000, 0.05, seed=3)
    assert rre_rte(a.T, T)[0] < 0.5
    assert np.array_equal(a.T.as_matrix(), b.T.as_matrix())
    with pytest.raises(RegistrationFailure):
        ransac(p[:2], q[:2])
