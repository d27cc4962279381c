"""Rigid transform estimation from point correspondences."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import RigidTransform


class DegenerateConfigurationError(ValueError):
    """Correspondences do not pin down a rotation (collinear or too few)."""


class RegistrationFailure(RuntimeError):
    """No hypothesis could be formed from the correspondences."""


@dataclass(frozen=True)
class RegConfig:
    accept_radius: float = 0.10
    refine_iters: int = 5
    n_refine: int = 0
    ransac_iters: int = 1000
    ransac_threshold: float = 0.10
    seed: int = 0


@dataclass(frozen=True)
class TransformCandidate:
    T: RigidTransform
    inlier_count: int
    patch: int


@dataclass(frozen=True)
class RegistrationResult:
    T: RigidTransform
    inliers: np.ndarray
    residual: float
    candidates: int = 0


def _kabsch(src, tgt, w):
    wsum = w.sum()
    cs = w @ src / wsum
    ct = w @ tgt / wsum
    H = (src - cs).T @ ((tgt - ct) * w[:, None])
    U, S, Vt = np.linalg.svd(H)
    D = np.eye(3)
    D[2, 2] = np.sign(np.linalg.det(Vt.T @ U.T)) or 1.0
    R = Vt.T @ D @ U.T
    return R, ct - R @ cs, S


def weighted_svd(src, tgt, weights=None) -> RigidTransform:
    """Weighted least-squares rigid fit of ``src`` onto ``tgt``."""
    src = np.asarray(src, dtype=np.float64).reshape(-1, 3)
    tgt = np.asarray(tgt, dtype=np.float64).reshape(-1, 3)
    w = np.ones(len(src)) if weights is None else np.asarray(weights, dtype=np.float64).reshape(-1)
    if len(src) != len(tgt) or len(w) != len(src):
        raise ValueError("correspondence arrays differ in length")
    if len(src) < 3:
        raise DegenerateConfigurationError(f"need >= 3 correspondences, got {len(src)}")
    if np.any(w < 0) or w.sum() <= 0:
        raise DegenerateConfigurationError("weights must be non-negative with positive sum")
    R, t, S = _kabsch(src, tgt, w)
    if S[0] <= 0 or S[1] <= 1e-10 * S[0]:
        raise DegenerateConfigurationError("cross-covariance has rank < 2 (collinear points)")
    return RigidTransform(R, t)


def residuals(T: RigidTransform, src, tgt) -> np.ndarray:
    return np.linalg.norm(T.apply(src) - tgt, axis=1)


def _refine(T, src, tgt, w, radius, iters):
    inl = residuals(T, src, tgt) < radius
    for _ in range(iters):
        if inl.sum() < 3:
            break
        try:
            T_new = weighted_svd(src[inl], tgt[inl], w[inl])
        except DegenerateConfigurationError:
            break
        inl_new = residuals(T_new, src, tgt) < radius
        # a refinement that loses support is rejected
        if inl_new.sum() < inl.sum():
            break
        converged = np.array_equal(inl_new, inl)
        T, inl = T_new, inl_new
        if converged:
            break
    return T, inl


def _polish(T, inl, src, tgt, w, radius, iters, floor):
    """Refit on a tightening core of the inlier set.

    The core radius starts at half the acceptance radius and halves on each
    pass down to a quarter of it. Marginal inliers pull the fit off, so an
    iterate may give some of them up; the result is the last iterate whose
    count at the full radius stays at or above ``floor`` (the best hypothesis
    count), or the input when none does.
    """
    r, r_min = 0.5 * radius, 0.25 * radius
    cur, core_prev = T, None
    for _ in range(iters):
        core = residuals(cur, src, tgt) < r
        if core.sum() < 3 or (r <= r_min and core_prev is not None and np.array_equal(core, core_prev)):
            break
        try:
            cur = weighted_svd(src[core], tgt[core], w[core])
        except DegenerateConfigurationError:
            break
        inl_new = residuals(cur, src, tgt) < radius
        if inl_new.sum() >= floor:
            T, inl = cur, inl_new
        core_prev = core if r <= r_min else None
        r = max(0.5 * r, r_min)
    return T, inl


def _result(T, inl, src, tgt, n_candidates):
    ids = np.flatnonzero(inl)
    res = float(residuals(T, src[ids], tgt[ids]).mean()) if len(ids) else 0.0
    return RegistrationResult(T, ids, res, n_candidates)


def lgr(per_patch: Sequence[tuple], accept_radius: float = 0.10, refine_iters: int = 5,
        return_candidates: bool = False, n_refine: int = 0):
    """Local-to-global registration.

    ``per_patch`` is a sequence of ``(src, tgt, weights)`` arrays, one per
    matched patch pair. Every list with at least three correspondences yields
    a local hypothesis scored by its global inlier count. The ``n_refine``
    best hypotheses (all of them when 0) are refined on their inliers and the
    refined transform with the largest support wins.
    """
    lists = [(np.asarray(s, float).reshape(-1, 3), np.asarray(t, float).reshape(-1, 3),
              np.ones(len(s)) if w is None else np.asarray(w, float).reshape(-1)) for s, t, w in per_patch]
    if not lists:
        raise RegistrationFailure("no correspondences")
    src = np.vstack([l[0] for l in lists])
    tgt = np.vstack([l[1] for l in lists])
    w = np.concatenate([l[2] for l in lists])
    cands: list = []
    for k, (s, t, wk) in enumerate(lists):
        if len(s) < 3:
            continue
        try:
            Tk = weighted_svd(s, t, wk)
        except DegenerateConfigurationError:
            continue
        cands.append((k, Tk))
    if not cands:
        raise RegistrationFailure("no patch produced a valid hypothesis")
    Rs = np.stack([T.rotation for _, T in cands])
    ts = np.stack([T.translation for _, T in cands])
    counts = np.zeros(len(cands), dtype=np.int64)
    chunk = max(1, 2_000_000 // max(1, len(src)))
    for a in range(0, len(cands), chunk):
        pred = np.einsum("bij,nj->bni", Rs[a:a + chunk], src) + ts[a:a + chunk, None, :]
        counts[a:a + chunk] = (np.linalg.norm(pred - tgt[None], axis=2) < accept_radius).sum(axis=1)
    top = np.argsort(-counts, kind="stable")
    if n_refine > 0:
        top = top[:n_refine]
    T, inl = None, None
    for b in top:
        Tb, ib = _refine(cands[b][1], src, tgt, w, accept_radius, refine_iters)
        if inl is None or ib.sum() > inl.sum():
            T, inl = Tb, ib
    T, inl = _polish(T, inl, src, tgt, w, accept_radius, refine_iters, int(counts.max()))
    result = _result(T, inl, src, tgt, len(cands))
    if return_candidates:
        return result, [TransformCandidate(Tc, int(c), k) for (k, Tc), c in zip(cands, counts)]
    return result


def ransac(src, tgt, iterations: int = 1000, threshold: float = 0.10, seed: int = 0,
           weights=None) -> RegistrationResult:
    """Seeded three-point RANSAC with a weighted-SVD refit on the best inlier set."""
    src = np.asarray(src, dtype=np.float64).reshape(-1, 3)
    tgt = np.asarray(tgt, dtype=np.float64).reshape(-1, 3)
    n = len(src)
    if n < 3:
        raise RegistrationFailure(f"need >= 3 correspondences, got {n}")
    w = np.ones(n) if weights is None else np.asarray(weights, float)
    rng = np.random.default_rng(seed)
    best_T: Optional[RigidTransform] = None
    best_count = 0
    for _ in range(iterations):
        idx = rng.choice(n, 3, replace=False)
        try:
            T = weighted_svd(src[idx], tgt[idx])
        except DegenerateConfigurationError:
            continue
        c = int((residuals(T, src, tgt) < threshold).sum())
        if c > best_count:
            best_T, best_count = T, c
    if best_T is None or best_count < 3:
        raise RegistrationFailure("no RANSAC sample reached three inliers")
    T, inl = _refine(best_T, src, tgt, w, threshold, 5)
    return _result(T, inl, src, tgt, iterations)
