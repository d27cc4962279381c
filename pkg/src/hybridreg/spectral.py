"""Spectral matching over a set of 3D correspondences.

Pairs of correspondences that preserve length are compatible. The principal
eigenvector of the pairwise compatibility matrix scores how strongly each
correspondence belongs to the dominant consistent cluster, and a greedy sweep
over that eigenvector pulls the cluster out.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class SMConfig:
    tau: float = 0.1
    min_cluster: int = 3
    tol: float = 1e-8
    max_iters: int = 1000


@dataclass(frozen=True)
class ClusterResult:
    kept: np.ndarray
    eigvec: np.ndarray
    eigenvalue: float = 0.0
    zero_eigenvalue: bool = False


def compatibility(src, tgt, tau: float, src_ids=None, tgt_ids=None) -> np.ndarray:
    """Truncated-quadratic length-consistency scores, zero on the diagonal.

    With ``src_ids``/``tgt_ids`` given, two correspondences that share a source
    or a target element are scored 0 as well (one-to-one prior).
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    src = np.asarray(src, dtype=np.float64).reshape(-1, 3)
    tgt = np.asarray(tgt, dtype=np.float64).reshape(-1, 3)
    if src.shape != tgt.shape:
        raise ValueError("source and target correspondence arrays differ in shape")
    ds = np.linalg.norm(src[:, None, :] - src[None, :, :], axis=-1)
    dt = np.linalg.norm(tgt[:, None, :] - tgt[None, :, :], axis=-1)
    delta = np.abs(ds - dt)
    M = np.maximum(0.0, 1.0 - (delta / tau) ** 2)
    if src_ids is not None:
        s = np.asarray(src_ids)
        M[s[:, None] == s[None, :]] = 0.0
    if tgt_ids is not None:
        t = np.asarray(tgt_ids)
        M[t[:, None] == t[None, :]] = 0.0
    np.fill_diagonal(M, 0.0)
    return M


def principal_eigenvector(M, tol: float = 1e-8, max_iters: int = 1000):
    """Power iteration from the uniform vector.

    Returns ``(x, eigenvalue, zero_flag)``. For an all-zero matrix the uniform
    vector comes back with ``zero_flag`` set. Iterating on ``M + I`` keeps the
    eigenvectors but removes the sign oscillation that bipartite blocks cause
    in plain power iteration.
    """
    M = np.asarray(M, dtype=np.float64)
    n = M.shape[0]
    x = np.full(n, 1.0 / np.sqrt(n))
    if n == 0:
        return x, 0.0, True
    if not np.any(M):
        return x, 0.0, True
    lam = 0.0
    for _ in range(max_iters):
        Mx = M @ x
        lam = float(x @ Mx)
        if np.linalg.norm(Mx - lam * x) <= tol * abs(lam):
            break
        y = Mx + x
        x = y / np.linalg.norm(y)
    x = np.maximum(x, 0.0)
    x /= np.linalg.norm(x)
    return x, float(x @ M @ x), False


def greedy_main_cluster(M, eigvec, min_cluster: int = 3) -> ClusterResult:
    """Greedy extraction of the dominant cluster.

    Repeatedly take the alive, not-yet-accepted entry with the largest
    eigenvector value (ties by lowest index), accept it and kill every alive
    entry with zero affinity to it. Stops when the best value is 0 or when
    only ``min_cluster`` entries are still alive; in the latter case all
    survivors are kept.
    """
    M = np.asarray(M, dtype=np.float64)
    x = np.asarray(eigvec, dtype=np.float64)
    n = len(x)
    alive = np.ones(n, dtype=bool)
    accepted = np.zeros(n, dtype=bool)
    order = np.lexsort((np.arange(n), -x))
    while True:
        if alive.sum() <= min_cluster:
            accepted |= alive
            break
        cand = [i for i in order if alive[i] and not accepted[i]]
        if not cand or x[cand[0]] <= 1e-12:
            break
        best = cand[0]
        accepted[best] = True
        conflict = (M[best] == 0.0) & alive & ~accepted
        alive &= ~conflict
    return ClusterResult(np.flatnonzero(accepted), x)


def spectral_filter(src, tgt, cfg: SMConfig = SMConfig(), src_ids=None, tgt_ids=None) -> ClusterResult:
    src = np.asarray(src, dtype=np.float64).reshape(-1, 3)
    if len(src) == 0:
        return ClusterResult(np.zeros(0, dtype=np.int64), np.zeros(0), 0.0, True)
    M = compatibility(src, tgt, cfg.tau, src_ids, tgt_ids)
    x, lam, zero = principal_eigenvector(M, cfg.tol, cfg.max_iters)
    res = greedy_main_cluster(M, x, cfg.min_cluster)
    return ClusterResult(res.kept, x, lam, zero)
