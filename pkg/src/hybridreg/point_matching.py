"""Dense point matching inside matched patch pairs.

Cost matrices are scaled descriptor inner products. A log-domain Sinkhorn with
an extra dustbin row and column turns each one into a soft assignment, and
point pairs are read off by mutual top-k selection on the inner block.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
from scipy.special import logsumexp

SALIENT_CLASS = "salient"
NON_SALIENT_CLASS = "non-salient"


@dataclass(frozen=True)
class PointConfig:
    alpha: float = 0.0
    sinkhorn_iters: int = 100
    k: int = 3
    patch_limit: int = 64


@dataclass(frozen=True)
class CostMatrix:
    entries: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    label: str = SALIENT_CLASS


def patch_cost(FP, FQ, label: str = SALIENT_CLASS, rows=None, cols=None) -> CostMatrix:
    P = np.asarray(getattr(FP, "descriptors", FP), dtype=np.float64)
    Q = np.asarray(getattr(FQ, "descriptors", FQ), dtype=np.float64)
    if P.ndim != 2 or Q.ndim != 2 or len(P) == 0 or len(Q) == 0:
        raise ValueError("patch cost needs two non-empty patches")
    if P.shape[1] != Q.shape[1]:
        raise ValueError(f"descriptor dimensions differ: {P.shape[1]} vs {Q.shape[1]}")
    d = P.shape[1]
    rows = np.arange(len(P)) if rows is None else np.asarray(rows)
    cols = np.arange(len(Q)) if cols is None else np.asarray(cols)
    return CostMatrix(P @ Q.T / np.sqrt(d), rows, cols, label)


def sinkhorn_batch(scores: np.ndarray, row_counts, col_counts, alpha: float, iters: int) -> np.ndarray:
    """Dustbin Sinkhorn on a zero-padded stack of score matrices.

    ``scores`` has shape ``(B, M, N)``; item ``b`` uses its top-left
    ``row_counts[b] x col_counts[b]`` block. Returns ``(B, M + 1, N + 1)``
    assignments whose dustbin sits in the last row/column; padded entries are
    zero. Rows (columns) of the real block sum to 1; the dustbin row (column)
    carries the remaining ``n`` (``m``).
    """
    if iters < 1:
        raise ValueError("sinkhorn needs at least one iteration")
    S = np.asarray(scores, dtype=np.float64)
    B, M, N = S.shape
    m = np.asarray(row_counts, dtype=np.int64).reshape(B)
    n = np.asarray(col_counts, dtype=np.int64).reshape(B)
    row_ok = np.arange(M)[None, :] < m[:, None]
    col_ok = np.arange(N)[None, :] < n[:, None]
    row_ok = np.concatenate([row_ok, np.ones((B, 1), bool)], axis=1)
    col_ok = np.concatenate([col_ok, np.ones((B, 1), bool)], axis=1)

    Z = np.full((B, M + 1, N + 1), float(alpha))
    Z[:, :M, :N] = S
    Z = np.where(row_ok[:, :, None] & col_ok[:, None, :], Z, -np.inf)

    norm = -np.log((m + n).astype(np.float64))
    log_mu = np.where(row_ok, norm[:, None], -np.inf)
    log_mu[:, M] = np.log(n) + norm
    log_nu = np.where(col_ok, norm[:, None], -np.inf)
    log_nu[:, N] = np.log(m) + norm

    u = np.zeros((B, M + 1))
    v = np.zeros((B, N + 1))
    with np.errstate(invalid="ignore"):
        for _ in range(iters):
            u = log_mu - logsumexp(Z + v[:, None, :], axis=2)
            u = np.where(row_ok, u, -np.inf)
            v = log_nu - logsumexp(Z + u[:, :, None], axis=1)
            v = np.where(col_ok, v, -np.inf)
        logP = Z + u[:, :, None] + v[:, None, :] - norm[:, None, None]
    return np.where(np.isfinite(logP), np.exp(logP), 0.0)


def sinkhorn(M, alpha: float = 0.0, iters: int = 100) -> np.ndarray:
    """Soft assignment with dustbin for a single ``m x n`` score matrix."""
    S = np.asarray(getattr(M, "entries", M), dtype=np.float64)
    m, n = S.shape
    return sinkhorn_batch(S[None], [m], [n], alpha, iters)[0]


def _topk_mask(S: np.ndarray, k: int, axis: int) -> np.ndarray:
    """True where an entry is among the k largest along ``axis`` (ties: lower index first)."""
    order = np.argsort(-S, axis=axis, kind="stable")
    ranks = np.empty_like(order)
    idx = np.arange(S.shape[axis])
    if axis == 1:
        np.put_along_axis(ranks, order, np.broadcast_to(idx, S.shape), axis=1)
    else:
        np.put_along_axis(ranks, order, np.broadcast_to(idx[:, None], S.shape), axis=0)
    return ranks < k


def mutual_top_k(S, k: int, has_dustbin: bool = True):
    """``(i, j, score)`` for entries in the top ``k`` of both their row and column.

    When ``has_dustbin`` is set the last row and column are excluded first.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    S = np.asarray(S, dtype=np.float64)
    if has_dustbin:
        S = S[:-1, :-1]
    if S.size == 0:
        return np.zeros((0, 2), dtype=np.int64), np.zeros(0)
    mask = _topk_mask(S, k, axis=1) & _topk_mask(S, k, axis=0)
    ii, jj = np.nonzero(mask)
    return np.stack([ii, jj], axis=1), S[ii, jj]


def match_patch_pairs(feats_s, feats_t, members_s: Sequence[np.ndarray], members_t: Sequence[np.ndarray],
                      pairs, cfg: PointConfig, labels=None) -> List[tuple]:
    """Run cost → Sinkhorn → mutual top-k over many patch pairs at once.

    ``pairs`` holds ``(node_s, node_t)`` rows; ``members_*`` map node ids to
    dense point ids (already truncated to the patch limit). Returns one
    ``(src_ids, tgt_ids, confidences)`` tuple per pair, in input order.
    """
    Ds = feats_s.descriptors
    Dt = feats_t.descriptors
    d = Ds.shape[1]
    out = []
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if len(pairs) == 0:
        return out
    rows = [members_s[a] for a, _ in pairs]
    cols = [members_t[b] for _, b in pairs]
    mcount = np.array([len(r) for r in rows])
    ncount = np.array([len(c) for c in cols])
    Mx, Nx = int(mcount.max()), int(ncount.max())
    scores = np.zeros((len(pairs), Mx, Nx))
    for b, (r, c) in enumerate(zip(rows, cols)):
        scores[b, : len(r), : len(c)] = Ds[r] @ Dt[c].T / np.sqrt(d)
    assign = sinkhorn_batch(scores, mcount, ncount, cfg.alpha, cfg.sinkhorn_iters)
    for b, (r, c) in enumerate(zip(rows, cols)):
        block = assign[b, : len(r), : len(c)]
        ij, conf = mutual_top_k(block, cfg.k, has_dustbin=False)
        out.append((r[ij[:, 0]], c[ij[:, 1]], conf))
    return out
