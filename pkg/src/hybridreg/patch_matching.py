"""Patch partition and dual-class patch matching."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List

import numpy as np
from scipy.spatial import cKDTree

from .sampler import NON_SALIENT, SALIENT, HybridNodes
from .spectral import SMConfig, spectral_filter


@dataclass(frozen=True)
class MatchConfig:
    K: int = 128
    keep_fraction: float = 0.10
    temperature: float = 0.05


@dataclass(frozen=True)
class PatchPartition:
    node_of: np.ndarray
    members: List[np.ndarray]
    labels: np.ndarray

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(m) for m in self.members], dtype=np.int64)


def point_to_node_group(dense, nodes) -> PatchPartition:
    """Assign every dense point to its nearest node; ties go to the lowest node id."""
    pts = getattr(dense, "points", dense)
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
    if isinstance(nodes, HybridNodes):
        node_pts, labels = nodes.points, nodes.labels
    else:
        node_pts = np.asarray(nodes, dtype=np.float64).reshape(-1, 3)
        labels = np.full(len(node_pts), SALIENT, dtype=np.int8)
    if len(node_pts) == 0:
        raise ValueError("point-to-node grouping needs at least one node")
    k = min(8, len(node_pts))
    d, idx = cKDTree(node_pts).query(pts, k=k)
    d = d.reshape(len(pts), k)
    idx = idx.reshape(len(pts), k)
    # exact distances so ties are decided on the same numbers as a brute-force scan
    d = np.linalg.norm(pts[:, None, :] - node_pts[idx], axis=-1)
    dmin = d.min(axis=1, keepdims=True)
    tied = d == dmin
    node_of = np.where(tied, idx, np.iinfo(np.int64).max).min(axis=1)
    if k < len(node_pts):
        # every candidate tied: the true tie set may extend past the k returned
        full = tied.all(axis=1)
        for i in np.flatnonzero(full):
            dd = np.linalg.norm(node_pts - pts[i], axis=1)
            node_of[i] = int(np.flatnonzero(dd == dd.min())[0])
    order = np.argsort(node_of, kind="stable")
    bounds = np.searchsorted(node_of[order], np.arange(len(node_pts) + 1))
    members = [order[bounds[j]: bounds[j + 1]] for j in range(len(node_pts))]
    return PatchPartition(node_of, members, labels)


def limit_patches(partition: PatchPartition, dense_points, node_points, limit: int) -> List[np.ndarray]:
    """Keep each patch's ``limit`` members closest to its node."""
    out = []
    for j, ids in enumerate(partition.members):
        if len(ids) > limit:
            d = np.linalg.norm(dense_points[ids] - node_points[j], axis=1)
            ids = ids[np.argsort(d, kind="stable")[:limit]]
        out.append(ids)
    return out


def correlate(Fs, Ft) -> np.ndarray:
    A = np.asarray(getattr(Fs, "descriptors", Fs), dtype=np.float64)
    B = np.asarray(getattr(Ft, "descriptors", Ft), dtype=np.float64)
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"descriptor dimensions differ: {A.shape[1]} vs {B.shape[1]}")
    A = A / np.linalg.norm(A, axis=1, keepdims=True)
    B = B / np.linalg.norm(B, axis=1, keepdims=True)
    return A @ B.T


def dual_normalize(C, temperature: float = 1.0) -> np.ndarray:
    """Row softmax times column softmax of ``C / temperature``."""
    Z = np.asarray(C, dtype=np.float64) / temperature
    row = np.exp(Z - Z.max(axis=1, keepdims=True))
    row /= row.sum(axis=1, keepdims=True)
    col = np.exp(Z - Z.max(axis=0, keepdims=True))
    col /= col.sum(axis=0, keepdims=True)
    return row * col


def top_k_matches(C, K: int):
    """The ``K`` largest entries as ``(rows, cols, values)``; ties in row-major order."""
    if K < 1:
        raise ValueError("K must be >= 1")
    C = np.asarray(C, dtype=np.float64)
    flat = C.ravel()
    K = min(K, flat.size)
    # partition first, then an exact stable sort over everything tied with the K-th value
    kth = np.partition(flat, flat.size - K)[flat.size - K]
    cand = np.flatnonzero(flat >= kth)
    order = cand[np.argsort(-flat[cand], kind="stable")][:K]
    ii, jj = np.unravel_index(order, C.shape)
    return ii.astype(np.int64), jj.astype(np.int64), flat[order]


@dataclass
class PatchCorrespondences:
    """Node-level correspondences as ``(src_node, tgt_node, confidence)`` arrays."""

    C1: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    C2: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    C2_star: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    C: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    C2_sm: int = 0

    @property
    def pairs(self) -> np.ndarray:
        return self.C[:, :2].astype(np.int64)

    @property
    def confidences(self) -> np.ndarray:
        return self.C[:, 2]


def _branch(node_ids_s, node_ids_t, nfeat_s, nfeat_t, K, temperature):
    if len(node_ids_s) == 0 or len(node_ids_t) == 0:
        return np.zeros((0, 3))
    C = dual_normalize(correlate(nfeat_s[node_ids_s], nfeat_t[node_ids_t]), temperature)
    ii, jj, val = top_k_matches(C, K)
    return np.stack([node_ids_s[ii], node_ids_t[jj], val], axis=1)


def _sm(corrs, pts_s, pts_t, sm_cfg):
    if len(corrs) == 0:
        return corrs
    a = corrs[:, 0].astype(np.int64)
    b = corrs[:, 1].astype(np.int64)
    res = spectral_filter(pts_s[a], pts_t[b], sm_cfg, a, b)
    return corrs[res.kept]


def _top_fraction(corrs, fraction):
    if len(corrs) == 0:
        return corrs
    keep = max(1, int(math.ceil(fraction * len(corrs))))
    order = np.argsort(-corrs[:, 2], kind="stable")[:keep]
    return corrs[order]


def dual_class_match(nodes_s: HybridNodes, nodes_t: HybridNodes, feats_s, feats_t, K: int = 128,
                     sm_cfg: SMConfig = SMConfig(), keep_fraction: float = 0.10, temperature: float = 0.05,
                     sm_salient: bool = False, sm_non_salient: bool = True, dual: bool = True,
                     valid_s=None, valid_t=None) -> PatchCorrespondences:
    """Match salient and non-salient nodes in separate branches.

    ``feats_*`` are node descriptors aligned with ``nodes_*.points``.
    ``valid_*`` masks nodes with empty patches out. With ``dual=False`` all
    nodes are matched in one branch with no filtering (reported as ``C1``).
    """
    Fs = np.asarray(getattr(feats_s, "descriptors", feats_s), dtype=np.float64)
    Ft = np.asarray(getattr(feats_t, "descriptors", feats_t), dtype=np.float64)
    ls, lt = nodes_s.labels, nodes_t.labels
    vs = np.ones(len(ls), bool) if valid_s is None else np.asarray(valid_s, bool)
    vt = np.ones(len(lt), bool) if valid_t is None else np.asarray(valid_t, bool)
    ps, pt = nodes_s.points, nodes_t.points

    if not dual:
        C1 = _branch(np.flatnonzero(vs), np.flatnonzero(vt), Fs, Ft, K, temperature)
        return PatchCorrespondences(C1=C1, C=C1)

    C1 = _branch(np.flatnonzero(vs & (ls == SALIENT)), np.flatnonzero(vt & (lt == SALIENT)), Fs, Ft, K, temperature)
    C2 = _branch(np.flatnonzero(vs & (ls == NON_SALIENT)), np.flatnonzero(vt & (lt == NON_SALIENT)), Fs, Ft, K,
                 temperature)
    if sm_salient:
        C1 = _sm(C1, ps, pt, sm_cfg)
    C2_sm = _sm(C2, ps, pt, sm_cfg) if sm_non_salient else C2
    C2_star = _top_fraction(C2_sm, keep_fraction)
    C = np.vstack([C1, C2_star])
    return PatchCorrespondences(C1=C1, C2=C2, C2_star=C2_star, C=C, C2_sm=len(C2_sm))
