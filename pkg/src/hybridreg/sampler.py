"""Hybrid node sampling: salient keypoints plus a uniform non-salient fill.

Salient candidates come from the eigen-structure of an inverse-distance
weighted neighbourhood covariance (an ISS-style detector) on the finer of the
two coarse levels. Greedy non-maximum suppression on the smallest eigenvalue
thins them out, and points of the coarsest level that sit farther than
``sigma`` from every salient point fill the featureless regions.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np
from scipy.spatial import cKDTree

from .core import PointCloud, SpatialIndex

SALIENT = 1
NON_SALIENT = 0


@dataclass(frozen=True)
class SamplerConfig:
    r: float = 0.15
    gamma1: float = 0.6
    gamma2: float = 0.6
    nms_radius: float = 0.10
    sigma: float = 0.15
    min_neighbors: int = 5

    def __post_init__(self):
        for name in ("r", "nms_radius", "sigma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"sampler.{name} must be positive")
        for name in ("gamma1", "gamma2"):
            if not 0 < getattr(self, name) <= 1:
                raise ValueError(f"sampler.{name} must lie in (0, 1]")
        if self.min_neighbors < 1:
            raise ValueError("sampler.min_neighbors must be >= 1")


@dataclass(frozen=True)
class SaliencyRecord:
    point_id: int
    eigenvalues: tuple
    v: float
    passes_ratio_test: bool


class SaliencyTable:
    """Per-point saliency of a cloud, stored column-wise.

    Iterating yields :class:`SaliencyRecord` objects; the array attributes are
    what the rest of the pipeline uses.
    """

    def __init__(self, eigenvalues: np.ndarray, passes: np.ndarray, neighbor_counts: np.ndarray):
        self.eigenvalues = eigenvalues
        self.passes = passes
        self.neighbor_counts = neighbor_counts
        for a in (eigenvalues, passes, neighbor_counts):
            a.setflags(write=False)

    @property
    def v(self) -> np.ndarray:
        return self.eigenvalues[:, 2]

    def __len__(self) -> int:
        return len(self.passes)

    def __getitem__(self, i: int) -> SaliencyRecord:
        lam = tuple(float(x) for x in self.eigenvalues[i])
        return SaliencyRecord(int(i), lam, lam[2], bool(self.passes[i]))

    def __iter__(self) -> Iterator[SaliencyRecord]:
        return (self[i] for i in range(len(self)))


def ratio_test(eigenvalues: np.ndarray, gamma1: float, gamma2: float) -> np.ndarray:
    """Vectorised eigenvalue-ratio test on descending ``(N, 3)`` eigenvalues.

    An isotropically empty neighbourhood (``l1 == 0``) fails. When ``l2 == 0``
    with ``l1 > 0`` the second ratio is read as 0 so needle-like neighbourhoods
    stay salient.
    """
    lam = np.asarray(eigenvalues, dtype=np.float64).reshape(-1, 3)
    l1, l2, l3 = lam[:, 0], lam[:, 1], lam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = np.where(l1 > 0, l2 / np.where(l1 > 0, l1, 1.0), np.inf)
        r2 = np.where(l2 > 0, l3 / np.where(l2 > 0, l2, 1.0), 0.0)
    return (l1 > 0) & (r1 <= gamma1) & (r2 <= gamma2)


def weighted_covariances(cloud: PointCloud, index: SpatialIndex, r: float):
    """Inverse-distance weighted covariance of each point's open ``r``-ball.

    Returns ``(cov, counts)`` with ``cov`` of shape ``(N, 3, 3)``. Coincident
    neighbours are skipped because their weight would be infinite.
    """
    n = len(cloud)
    qi, pj, d = index.radius_pairs(cloud.points, r, exclude_self=True)
    diff = cloud.points[qi] - index.points[pj]
    w = 1.0 / d
    cov = np.zeros((n, 3, 3))
    for a in range(3):
        for b in range(a, 3):
            s = np.bincount(qi, weights=w * diff[:, a] * diff[:, b], minlength=n)
            cov[:, a, b] = s
            cov[:, b, a] = s
    wsum = np.bincount(qi, weights=w, minlength=n)
    counts = np.bincount(qi, minlength=n)
    nz = wsum > 0
    cov[nz] /= wsum[nz, None, None]
    return cov, counts


def iss_saliency(P2: PointCloud, index: Optional[SpatialIndex], cfg: SamplerConfig) -> SaliencyTable:
    if len(P2) == 0:
        raise ValueError("saliency needs a non-empty cloud")
    if index is None:
        index = SpatialIndex(P2)
    cov, counts = weighted_covariances(P2, index, cfg.r)
    lam = np.linalg.eigvalsh(cov)[:, ::-1]
    # eigvalsh is only accurate to ~eps * l1; below that a value is rounding
    # noise whose order flips under rotation, so flush it to an exact zero and
    # let NMS fall back on its id tie-break
    lam = np.where(lam > 1e-12 * lam[:, :1], lam, 0.0)
    passes = ratio_test(lam, cfg.gamma1, cfg.gamma2) & (counts >= cfg.min_neighbors)
    return SaliencyTable(np.ascontiguousarray(lam), passes, counts)


def nms(records: SaliencyTable, P2: PointCloud, nms_radius: float) -> np.ndarray:
    """Greedy suppression in descending ``v`` order (ties by ascending id).

    A candidate is kept iff no already-kept point lies strictly within
    ``nms_radius``. Returns the kept point ids in acceptance order.
    """
    cand = np.flatnonzero(records.passes)
    if cand.size == 0:
        return np.zeros(0, dtype=np.int64)
    v = records.v[cand]
    order = cand[np.lexsort((cand, -v))]
    pts = P2.points[order]
    tree = cKDTree(pts)
    suppressed = np.zeros(len(order), dtype=bool)
    kept = []
    for k in range(len(order)):
        if suppressed[k]:
            continue
        kept.append(order[k])
        for j in tree.query_ball_point(pts[k], nms_radius):
            if j != k and np.linalg.norm(pts[j] - pts[k]) < nms_radius:
                suppressed[j] = True
    return np.asarray(kept, dtype=np.int64)


def select_non_salient(P3: PointCloud, salient, sigma: float) -> np.ndarray:
    """Ids of ``P3`` points farther than ``sigma`` from every salient point."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    sal = np.asarray(salient, dtype=np.float64).reshape(-1, 3)
    if len(sal) == 0:
        return np.arange(len(P3))
    d, _ = cKDTree(sal).query(P3.points, k=1)
    return np.flatnonzero(d > sigma)


@dataclass(frozen=True)
class HybridNodes:
    salient: np.ndarray
    non_salient: np.ndarray
    salient_ids: np.ndarray
    non_salient_ids: np.ndarray

    @property
    def points(self) -> np.ndarray:
        return np.vstack([self.salient.reshape(-1, 3), self.non_salient.reshape(-1, 3)])

    @property
    def labels(self) -> np.ndarray:
        return np.concatenate([
            np.full(len(self.salient), SALIENT, dtype=np.int8),
            np.full(len(self.non_salient), NON_SALIENT, dtype=np.int8),
        ])

    def __len__(self) -> int:
        return len(self.salient) + len(self.non_salient)

    @property
    def n_salient(self) -> int:
        return len(self.salient)

    @property
    def n_non_salient(self) -> int:
        return len(self.non_salient)

    @classmethod
    def from_points(cls, salient=None, non_salient=None) -> "HybridNodes":
        s = np.zeros((0, 3)) if salient is None else np.asarray(salient, dtype=np.float64).reshape(-1, 3)
        ns = np.zeros((0, 3)) if non_salient is None else np.asarray(non_salient, dtype=np.float64).reshape(-1, 3)
        return cls(s, ns, np.arange(len(s)), np.arange(len(ns)))

    def only(self, label: int) -> "HybridNodes":
        if label == SALIENT:
            return HybridNodes(self.salient, np.zeros((0, 3)), self.salient_ids, np.zeros(0, dtype=np.int64))
        return HybridNodes(np.zeros((0, 3)), self.non_salient, np.zeros(0, dtype=np.int64), self.non_salient_ids)


def hybrid_points(P2: PointCloud, P3: PointCloud, cfg: SamplerConfig, index: Optional[SpatialIndex] = None) -> HybridNodes:
    if len(P2) == 0 or len(P3) == 0:
        raise ValueError("hybrid sampling needs non-empty P2 and P3")
    records = iss_saliency(P2, index, cfg)
    sal_ids = nms(records, P2, cfg.nms_radius)
    salient = P2.points[sal_ids]
    ns_ids = select_non_salient(P3, salient, cfg.sigma)
    return HybridNodes(salient.copy(), P3.points[ns_ids].copy(), sal_ids, ns_ids)
