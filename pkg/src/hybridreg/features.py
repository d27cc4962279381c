"""Hand-crafted local descriptors.

Each dense point gets a 33-bin histogram of Darboux-frame angles between its
normal and the normals of its neighbours (three angle features, 11 bins each).
The features are taken in absolute value so the histogram does not depend on
the sign of either normal; that makes it rotation invariant even though the
normals themselves are only defined up to sign.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import sparse

from .core import PointCloud, SpatialIndex

DEFAULT_BINS = 11
N_ANGLE_FEATURES = 3


@dataclass(frozen=True)
class FeatureSet:
    descriptors: np.ndarray
    flags: Optional[np.ndarray] = None

    def __post_init__(self):
        desc = np.array(self.descriptors, dtype=np.float64).reshape(len(self.descriptors), -1)
        desc.setflags(write=False)
        object.__setattr__(self, "descriptors", desc)

    @property
    def d(self) -> int:
        return self.descriptors.shape[1]

    def __len__(self) -> int:
        return self.descriptors.shape[0]

    def subset(self, ids) -> "FeatureSet":
        ids = np.asarray(ids, dtype=np.int64)
        return FeatureSet(self.descriptors[ids], None if self.flags is None else self.flags[ids])

    def to_text(self, path) -> None:
        np.savetxt(path, self.descriptors, fmt="%.9g")


def _orient(normals: np.ndarray) -> np.ndarray:
    """Flip normals into the +z hemisphere, using +x then +y to break ties."""
    out = normals.copy()
    eps = 1e-12
    key = np.where(np.abs(out[:, 2]) > eps, out[:, 2],
                   np.where(np.abs(out[:, 0]) > eps, out[:, 0], out[:, 1]))
    out[key < 0] *= -1.0
    return out


def estimate_normals(cloud: PointCloud, radius: float, index: Optional[SpatialIndex] = None):
    """PCA normals over the closed-in-self, open-at-``radius`` neighbourhood.

    Returns ``(cloud_with_normals, degenerate)`` where ``degenerate`` marks
    points with fewer than three points in their neighbourhood; those get
    ``(0, 0, 1)``.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    n = len(cloud)
    if index is None:
        index = SpatialIndex(cloud)
    qi, pj, _ = index.radius_pairs(cloud.points, radius, exclude_self=False)
    counts = np.bincount(qi, minlength=n)
    nbr = index.points[pj]
    safe = np.maximum(counts, 1)
    mean = np.stack([np.bincount(qi, weights=nbr[:, a], minlength=n) for a in range(3)], axis=1) / safe[:, None]
    diff = nbr - mean[qi]
    cov = np.zeros((n, 3, 3))
    for a in range(3):
        for b in range(a, 3):
            s = np.bincount(qi, weights=diff[:, a] * diff[:, b], minlength=n)
            cov[:, a, b] = s
            cov[:, b, a] = s
    _, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]
    degenerate = counts < 3
    normals[degenerate] = (0.0, 0.0, 1.0)
    normals = _orient(normals / np.linalg.norm(normals, axis=1, keepdims=True))
    return cloud.with_normals(normals), degenerate


def _soft_hist(values: np.ndarray, owner: np.ndarray, weights: np.ndarray, n_owner: int, bins: int) -> np.ndarray:
    """Linear-interpolation histograms of values in [0, 1], one row per owner.

    ``values`` may hold several features as columns; their histograms are laid
    side by side, ``bins`` entries each.
    """
    nf = values.shape[1] if values.ndim == 2 else 1
    values = values.reshape(len(values), nf)
    x = np.clip(values, 0.0, 1.0) * bins - 0.5
    lo = np.floor(x)
    frac = x - lo
    lo = lo.astype(np.int64)
    # mass pushed past either end belongs to the edge bin
    base = (owner * (nf * bins))[:, None] + np.arange(nf) * bins
    lo_bin = base + np.clip(lo, 0, bins - 1)
    hi_bin = base + np.clip(lo + 1, 0, bins - 1)
    w = weights[:, None]
    idx = np.concatenate([lo_bin.ravel(), hi_bin.ravel()])
    wts = np.concatenate([(w * (1.0 - frac)).ravel(), (w * frac).ravel()])
    h = np.bincount(idx, weights=wts, minlength=n_owner * nf * bins)
    # bincount hands back integers when there is nothing to count
    return h.astype(np.float64, copy=False).reshape(n_owner, nf * bins)


def _cross(a, b):
    return np.stack([a[:, 1] * b[:, 2] - a[:, 2] * b[:, 1],
                     a[:, 2] * b[:, 0] - a[:, 0] * b[:, 2],
                     a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]], axis=1)


def _dot(a, b):
    return np.einsum("ij,ij->i", a, b)


def pair_features(p, n_p, q, n_q) -> np.ndarray:
    """Sign-insensitive Darboux-frame features for point pairs, each in [0, 1].

    Columns: ``|n_p . d|``, ``|v . n_q|``, ``|cos theta|`` with ``d`` the unit
    offset, ``v = d x n_p`` and ``theta`` the azimuth of ``n_q`` in the frame.
    """
    d = q - p
    dist = np.sqrt(_dot(d, d))
    d = d / np.where(dist > 0, dist, 1.0)[:, None]
    u = n_p
    phi = np.abs(_dot(u, d))
    v = _cross(d, u)
    vn = np.sqrt(_dot(v, v))
    ok = vn > 1e-9
    v = v * np.where(ok, 1.0 / np.where(ok, vn, 1.0), 0.0)[:, None]
    w = _cross(u, v)
    alpha = np.abs(_dot(v, n_q))
    un = _dot(u, n_q)
    wn = _dot(w, n_q)
    rad = np.hypot(un, wn)
    cos_theta = np.where(rad > 1e-12, np.abs(un) / np.where(rad > 0, rad, 1.0), 1.0)
    # offset parallel to the normal leaves the frame undefined; use the normal-only term
    alpha = np.where(ok, alpha, 0.0)
    cos_theta = np.where(ok, cos_theta, np.abs(un))
    return np.stack([phi, alpha, cos_theta], axis=1)


def _spfh(index, support, queries, radius, bins):
    """Unnormalised per-query histograms plus the ``(qi, pj, dist)`` pairs used."""
    n = len(queries)
    qi, pj, dist = index.radius_pairs(queries.points, radius, exclude_self=True)
    feats = pair_features(queries.points[qi], queries.normals[qi], support.points[pj], support.normals[pj])
    weights = 1.0 - 0.5 * dist / radius
    hist = _soft_hist(feats, qi, weights, n, bins)
    return hist, (qi, pj, dist)


def _l1(h):
    s = h.sum(axis=1, keepdims=True)
    return h / np.where(s > 0, s, 1.0)


def compute_descriptors(support: PointCloud, radius: float, queries: Optional[PointCloud] = None,
                        bins: int = DEFAULT_BINS, index: Optional[SpatialIndex] = None,
                        aggregate: bool = False) -> FeatureSet:
    """Descriptors for every point of ``queries`` (default: ``support`` itself).

    Neighbours are drawn from ``support`` within the open ``radius`` ball. Each
    neighbour contributes with weight ``1 - dist / (2 radius)`` so the rim
    counts half as much as the centre. Points without neighbours get a uniform
    histogram and a set flag.

    With ``aggregate`` the histogram of each query is blended with the
    inverse-distance weighted mean of its neighbours' own histograms (the fast
    point feature histogram construction), which widens the context to about
    twice the radius at no extra dimension.
    """
    if support.normals is None:
        raise ValueError("descriptor support cloud needs normals")
    same = queries is None or queries is support
    if queries is None:
        queries = support
    if queries.normals is None:
        raise ValueError("descriptor queries need normals")
    if index is None:
        index = SpatialIndex(support)
    n = len(queries)
    hist, (qi, pj, dist) = _spfh(index, support, queries, radius, bins)
    empty = np.bincount(qi, minlength=n) == 0
    if aggregate:
        own = _l1(hist)
        sup = own if same else _l1(_spfh(index, support, support, radius, bins)[0])
        W = sparse.csr_matrix((1.0 / dist, (qi, pj)), shape=(n, len(support)))
        wsum = np.asarray(W.sum(axis=1)).ravel()
        hist = own + (W @ sup) / np.where(wsum > 0, wsum, 1.0)[:, None]
    hist[empty] = 1.0
    hist /= hist.sum(axis=1, keepdims=True)
    hist /= np.linalg.norm(hist, axis=1, keepdims=True)
    return FeatureSet(hist, empty)


def point_descriptor(cloud: PointCloud, point_id: int, radius: float, bins: int = DEFAULT_BINS) -> np.ndarray:
    query = cloud.select([point_id])
    return compute_descriptors(cloud, radius, query, bins).descriptors[0]


def node_descriptor(member_descriptors) -> np.ndarray:
    m = np.asarray(member_descriptors, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] == 0:
        raise ValueError("a node descriptor needs at least one member")
    mean = m.mean(axis=0)
    norm = np.linalg.norm(mean)
    if norm == 0:
        raise ValueError("member descriptors cancel out")
    return mean / norm


def node_descriptors(features: FeatureSet, members) -> FeatureSet:
    """Aggregate ``features`` over each member list; empty patches get zero rows."""
    out = np.zeros((len(members), features.d))
    empty = np.zeros(len(members), dtype=bool)
    for k, ids in enumerate(members):
        if len(ids) == 0:
            empty[k] = True
            continue
        out[k] = node_descriptor(features.descriptors[ids])
    return FeatureSet(out, empty)
