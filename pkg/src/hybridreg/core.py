"""Geometric primitives shared by every stage of the pipeline.

Clouds are stored as ``(N, 3)`` float64 arrays. All containers are frozen and
their arrays are marked read-only, so they can be handed to worker threads
without copying.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree

ORTHO_TOL = 1e-9
NORMAL_TOL = 1e-6


class EmptyInputError(ValueError):
    """Raised when an operation needs at least one point and got none."""


def _frozen(a, dtype=np.float64, shape=None) -> np.ndarray:
    # already frozen arrays are shared rather than copied
    if isinstance(a, np.ndarray) and a.dtype == dtype and not a.flags.writeable:
        if shape is None or a.shape == shape:
            return a
    a = np.array(a, dtype=dtype, copy=True)
    if shape is not None:
        a = a.reshape(shape)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    normals: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = _frozen(self.points, shape=(-1, 3) if np.ndim(self.points) != 2 else None)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "points", pts)
        if self.normals is not None:
            nrm = _frozen(self.normals, shape=(-1, 3) if np.ndim(self.normals) != 2 else None)
            if nrm.shape != pts.shape:
                raise ValueError(f"normals shape {nrm.shape} does not match points {pts.shape}")
            norms = np.linalg.norm(nrm, axis=1)
            if nrm.size and np.max(np.abs(norms - 1.0)) > NORMAL_TOL:
                raise ValueError("normals must be unit length")
            object.__setattr__(self, "normals", nrm)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def has_normals(self) -> bool:
        return self.normals is not None

    def select(self, ids) -> "PointCloud":
        ids = np.asarray(ids, dtype=np.int64)
        normals = None if self.normals is None else self.normals[ids]
        return PointCloud(self.points[ids], normals)

    def with_normals(self, normals) -> "PointCloud":
        return PointCloud(self.points, normals)


@dataclass(frozen=True)
class RigidTransform:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = _frozen(self.rotation).reshape(3, 3)
        t = _frozen(self.translation).reshape(3)
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise ValueError("transform must be finite")
        if np.max(np.abs(R.T @ R - np.eye(3))) > ORTHO_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > ORTHO_TOL:
            raise ValueError("rotation determinant must be +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, matrix) -> "RigidTransform":
        m = np.asarray(matrix, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError(f"expected a 4x4 matrix, got {m.shape}")
        return cls(m[:3, :3], m[:3, 3])

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "RigidTransform":
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Return ``self ∘ other``: apply ``other`` first, then ``self``."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return self.compose(other)

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation


class SpatialIndex:
    """Radius and nearest-neighbour queries over a fixed point set."""

    def __init__(self, cloud):
        pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
        self.points = _frozen(pts, shape=(-1, 3) if np.ndim(pts) != 2 else None)
        self._tree = cKDTree(self.points)
        self._pair_cache = None

    def __len__(self) -> int:
        return self.points.shape[0]

    def radius_neighbors(self, query, r: float, exclude_self: bool = True) -> List[Tuple[int, float]]:
        """Indexed points strictly closer than ``r``, ascending by distance.

        A point of the index that coincides with the query is dropped when
        ``exclude_self`` is set.
        """
        if r <= 0:
            raise ValueError("radius must be positive")
        q = np.asarray(query, dtype=np.float64).reshape(3)
        # cKDTree's ball is closed, so filter to the open ball afterwards.
        ids = np.asarray(self._tree.query_ball_point(q, r), dtype=np.int64)
        if ids.size == 0:
            return []
        d = np.linalg.norm(self.points[ids] - q, axis=1)
        keep = d < r
        if exclude_self:
            keep &= d > 0.0
        ids, d = ids[keep], d[keep]
        order = np.lexsort((ids, d))
        return [(int(ids[k]), float(d[k])) for k in order]

    def radius_pairs(self, queries, r: float, exclude_self: bool = True):
        """Vectorised radius search for many queries.

        Returns flat ``(query_ids, point_ids, distances)`` arrays, grouped by
        query id. Used by the descriptor and saliency code where one python
        call per point would dominate the runtime.
        """
        if r <= 0:
            raise ValueError("radius must be positive")
        q = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        cached = self._pair_cache
        if cached is not None and cached[0] is queries and r <= cached[1]:
            # a wider search over the same read-only queries already holds the answer
            qi, pj, d = cached[2:]
        else:
            # csr conversion sorts by (query, point) in compiled code
            m = cKDTree(q).sparse_distance_matrix(self._tree, r, output_type="coo_matrix").tocsr()
            m.sort_indices()
            qi = np.repeat(np.arange(m.shape[0], dtype=np.int64), np.diff(m.indptr))
            pj = m.indices.astype(np.int64)
            # recompute distances so the strict test matches a direct scan bit for bit
            diff = self.points[pj] - q[qi]
            d = np.sqrt(np.einsum("ij,ij->i", diff, diff))
            if isinstance(queries, np.ndarray) and not queries.flags.writeable:
                self._pair_cache = (queries, r, qi, pj, d)
        keep = d < r
        if exclude_self:
            keep &= d > 0.0
        return qi[keep], pj[keep], d[keep]

    def nearest(self, queries, k: int = 1):
        q = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        return self._tree.query(q, k=k)


def radius_neighbors(index: SpatialIndex, query, r: float) -> List[Tuple[int, float]]:
    return index.radius_neighbors(query, r)


def grid_downsample(cloud: PointCloud, cell: float) -> PointCloud:
    """One centroid per occupied voxel of side ``cell``, in lexicographic voxel order."""
    if cell <= 0:
        raise ValueError("cell must be positive")
    if len(cloud) == 0:
        raise EmptyInputError("cannot downsample an empty cloud")
    keys = np.floor(cloud.points / cell).astype(np.int64)
    # np.unique on rows sorts lexicographically, which fixes the output order.
    uniq, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    sums = np.zeros((len(uniq), 3))
    np.add.at(sums, inverse, cloud.points)
    centroids = sums / counts[:, None]
    normals = None
    if cloud.normals is not None:
        nsum = np.zeros((len(uniq), 3))
        np.add.at(nsum, inverse, cloud.normals)
        norm = np.linalg.norm(nsum, axis=1, keepdims=True)
        # opposite normals in one voxel cancel; fall back to the first member's normal
        first = np.full(len(uniq), -1, dtype=np.int64)
        first[inverse[::-1]] = np.arange(len(inverse))[::-1]
        fallback = cloud.normals[first]
        normals = np.where(norm > 1e-12, nsum / np.maximum(norm, 1e-12), fallback)
    return PointCloud(centroids, normals)


def apply_transform(cloud: PointCloud, T: RigidTransform) -> PointCloud:
    normals = None if cloud.normals is None else cloud.normals @ T.rotation.T
    if normals is not None:
        normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)
    return PointCloud(T.apply(cloud.points), normals)


def rotation_about_axis(axis, degrees: float) -> np.ndarray:
    """Rodrigues rotation matrix."""
    a = np.asarray(axis, dtype=np.float64)
    a = a / np.linalg.norm(a)
    th = np.deg2rad(degrees)
    K = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + np.sin(th) * K + (1 - np.cos(th)) * K @ K


def random_transform(rng: np.random.Generator, max_angle: float = 180.0, max_translation: float = 1.0) -> RigidTransform:
    axis = rng.normal(size=3)
    angle = rng.uniform(0.0, max_angle)
    t = rng.uniform(-max_translation, max_translation, size=3)
    return RigidTransform(rotation_about_axis(axis, angle), t)
