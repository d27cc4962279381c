"""Synthetic indoor scenes and partially overlapping scan pairs.

A recipe builds a composite surface from rectangles, boxes and cylinders,
sampled uniformly at random with roughly one point per ``step**2`` of area.
Two crops of that sample along a horizontal viewing axis give the source and
the target fragment, and the target crop is moved by the planted transform.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Tuple

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from ..core import PointCloud, RigidTransform, rotation_about_axis


class SceneGenerationError(ValueError):
    """The recipe cannot produce a pair with the requested overlap."""


@dataclass(frozen=True)
class ScenePair:
    source: PointCloud
    target: PointCloud
    T_gt: RigidTransform
    gt_overlap: float
    noise_sigma: float
    recipe: str = ""
    seed: int = 0
    step: float = 0.03


class _Sampler:
    def __init__(self, rng: np.random.Generator, step: float, jitter: float = 0.5):
        self.rng = rng
        self.step = step
        self.jitter = jitter
        self.parts = []

    def _grid(self, lu, lv):
        # jittered grid: one sample per cell, like a scanner's regular raster
        nu = max(1, int(round(lu / self.step)))
        nv = max(1, int(round(lv / self.step)))
        a, b = np.meshgrid(np.arange(nu), np.arange(nv), indexing="ij")
        jit = self.rng.uniform(0.0, 1.0, (nu * nv, 2)) * self.jitter + 0.5 * (1 - self.jitter)
        return np.stack([(a.ravel() + jit[:, 0]) / nu, (b.ravel() + jit[:, 1]) / nv], 1)

    def rect(self, origin, u, v):
        origin, u, v = (np.asarray(a, float) for a in (origin, u, v))
        s = self._grid(np.linalg.norm(u), np.linalg.norm(v))
        self.parts.append(origin + s[:, :1] * u + s[:, 1:] * v)

    def box(self, center_xy, size, yaw_deg, z0=0.0, bottom=False):
        lx, ly, lz = size
        R = rotation_about_axis((0, 0, 1), yaw_deg)
        ex, ey, ez = R[:, 0] * lx, R[:, 1] * ly, np.array([0, 0, lz])
        o = np.array([center_xy[0], center_xy[1], z0]) - 0.5 * ex - 0.5 * ey
        self.rect(o, ex, ez)
        self.rect(o + ey, ex, ez)
        self.rect(o, ey, ez)
        self.rect(o + ex, ey, ez)
        self.rect(o + ez, ex, ey)
        if bottom:
            self.rect(o, ex, ey)

    def cylinder(self, center_xy, radius, height, z0=0.0):
        g = self._grid(2 * np.pi * radius, height)
        th = 2 * np.pi * g[:, 0]
        z = height * g[:, 1] + z0
        self.parts.append(np.stack([center_xy[0] + radius * np.cos(th), center_xy[1] + radius * np.sin(th), z], 1))
        # lid: grid over the bounding square, clipped to the disc
        g = (self._grid(2 * radius, 2 * radius) - 0.5) * 2 * radius
        g = g[np.hypot(g[:, 0], g[:, 1]) <= radius]
        rr, th = np.hypot(g[:, 0], g[:, 1]), np.arctan2(g[:, 1], g[:, 0])
        self.parts.append(np.stack([center_xy[0] + rr * np.cos(th), center_xy[1] + rr * np.sin(th),
                                    np.full(len(rr), z0 + height)], 1))

    def points(self):
        return np.vstack(self.parts)


def _local(c, yaw):
    R = rotation_about_axis((0, 0, 1), yaw)[:2, :2]
    return lambda dx, dy: (c[0] + R[0, 0] * dx + R[0, 1] * dy, c[1] + R[1, 0] * dx + R[1, 1] * dy)


def _table(s: _Sampler, rng, c, yaw):
    L, W, H = rng.uniform([0.7, 0.5, 0.65], [1.4, 0.9, 0.8])
    at = _local(c, yaw)
    s.box(c, (L, W, 0.04), yaw, z0=H - 0.04, bottom=True)
    for sx in (-1, 1):
        for sy in (-1, 1):
            s.box(at(sx * (L / 2 - 0.06), sy * (W / 2 - 0.06)), (0.05, 0.05, H - 0.04), yaw)


def _chair(s: _Sampler, rng, c, yaw):
    w, seat = rng.uniform(0.4, 0.5), rng.uniform(0.42, 0.48)
    at = _local(c, yaw)
    s.box(c, (w, w, 0.05), yaw, z0=seat, bottom=True)
    for sx in (-1, 1):
        for sy in (-1, 1):
            s.box(at(sx * (w / 2 - 0.03), sy * (w / 2 - 0.03)), (0.04, 0.04, seat), yaw)
    s.box(at(0.0, -w / 2 + 0.025), (w, 0.05, rng.uniform(0.35, 0.5)), yaw, z0=seat + 0.05)


def _shelf(s: _Sampler, rng, c, yaw):
    W, D, H = rng.uniform([0.6, 0.25, 0.9], [1.2, 0.4, 1.8])
    at = _local(c, yaw)
    for sx in (-1, 1):
        s.box(at(sx * (W / 2 - 0.015), 0.0), (0.03, D, H), yaw)
    for z in np.linspace(0.05, H - 0.03, int(rng.integers(3, 6))):
        s.box(c, (W - 0.06, D, 0.03), yaw, z0=z, bottom=True)


def _cabinet(s: _Sampler, rng, c, yaw):
    size = rng.uniform([0.3, 0.3, 0.3], [0.9, 0.6, 1.0])
    s.box(c, size, yaw)
    if rng.uniform() < 0.5:
        small = size * rng.uniform(0.3, 0.6, 3)
        s.box(_local(c, yaw)(*rng.uniform(-0.1, 0.1, 2)), small, yaw + rng.uniform(-30, 30), z0=size[2])


def _furniture(s: _Sampler, rng, x_range, y_range, n_items):
    makers = (_table, _chair, _shelf, _cabinet)
    for _ in range(n_items):
        c = (rng.uniform(*x_range), rng.uniform(*y_range))
        yaw = rng.uniform(0, 360)
        if rng.uniform() < 0.15:
            s.cylinder(c, rng.uniform(0.08, 0.25), rng.uniform(0.3, 1.1))
        else:
            makers[int(rng.integers(len(makers)))](s, rng, c, yaw)


def _room(rng, step, width=4.0, depth=4.0, height=2.2, x0=0.0):
    s = _Sampler(rng, step)
    s.rect((x0, 0, 0), (width, 0, 0), (0, depth, 0))
    s.rect((x0, 0, 0), (width, 0, 0), (0, 0, height))
    s.rect((x0, depth, 0), (width, 0, 0), (0, 0, height))
    s.rect((x0, 0, 0), (0, depth, 0), (0, 0, height))
    _furniture(s, rng, (x0 + 0.5, x0 + width - 0.5), (0.5, depth - 0.5), int(rng.integers(6, 10)))
    return s.points(), np.array([1.0, 0.0, 0.0])


def _two_rooms(rng, step):
    s = _Sampler(rng, step)
    W, D, H = 3.5, 4.0, 2.2
    s.rect((0, 0, 0), (2 * W, 0, 0), (0, D, 0))
    s.rect((0, 0, 0), (2 * W, 0, 0), (0, 0, H))
    s.rect((0, D, 0), (2 * W, 0, 0), (0, 0, H))
    s.rect((0, 0, 0), (0, D, 0), (0, 0, H))
    # dividing wall with a doorway
    s.rect((W, 0, 0), (0, 1.4, 0), (0, 0, H))
    s.rect((W, 2.4, 0), (0, D - 2.4, 0), (0, 0, H))
    for x0 in (0.0, W):
        _furniture(s, rng, (x0 + 0.5, x0 + W - 0.5), (0.5, D - 0.5), int(rng.integers(4, 7)))
    return s.points(), np.array([1.0, 0.0, 0.0])


def _plane_dominant(rng, step):
    """Large planes meeting at shallow angles; very few sharp features."""
    s = _Sampler(rng, step)
    H = 2.2
    # a fan of wall segments with 140-160 degree turns between them
    heading = rng.uniform(-10, 10)
    p = np.array([0.0, 0.0])
    corners = [p.copy()]
    for _ in range(4):
        L = rng.uniform(1.4, 2.2)
        d = np.array([np.cos(np.deg2rad(heading)), np.sin(np.deg2rad(heading))])
        p = p + L * d
        corners.append(p.copy())
        heading += rng.uniform(20, 40)
    for a, b in zip(corners[:-1], corners[1:]):
        s.rect((a[0], a[1], 0), (b[0] - a[0], b[1] - a[1], 0), (0, 0, H))
    # floor under the fan, as a set of strips
    lo = np.min(corners, axis=0) - 0.2
    hi = np.max(corners, axis=0) + 2.5
    s.rect((lo[0], lo[1] - 2.5, 0), (hi[0] - lo[0], 0, 0), (0, hi[1] - lo[1] + 2.5, 0))
    # a shallow ramp and one low step: the only features off the walls
    c = corners[len(corners) // 2] + np.array([0.3, -1.5])
    s.rect((c[0], c[1], 0), (1.5, 0, 0), (0, 1.2, 0.25))
    pts = s.points()
    # keep the floor in front of the walls only
    centre = np.mean(corners, axis=0)
    chord = corners[-1] - corners[0]
    normal = np.array([chord[1], -chord[0]]) / np.linalg.norm(chord)
    keep = ((pts[:, :2] - centre) @ normal) < 2.5
    axis = np.array([chord[0], chord[1], 0.0]) / np.linalg.norm(chord)
    return pts[keep], axis


RECIPES: Dict[str, Callable] = {
    "room": _room,
    "two-rooms": _two_rooms,
    "plane-dominant": _plane_dominant,
}


def scene_points(recipe: str, seed: int, step: float = 0.03) -> Tuple[np.ndarray, np.ndarray]:
    if recipe not in RECIPES:
        raise SceneGenerationError(f"unknown recipe {recipe!r}; choose from {sorted(RECIPES)}")
    rng = np.random.default_rng(seed)
    pts, axis = RECIPES[recipe](rng, step)
    # tilt the viewing axis so no wall is cut all at once
    yaw = rng.uniform(10, 25) * rng.choice([-1, 1])
    axis = rotation_about_axis((0, 0, 1), yaw) @ axis
    # arbitrary world orientation so no plane sits along a voxel layer
    R = Rotation.random(random_state=rng).as_matrix()
    t = rng.uniform(-1.0, 1.0, 3)
    return pts @ R.T + t, R @ axis


def _window_overlap(s, lo, width, shift):
    in_src = (s >= lo) & (s < lo + width)
    in_tgt = (s >= lo + shift) & (s < lo + shift + width)
    return in_src, in_tgt, (in_src & in_tgt).sum() / max(1, in_src.sum())


def crop_windows(points, axis, overlap: float, width_fraction: float = 0.5, tol: float = 0.05):
    """Source/target masks of two slabs along ``axis`` with the requested overlap.

    The overlap is the fraction of source points also inside the target slab.
    """
    s = points @ axis
    lo_all, hi_all = s.min(), s.max()
    width = width_fraction * (hi_all - lo_all)
    lo = lo_all
    a, b = 0.0, hi_all - lo_all - width
    if b <= 0:
        raise SceneGenerationError("scene too short for the crop width")
    in_src, in_tgt, ov = _window_overlap(s, lo, width, 0.0)
    if overlap >= 1.0 - 1e-12:
        return in_src, in_tgt, ov
    # overlap falls as the shift grows; bisect on the shift
    for _ in range(60):
        mid = 0.5 * (a + b)
        in_src, in_tgt, ov = _window_overlap(s, lo, width, mid)
        if ov > overlap:
            a = mid
        else:
            b = mid
    in_src, in_tgt, ov = _window_overlap(s, lo, width, 0.5 * (a + b))
    if abs(ov - overlap) > tol:
        raise SceneGenerationError(f"cannot reach overlap {overlap:.2f} (best {ov:.2f})")
    return in_src, in_tgt, ov


def synth_pair(recipe: str, T: RigidTransform, overlap: float, noise_sigma: float, seed: int,
               step: float = 0.03, width_fraction: float = 0.5) -> ScenePair:
    if not 0.0 < overlap <= 1.0:
        raise SceneGenerationError("overlap must lie in (0, 1]")
    pts, axis = scene_points(recipe, seed, step)
    in_src, in_tgt, ov = crop_windows(pts, axis, overlap, width_fraction)
    rng = np.random.default_rng([seed, 1])
    src = pts[in_src]
    tgt = pts[in_tgt]
    if noise_sigma > 0:
        src = src + rng.normal(0.0, noise_sigma, src.shape)
        tgt = tgt + rng.normal(0.0, noise_sigma, tgt.shape)
    return ScenePair(PointCloud(src), PointCloud(T.apply(tgt)), T, float(ov), noise_sigma, recipe, seed, step)


def measured_overlap(pair: ScenePair, radius=None) -> float:
    """Fraction of source points with a target point within ``radius`` (2 steps) under ``T_gt``."""
    radius = 2 * pair.step if radius is None else radius
    moved = pair.T_gt.apply(pair.source.points)
    d, _ = cKDTree(pair.target.points).query(moved, k=1)
    return float(np.mean(d < radius))


def random_pose(rng: np.random.Generator, max_angle: float = 180.0, max_translation: float = 1.0) -> RigidTransform:
    axis = rng.normal(size=3)
    return RigidTransform(rotation_about_axis(axis, rng.uniform(0, max_angle)),
                          rng.uniform(-max_translation, max_translation, 3))


def make_suite(recipe: str, n_pairs: int, seed: int, overlap=(0.3, 0.8), noise_sigma: float = 0.005,
               step: float = 0.03, max_angle: float = 180.0):
    """Seeded list of pairs with overlap drawn uniformly from ``overlap``."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n_pairs):
        ov = float(rng.uniform(*overlap)) if isinstance(overlap, tuple) else float(overlap)
        T = random_pose(rng, max_angle)
        out.append(synth_pair(recipe, T, ov, noise_sigma, seed * 1000 + k, step))
    return out
