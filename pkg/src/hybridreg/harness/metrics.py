"""Registration metrics: IR, FMR, RR, RRE and RTE."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from ..core import RigidTransform


@dataclass
class PairEvaluation:
    ir: float
    rre: float
    rte: float
    rmse: float
    fmr_ok: bool
    rr_ok: bool
    n_corr: int = 0
    failed: bool = False
    counts: dict = field(default_factory=dict)
    name: str = ""

    def to_dict(self):
        return asdict(self)


def inlier_ratio(src, tgt, T_gt: RigidTransform, tau: float = 0.1):
    """Fraction of correspondences within ``tau`` under the ground truth.

    Returns ``(ratio, empty)``; an empty set gives ``(0.0, True)``.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    src = np.asarray(src, dtype=np.float64).reshape(-1, 3)
    tgt = np.asarray(tgt, dtype=np.float64).reshape(-1, 3)
    if len(src) == 0:
        return 0.0, True
    d = np.linalg.norm(T_gt.apply(src) - tgt, axis=1)
    return float(np.mean(d < tau)), False


def fmr(pair_irs: Sequence[float], tau_ir: float = 0.05) -> float:
    irs = np.asarray(pair_irs, dtype=np.float64)
    return float(np.mean(irs > tau_ir)) if irs.size else 0.0


def rre_rte(T_est: RigidTransform, T_gt: RigidTransform):
    c = (np.trace(T_gt.rotation.T @ T_est.rotation) - 1.0) / 2.0
    rre = float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))
    rte = float(np.linalg.norm(T_est.translation - T_gt.translation))
    return rre, rte


def gt_correspondences(src, tgt, T_gt: RigidTransform, radius: float):
    """Mutual nearest neighbours between ``T_gt(src)`` and ``tgt`` closer than ``radius``."""
    moved = T_gt.apply(src)
    d_st, j = cKDTree(tgt).query(moved, k=1)
    _, i_back = cKDTree(moved).query(tgt, k=1)
    i = np.arange(len(src))
    ok = (i_back[j] == i) & (d_st < radius)
    return i[ok], j[ok]


def rmse(T_est: RigidTransform, src, tgt, gt_pairs) -> float:
    i, j = gt_pairs
    if len(i) == 0:
        return float("inf")
    r = T_est.apply(np.asarray(src)[i]) - np.asarray(tgt)[j]
    return float(np.sqrt(np.mean(np.sum(r * r, axis=1))))


def registration_recall(evals: Sequence[PairEvaluation], rmse_thresh: float = 0.2) -> float:
    if not evals:
        return 0.0
    return float(np.mean([e.rmse < rmse_thresh for e in evals]))


@dataclass
class BenchmarkSummary:
    rr: float
    fmr: float
    mean_ir: float
    median_rre: float
    median_rte: float
    n_pairs: int
    n_success: int
    records: List[PairEvaluation]

    def to_dict(self):
        d = asdict(self)
        d["records"] = [r.to_dict() for r in self.records]
        return d


def summarize(records: Sequence[PairEvaluation], fmr_tau: float = 0.05,
              rmse_thresh: float = 0.2) -> BenchmarkSummary:
    """Aggregate per-pair records; RRE/RTE medians use successful pairs only."""
    records = list(records)
    ok = [r for r in records if r.rmse < rmse_thresh]
    med = lambda xs: float(np.median(xs)) if xs else float("nan")
    return BenchmarkSummary(
        rr=registration_recall(records, rmse_thresh),
        fmr=fmr([r.ir for r in records], fmr_tau),
        mean_ir=float(np.mean([r.ir for r in records])) if records else 0.0,
        median_rre=med([r.rre for r in ok]),
        median_rte=med([r.rte for r in ok]),
        n_pairs=len(records),
        n_success=len(ok),
        records=records,
    )
