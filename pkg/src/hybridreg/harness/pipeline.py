"""End-to-end coarse-to-fine registration of one scan pair."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..core import PointCloud, RigidTransform, SpatialIndex, grid_downsample
from ..features import FeatureSet, compute_descriptors, estimate_normals, node_descriptors
from ..patch_matching import dual_class_match, limit_patches, point_to_node_group
from ..point_matching import match_patch_pairs
from ..registration import RegistrationFailure, RegistrationResult, lgr
from ..sampler import NON_SALIENT, SALIENT, HybridNodes, hybrid_points
from .config import Config
from .metrics import PairEvaluation, gt_correspondences, inlier_ratio, rmse, rre_rte
from .synth import ScenePair

log = logging.getLogger(__name__)

NODE_MODES = ("hybrid", "salient", "non-salient", "grid")


@dataclass(frozen=True)
class Variant:
    """Which nodes to use and how to match them (the ablation switches)."""

    nodes: str = "hybrid"
    dual: bool = True
    sm_salient: bool = False
    sm_non_salient: bool = True

    def __post_init__(self):
        if self.nodes not in NODE_MODES:
            raise ValueError(f"unknown node mode {self.nodes!r}")


@dataclass
class Prepared:
    """Everything about one cloud that does not depend on the variant."""

    raw: PointCloud
    dense: PointCloud
    P2: PointCloud
    P3: PointCloud
    features: FeatureSet
    nodes: HybridNodes


def prepare(cloud: PointCloud, cfg: Config) -> Prepared:
    g = cfg.grid
    P1 = grid_downsample(cloud, g.p1)
    P2 = grid_downsample(cloud, g.p2)
    P3 = grid_downsample(cloud, g.p3)
    dense = {1: P1, 2: P2}[g.dense]
    idx = SpatialIndex(dense)
    # one search at the widest radius serves normals, saliency and (same-level) descriptors
    radii = [cfg.features.normal_radius, cfg.sampler.r if g.dense == 2 else 0.0]
    if cfg.features.support == g.dense:
        radii.append(cfg.features.radius)
    idx.radius_pairs(dense.points, max(radii))
    dense, _ = estimate_normals(dense, cfg.features.normal_radius, idx)
    f = cfg.features
    if f.support == g.dense:
        feats = compute_descriptors(dense, f.radius, dense, f.bins, idx, aggregate=f.aggregate)
    else:
        # coarser neighbour support: normals still come from the dense level
        sup = {1: P1, 2: P2, 3: P3}[f.support]
        sup, _ = estimate_normals(sup, f.normal_radius, idx)
        feats = compute_descriptors(sup, f.radius, dense, f.bins, aggregate=f.aggregate)
    nodes = hybrid_points(P2, P3, cfg.sampler, idx if g.dense == 2 else None)
    return Prepared(cloud, dense, P2, P3, feats, nodes)


def variant_nodes(prep: Prepared, mode: str) -> HybridNodes:
    if mode == "hybrid":
        return prep.nodes
    if mode == "salient":
        return prep.nodes.only(SALIENT)
    if mode == "non-salient":
        return prep.nodes.only(NON_SALIENT)
    return HybridNodes(np.zeros((0, 3)), prep.P3.points.copy(), np.zeros(0, dtype=np.int64), np.arange(len(prep.P3)))


@dataclass
class PipelineOutput:
    result: Optional[RegistrationResult]
    src_corr: np.ndarray
    tgt_corr: np.ndarray
    conf: np.ndarray
    counts: dict = field(default_factory=dict)
    error: str = ""

    @property
    def T(self) -> RigidTransform:
        return self.result.T if self.result is not None else RigidTransform.identity()


def register_prepared(ps: Prepared, pt: Prepared, cfg: Config, variant: Variant = Variant()) -> PipelineOutput:
    ns = variant_nodes(ps, variant.nodes)
    nt = variant_nodes(pt, variant.nodes)
    counts = {"n_sap_src": ns.n_salient, "n_nsap_src": ns.n_non_salient,
              "n_sap_tgt": nt.n_salient, "n_nsap_tgt": nt.n_non_salient}
    empty = np.zeros((0, 3))
    if len(ns) == 0 or len(nt) == 0:
        counts.update(C1=0, C2=0, C2_star=0, C=0, point_corr=0)
        return PipelineOutput(None, empty, empty, np.zeros(0), counts, "no nodes")

    limit = cfg.point.patch_limit
    part_s = point_to_node_group(ps.dense, ns)
    part_t = point_to_node_group(pt.dense, nt)
    mem_s = limit_patches(part_s, ps.dense.points, ns.points, limit)
    mem_t = limit_patches(part_t, pt.dense.points, nt.points, limit)
    nf_s = node_descriptors(ps.features, mem_s)
    nf_t = node_descriptors(pt.features, mem_t)

    dual = variant.dual and variant.nodes == "hybrid"
    pc = dual_class_match(ns, nt, nf_s, nf_t, cfg.match.K, cfg.sm, cfg.match.keep_fraction,
                          cfg.match.temperature, variant.sm_salient, variant.sm_non_salient, dual,
                          valid_s=~nf_s.flags, valid_t=~nf_t.flags)
    counts.update(C1=len(pc.C1), C2=len(pc.C2), C2_sm=pc.C2_sm, C2_star=len(pc.C2_star), C=len(pc.C))

    per_patch = match_patch_pairs(ps.features, pt.features, mem_s, mem_t, pc.pairs, cfg.point)
    lists = [(ps.dense.points[a], pt.dense.points[b], w) for a, b, w in per_patch]
    src_corr = np.vstack([l[0] for l in lists]) if lists else empty
    tgt_corr = np.vstack([l[1] for l in lists]) if lists else empty
    conf = np.concatenate([l[2] for l in lists]) if lists else np.zeros(0)
    counts["point_corr"] = len(src_corr)
    try:
        result = lgr(lists, cfg.reg.accept_radius, cfg.reg.refine_iters, n_refine=cfg.reg.n_refine)
    except RegistrationFailure as exc:
        log.info("registration failed: %s", exc)
        return PipelineOutput(None, src_corr, tgt_corr, conf, counts, str(exc))
    counts["inliers"] = len(result.inliers)
    return PipelineOutput(result, src_corr, tgt_corr, conf, counts)


def evaluate(out: PipelineOutput, pair: ScenePair, cfg: Config, gt_pairs=None, name: str = "") -> PairEvaluation:
    e = cfg.eval
    order = np.argsort(-out.conf, kind="stable")[: e.max_corr]
    ir, _ = inlier_ratio(out.src_corr[order], out.tgt_corr[order], pair.T_gt, e.ir_tau)
    T = out.T
    rre, rte = rre_rte(T, pair.T_gt)
    if gt_pairs is None:
        gt_pairs = gt_correspondences(pair.source.points, pair.target.points, pair.T_gt, 2 * e.step)
    failed = out.result is None
    err = float("inf") if failed else rmse(T, pair.source.points, pair.target.points, gt_pairs)
    return PairEvaluation(
        ir=ir, rre=rre, rte=rte, rmse=err,
        fmr_ok=ir > e.fmr_tau, rr_ok=(not failed) and err < e.rmse_thresh,
        n_corr=int(min(len(out.conf), e.max_corr)), failed=failed,
        counts=dict(out.counts, max_corr=e.max_corr), name=name,
    )


def run_pipeline(pair: ScenePair, cfg: Config = Config(), variant: Variant = Variant()):
    """Register ``pair`` and score it against its ground truth.

    Returns ``(RegistrationResult or None, PairEvaluation)``; a failed
    registration is scored with the identity transform and flagged.
    """
    ps = prepare(pair.source, cfg)
    pt = prepare(pair.target, cfg)
    out = register_prepared(ps, pt, cfg, variant)
    return out.result, evaluate(out, pair, cfg)
