"""Suite drivers: plain evaluation and the two ablation sweeps.

Each cloud is prepared once (downsampling, normals, descriptors, hybrid
nodes) and every variant of a sweep reuses the prepared clouds, so a sweep
costs one preparation per pair plus one matching/registration per variant.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

from .config import Config
from .metrics import BenchmarkSummary, PairEvaluation, gt_correspondences, summarize
from .pipeline import Variant, evaluate, prepare, register_prepared
from .synth import ScenePair

log = logging.getLogger(__name__)

NODE_CHOICE = {
    "grid-superpoint": Variant(nodes="grid", dual=False),
    "non-salient-only": Variant(nodes="non-salient", dual=False),
    "salient-only": Variant(nodes="salient", dual=False),
    "hybrid": Variant(nodes="hybrid", dual=False),
    "hybrid+dual": Variant(nodes="hybrid", dual=True),
}

SM_PLACEMENT = {
    "neither": Variant(sm_salient=False, sm_non_salient=False),
    "salient-only": Variant(sm_salient=True, sm_non_salient=False),
    "both": Variant(sm_salient=True, sm_non_salient=True),
    "non-salient-only": Variant(sm_salient=False, sm_non_salient=True),
}

MODES = {"node-choice": NODE_CHOICE, "sm-placement": SM_PLACEMENT, "default": {"hybrid+dual": Variant()}}


@dataclass
class SuiteReport:
    mode: str
    summaries: Dict[str, BenchmarkSummary]
    config: dict = field(default_factory=dict)
    seconds: float = 0.0

    def to_dict(self):
        return {
            "mode": self.mode,
            "seconds": self.seconds,
            "config": self.config,
            "variants": {k: s.to_dict() for k, s in self.summaries.items()},
        }


def _pair_records(args) -> Dict[str, PairEvaluation]:
    k, pair, cfg, variants = args
    ps = prepare(pair.source, cfg)
    pt = prepare(pair.target, cfg)
    gt = gt_correspondences(pair.source.points, pair.target.points, pair.T_gt, 2 * cfg.eval.step)
    name = f"{pair.recipe}-{k:03d}"
    out = {}
    for vname, variant in variants.items():
        res = register_prepared(ps, pt, cfg, variant)
        out[vname] = evaluate(res, pair, cfg, gt, name)
        log.debug("%s %s rmse=%.3f ir=%.3f", name, vname, out[vname].rmse, out[vname].ir)
    return out


def run_suite(pairs: Sequence[ScenePair], cfg: Config = Config(), mode: str = "default",
              variants: Dict[str, Variant] = None, jobs: int = 1) -> SuiteReport:
    """Evaluate every variant of ``mode`` on every pair of the suite."""
    if variants is None:
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}; choose from {sorted(MODES)}")
        variants = MODES[mode]
    t0 = time.perf_counter()
    work = [(k, p, cfg, variants) for k, p in enumerate(pairs)]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(jobs) as ex:
            per_pair = list(ex.map(_pair_records, work))
    else:
        per_pair = [_pair_records(w) for w in work]
    records: Dict[str, List[PairEvaluation]] = {v: [r[v] for r in per_pair] for v in variants}
    e = cfg.eval
    summaries = {v: summarize(recs, e.fmr_tau, e.rmse_thresh) for v, recs in records.items()}
    return SuiteReport(mode, summaries, cfg.to_flat(), time.perf_counter() - t0)


def ablation_suite(mode: str, pairs: Sequence[ScenePair], cfg: Config = Config(), jobs: int = 1) -> SuiteReport:
    if mode not in ("node-choice", "sm-placement"):
        raise ValueError(f"ablation mode must be node-choice or sm-placement, got {mode!r}")
    return run_suite(pairs, cfg, mode, jobs=jobs)
