import json

import numpy as np
import pytest

from hybridreg.core import PointCloud, RigidTransform, random_transform, rotation_about_axis
from hybridreg.harness.ablation import MODES, ablation_suite, run_suite
from hybridreg.harness.config import Config
from hybridreg.harness.metrics import rre_rte
from hybridreg.harness.pipeline import Variant, run_pipeline
from hybridreg.harness.report import summary_table, write_json, write_suite_report
from hybridreg.harness.synth import ScenePair, synth_pair

COUNT_KEYS = ("n_sap_src", "n_nsap_src", "n_sap_tgt", "n_nsap_tgt", "C1", "C2", "C2_star", "C", "point_corr")


@pytest.fixture(scope="module")
def room_pair():
    T = RigidTransform(rotation_about_axis((0, 0, 1), 30), (0.5, 0.2, 0.1))
    return synth_pair("room", T, 0.6, 0.005, 0)


def test_self_registration_is_exact():
    pair = synth_pair("room", RigidTransform(), 1.0, 0.0, 1)
    res, ev = run_pipeline(pair)
    assert res is not None
    assert ev.rre < 0.01 and ev.rte < 1e-4


def test_planted_room_transform(room_pair):
    res, ev = run_pipeline(room_pair)
    assert res is not None and ev.rr_ok
    assert ev.rmse < 0.2
    for k in COUNT_KEYS:
        assert k in ev.counts
    assert ev.counts["C"] <= ev.counts["C1"] + ev.counts["C2"]
    assert ev.n_corr <= Config().eval.max_corr


def test_common_transform_invariance(room_pair):
    A = random_transform(np.random.default_rng(3))
    moved = ScenePair(PointCloud(A.apply(room_pair.source.points)), PointCloud(A.apply(room_pair.target.points)),
                      A @ room_pair.T_gt @ A.inverse(), room_pair.gt_overlap, room_pair.noise_sigma)
    _, ev0 = run_pipeline(room_pair)
    _, ev1 = run_pipeline(moved)
    assert ev0.rr_ok and ev1.rr_ok
    assert abs(ev0.rre - ev1.rre) < 1.0


def test_failure_is_recorded_not_raised():
    rng = np.random.default_rng(0)
    pair = ScenePair(PointCloud(rng.uniform(0, 0.02, (5, 3))), PointCloud(rng.uniform(0, 0.02, (5, 3))),
                     RigidTransform(), 1.0, 0.0)
    res, ev = run_pipeline(pair)
    assert res is None and ev.failed and not ev.rr_ok
    assert ev.rmse == np.inf


def test_variant_validation():
    with pytest.raises(ValueError):
        Variant(nodes="random")


@pytest.mark.parametrize("mode", ["node-choice", "sm-placement"])
def test_single_pair_suite_shape(mode, room_pair, tmp_path):
    rep = ablation_suite(mode, [room_pair])
    assert list(rep.summaries) == list(MODES[mode])
    for s in rep.summaries.values():
        assert s.n_pairs == 1 and len(s.records) == 1
    files = write_suite_report(rep, tmp_path, figures=(mode == "node-choice"))
    assert all(f.exists() for f in files)
    d = json.loads((tmp_path / "report.json").read_text())
    assert set(d["variants"]) == set(MODES[mode])
    table = (tmp_path / "summary.txt").read_text().splitlines()
    assert len(table) == 3 + len(MODES[mode])


def test_ablation_mode_check(room_pair):
    with pytest.raises(ValueError):
        ablation_suite("default", [room_pair])
    with pytest.raises(ValueError):
        run_suite([room_pair], mode="nope")


def test_json_writes_non_finite_as_strings(tmp_path):
    write_json({"a": float("inf"), "b": [np.float32(1.5), float("nan")], "c": np.arange(2)}, tmp_path / "x.json")
    assert json.loads((tmp_path / "x.json").read_text()) == {"a": "inf", "b": [1.5, "nan"], "c": [0, 1]}
