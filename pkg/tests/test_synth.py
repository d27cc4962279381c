import numpy as np
import pytest

from hybridreg.core import RigidTransform, random_transform
from hybridreg.harness.synth import (RECIPES, SceneGenerationError, make_suite, measured_overlap, scene_points,
                                     synth_pair)


def test_full_overlap_identity_is_point_for_point():
    pair = synth_pair("room", RigidTransform(), 1.0, 0.0, 0)
    assert np.array_equal(pair.source.points, pair.target.points)


def test_full_overlap_target_is_moved_source():
    T = random_transform(np.random.default_rng(1))
    pair = synth_pair("room", T, 1.0, 0.0, 0)
    assert np.allclose(pair.target.points, T.apply(pair.source.points), atol=1e-12)


def test_two_rooms_measured_overlap():
    pair = synth_pair("two-rooms", random_transform(np.random.default_rng(7)), 0.3, 0.0, 7)
    assert 0.25 <= measured_overlap(pair) <= 0.35


@pytest.mark.parametrize("recipe", sorted(RECIPES))
@pytest.mark.parametrize("overlap", [0.3, 0.6])
def test_requested_overlap_within_tolerance(recipe, overlap):
    pair = synth_pair(recipe, random_transform(np.random.default_rng(2)), overlap, 0.0, 3)
    assert abs(pair.gt_overlap - overlap) <= 0.05
    assert abs(measured_overlap(pair) - overlap) <= 0.05


def test_bit_deterministic():
    T = random_transform(np.random.default_rng(5))
    a = synth_pair("plane-dominant", T, 0.5, 0.005, 11)
    b = synth_pair("plane-dominant", T, 0.5, 0.005, 11)
    assert a.source.points.tobytes() == b.source.points.tobytes()
    assert a.target.points.tobytes() == b.target.points.tobytes()
    c = synth_pair("plane-dominant", T, 0.5, 0.005, 12)
    assert c.source.points.shape != a.source.points.shape or not np.array_equal(c.source.points, a.source.points)


def test_noise_level():
    T = RigidTransform()
    clean = synth_pair("room", T, 1.0, 0.0, 4)
    noisy = synth_pair("room", T, 1.0, 0.01, 4)
    d = noisy.source.points - clean.source.points
    assert d.std() == pytest.approx(0.01, rel=0.05)


def test_errors():
    with pytest.raises(SceneGenerationError):
        synth_pair("room", RigidTransform(), 0.0, 0.0, 0)
    with pytest.raises(SceneGenerationError):
        synth_pair("room", RigidTransform(), 1.5, 0.0, 0)
    with pytest.raises(SceneGenerationError):
        scene_points("cathedral", 0)
    # wide crops cannot slide far enough apart for a small overlap
    with pytest.raises(SceneGenerationError, match="overlap"):
        synth_pair("room", RigidTransform(), 0.3, 0.0, 0, width_fraction=0.8)


def test_make_suite_shape():
    pairs = make_suite("room", 3, 9, (0.4, 0.6))
    assert len(pairs) == 3
    assert all(0.35 <= p.gt_overlap <= 0.65 for p in pairs)
    assert len({p.seed for p in pairs}) == 3
