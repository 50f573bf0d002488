import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats
from scipy.spatial.transform import Rotation

from regbench.cloud import PointCloud
from regbench.errors import InvalidBounds, NotARotation
from regbench.transform import (
    PerturbationBounds,
    RigidTransform,
    apply,
    axis_angle_matrix,
    compose,
    exp_so3,
    from_row_major12,
    invert,
    problem_rng,
    rotation_angle,
    sample_perturbation,
    sample_unit_axis,
    to_row_major12,
)
from support import random_transform

seeds = st.integers(0, 2**32 - 1)


def rz(deg):
    return RigidTransform(axis_angle_matrix([0, 0, 1], math.radians(deg)), np.zeros(3))


def test_group_examples():
    rng = np.random.default_rng(0)
    for _ in range(20):
        t = random_transform(rng)
        e = compose(t, invert(t))
        np.testing.assert_allclose(e.rotation, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(e.translation, 0, atol=1e-12)
    c = PointCloud(rng.normal(size=(10, 3)))
    assert apply(RigidTransform.identity(), c) == c
    p = apply(rz(90), PointCloud([[1.0, 0, 0]])).points[0]
    np.testing.assert_allclose(p, [0, 1, 0], atol=1e-12)


def test_compose_order_matches_matrices():
    rng = np.random.default_rng(1)
    a, b = random_transform(rng), random_transform(rng)
    np.testing.assert_allclose((a @ b).matrix, a.matrix @ b.matrix, atol=1e-12)


def test_rotation_oracle_against_scipy():
    rng = np.random.default_rng(2)
    for _ in range(50):
        rotvec = rng.normal(size=3)
        ref = Rotation.from_rotvec(rotvec).as_matrix()
        np.testing.assert_allclose(exp_so3(rotvec), ref, atol=1e-12)
        theta = np.linalg.norm(rotvec)
        np.testing.assert_allclose(axis_angle_matrix(rotvec, theta), ref, atol=1e-12)
        assert rotation_angle(ref) == pytest.approx(Rotation.from_matrix(ref).magnitude(), abs=1e-7)


@settings(max_examples=200, deadline=None)
@given(seeds)
def test_apply_preserves_distances(seed):
    rng = np.random.default_rng(seed)
    t = random_transform(rng, max_trans=100)
    p, q = rng.normal(scale=10, size=(2, 3))
    tp, tq = t.transform_points(np.array([p, q]))
    assert abs(np.linalg.norm(tp - tq) - np.linalg.norm(p - q)) < 1e-9


def test_apply_preserves_order_and_rotates_covariances():
    rng = np.random.default_rng(4)
    pts = rng.normal(size=(5, 3))
    cov = np.stack([np.diag([1.0, 2.0, 3.0])] * 5)
    t = random_transform(rng)
    out = apply(t, PointCloud(pts, covariances=cov))
    np.testing.assert_allclose(out.points, pts @ t.rotation.T + t.translation)
    np.testing.assert_allclose(out.covariances[0], t.rotation @ cov[0] @ t.rotation.T)


def test_row_major_examples():
    assert to_row_major12(RigidTransform.identity()) == [1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0]
    rng = np.random.default_rng(5)
    for _ in range(100):
        t = random_transform(rng)
        assert from_row_major12(to_row_major12(t)) == t
    reflect = [1, 0, 0, 0, 0, 1, 0, 0, 0, 0, -1, 0]
    with pytest.raises(NotARotation):
        from_row_major12(reflect)
    with pytest.raises(NotARotation):
        from_row_major12([1, 0.01, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0])


def test_row_major_layout():
    m = np.eye(4)
    m[:3, :3] = rz(30).rotation
    m[:3, 3] = [7, 8, 9]
    vals = to_row_major12(RigidTransform.from_matrix(m))
    np.testing.assert_array_equal(vals[0:4], m[0])
    np.testing.assert_array_equal(vals[8:12], m[2])


def test_unit_axis_norm_and_distribution():
    rng = np.random.default_rng(6)
    n = 100_000
    axes = np.array([sample_unit_axis(rng) for _ in range(n)])
    assert np.abs(np.linalg.norm(axes, axis=1) - 1).max() < 1e-12
    assert np.linalg.norm(axes.mean(axis=0)) < 0.02
    octant = (axes > 0) @ [1, 2, 4]
    counts = np.bincount(octant, minlength=8)
    sigma = math.sqrt(n * (1 / 8) * (7 / 8))
    assert np.all(np.abs(counts - n / 8) < 5 * sigma)


def test_unit_axis_rejects_tiny_draws():
    class Stub:
        def __init__(self):
            self.draws = [np.array([1e-9, 0, 0]), np.array([0, 3.0, 4.0])]

        def standard_normal(self, size):
            return self.draws.pop(0)

    np.testing.assert_allclose(sample_unit_axis(Stub()), [0, 0.6, 0.8])


def test_perturbation_degenerate_bounds():
    rng = np.random.default_rng(7)
    pivot = np.array([3.0, -2.0, 1.0])
    zero = sample_perturbation(PerturbationBounds(0, 0, 0, 0), pivot, rng)
    np.testing.assert_allclose(zero.matrix, np.eye(4), atol=1e-15)
    a, b = 0.7, 2.5
    for _ in range(20):
        t = sample_perturbation(PerturbationBounds(a, a, b, b), pivot, rng)
        assert abs(t.angle - a) < 1e-12
        # pivot is only moved by the translation component
        moved = t.transform_points(pivot[None])[0]
        assert abs(np.linalg.norm(moved - pivot) - b) < 1e-12


def test_pivot_displaced_only_by_translation():
    bounds = PerturbationBounds.global_(2.0, 5.0)
    for seed in range(100):
        pivot = np.random.default_rng(seed + 1000).normal(scale=50, size=3)
        t = sample_perturbation(bounds, pivot, np.random.default_rng(seed))
        # replay the draws: axis, angle, direction, magnitude
        replay = np.random.default_rng(seed)
        axis = sample_unit_axis(replay)
        angle = replay.uniform(bounds.rot_min, bounds.rot_max)
        direction = sample_unit_axis(replay)
        magnitude = replay.uniform(bounds.trans_min, bounds.trans_max)
        moved = t.transform_points(pivot[None])[0]
        assert np.linalg.norm(moved - (pivot + magnitude * direction)) < 1e-9
        ref = Rotation.from_rotvec(angle * axis).as_matrix()
        np.testing.assert_allclose(t.rotation, ref, atol=1e-12)


def test_rotation_magnitude_ks():
    rng = np.random.default_rng(9)
    bounds = PerturbationBounds.local(0.0, 1.0)
    sample = [sample_perturbation(bounds, np.zeros(3), rng) for _ in range(3000)]
    angles = np.array([t.angle for t in sample])
    trans = np.array([np.linalg.norm(t.translation) for t in sample])
    assert stats.kstest(angles, stats.uniform(0, math.radians(45)).cdf).statistic < 0.035
    assert stats.kstest(trans, stats.uniform(0, 1).cdf).statistic < 0.035


@pytest.mark.parametrize(
    "args",
    [(0.2, 0.1, 0, 1), (0, 1, -1, 1), (0, 4.0, 0, 1), (0, 1, 0, float("inf"))],
)
def test_invalid_bounds(args):
    with pytest.raises(InvalidBounds):
        PerturbationBounds(*args)


def test_bounds_defaults():
    g = PerturbationBounds.global_(1, 2)
    assert (g.rot_min, g.rot_max, g.regime) == (math.radians(45), math.radians(180), "global")
    loc = PerturbationBounds.local(0, 1)
    assert (loc.rot_min, loc.rot_max, loc.regime) == (0.0, math.radians(45), "local")


def test_problem_rng_streams():
    a = problem_rng(42, 3, 7).random(4)
    np.testing.assert_array_equal(a, problem_rng(42, 3, 7).random(4))
    assert not np.array_equal(a, problem_rng(42, 3, 8).random(4))
    assert not np.array_equal(a, problem_rng(43, 3, 7).random(4))


def test_constructor_rejects_non_rotation():
    with pytest.raises(NotARotation):
        RigidTransform(np.diag([1.0, 1.0, 2.0]), np.zeros(3))
    with pytest.raises(ValueError):
        RigidTransform(np.eye(3), np.zeros(2))
