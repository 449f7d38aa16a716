import math

import numpy as np
import pytest

from autolabel3d.geometry import Box3D
from autolabel3d.refine import ClassSizePrior, inflate_box, orient_by_motion

PRIORS = ClassSizePrior(
    means={"car": (4.6, 1.9, 1.7)},
    minimums={"car": (2.8, 1.4, 1.0)},
)


def box(center=(10.0, 0.0, 0.85), size=(4.0, 2.0, 1.5), yaw=0.0):
    return Box3D(np.asarray(center), np.asarray(size), yaw)


class TestOrientByMotion:
    def test_below_threshold_unchanged(self):
        b = box(yaw=0.7)
        out = orient_by_motion(b, np.array([0.4, 0.0]))
        assert out.yaw == b.yaw
        assert np.array_equal(out.size, b.size)

    def test_exactly_at_threshold_unchanged(self):
        b = box(yaw=0.7)
        out = orient_by_motion(b, np.array([0.5, 0.0]))
        assert out.yaw == b.yaw

    def test_just_above_threshold_oriented(self):
        b = box(yaw=0.7)
        out = orient_by_motion(b, np.array([0.501, 0.0]))
        assert out.yaw == 0.0

    def test_positive_x_motion(self):
        out = orient_by_motion(box(yaw=2.1), np.array([3.0, 0.0]))
        assert out.yaw == pytest.approx(0.0)

    def test_perpendicular_motion_keeps_size_tuple(self):
        # prior yaw 0, size (4, 2): motion along +y swaps the footprint axes
        out = orient_by_motion(box(size=(4.0, 2.0, 1.5), yaw=0.0), np.array([0.0, 2.0]))
        assert out.yaw == pytest.approx(math.pi / 2)
        assert np.allclose(out.size, [4.0, 2.0, 1.5])

    def test_identity_property_below_threshold(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            b = box(yaw=rng.uniform(-math.pi, math.pi))
            v = rng.normal(size=2)
            v = 0.49 * v / np.linalg.norm(v)
            out = orient_by_motion(b, v)
            assert out.yaw == b.yaw
            assert np.array_equal(out.center, b.center)


class TestInflateBox:
    def test_no_op_when_large_enough(self):
        b = box(size=(4.0, 1.8, 1.5))
        out = inflate_box(b, "car", PRIORS, np.zeros(2))
        assert np.array_equal(out.size, b.size)
        assert np.array_equal(out.center, b.center)

    def test_unknown_class_unchanged(self):
        b = box(size=(0.1, 0.1, 0.1))
        out = inflate_box(b, "unicorn", PRIORS, np.zeros(2))
        assert np.array_equal(out.size, b.size)

    def test_width_inflation_shifts_away_from_ego(self):
        # car directly ahead (+x), yaw 0: width axis is +y, ego at origin
        b = box(center=(10.0, 1.0, 0.85), size=(4.0, 0.3, 1.5), yaw=0.0)
        out = inflate_box(b, "car", PRIORS, np.zeros(2))
        assert out.size[1] == pytest.approx(1.9)
        # shift = (1.9 - 0.3) / 2 = 0.8 along +y (away from ego)
        assert out.center[1] == pytest.approx(1.0 + 0.8)
        assert out.center[0] == pytest.approx(10.0)

    def test_height_inflation_keeps_bottom_face(self):
        b = box(center=(10.0, 0.0, 0.1), size=(4.0, 1.8, 0.2), yaw=0.0)
        out = inflate_box(b, "car", PRIORS, np.zeros(2))
        assert out.size[2] == pytest.approx(1.7)
        bottom_before = b.center[2] - b.size[2] / 2
        bottom_after = out.center[2] - out.size[2] / 2
        assert bottom_after == pytest.approx(bottom_before, abs=1e-9)

    def test_near_face_preserved(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            yaw = rng.uniform(-math.pi, math.pi)
            center = rng.uniform(-20, 20, 2)
            if np.linalg.norm(center) < 3:
                continue
            b = Box3D(
                np.array([center[0], center[1], 0.8]),
                np.array([rng.uniform(0.5, 2.7), rng.uniform(0.3, 1.3), 1.5]),
                yaw,
            )
            out = inflate_box(b, "car", PRIORS, np.zeros(2))
            for dim, axis in ((0, np.array([math.cos(yaw), math.sin(yaw)])), (1, np.array([-math.sin(yaw), math.cos(yaw)]))):
                # compare the face nearer to ego along this axis
                sign = np.sign((b.center[:2]) @ axis) or 1.0
                near_before = b.center[:2] @ axis - sign * b.size[dim] / 2
                near_after = out.center[:2] @ axis - sign * out.size[dim] / 2
                assert near_after == pytest.approx(near_before, abs=1e-9)

    def test_never_shrinks(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            b = Box3D(
                np.array([rng.uniform(-15, 15), rng.uniform(-15, 15), 0.8]),
                rng.uniform(0.1, 5.0, 3),
                rng.uniform(-math.pi, math.pi),
            )
            out = inflate_box(b, "car", PRIORS, np.zeros(2))
            assert np.all(out.size >= b.size - 1e-12)

    def test_idempotent(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            b = Box3D(
                np.array([rng.uniform(-15, 15), rng.uniform(-15, 15), 0.8]),
                rng.uniform(0.1, 5.0, 3),
                rng.uniform(-math.pi, math.pi),
            )
            once = inflate_box(b, "car", PRIORS, np.zeros(2))
            twice = inflate_box(once, "car", PRIORS, np.zeros(2))
            assert np.allclose(once.center, twice.center, atol=1e-12)
            assert np.allclose(once.size, twice.size, atol=1e-12)

    def test_velocity_and_frame_preserved(self):
        b = Box3D(np.array([10.0, 0, 0.1]), np.array([0.3, 0.3, 0.2]), 0.2, velocity=(1.0, 2.0))
        out = inflate_box(b, "car", PRIORS, np.zeros(2))
        assert np.array_equal(out.velocity, [1.0, 2.0])
        assert out.frame == b.frame


class TestPriorTable:
    def test_from_means_ratio(self):
        priors = ClassSizePrior.from_means({"car": (4.0, 2.0, 1.0)}, ratio=0.5)
        assert priors.minimum("car") == (2.0, 1.0, 0.5)

    def test_mean_must_dominate_minimum(self):
        with pytest.raises(ValueError):
            ClassSizePrior(means={"car": (1.0, 1.0, 1.0)}, minimums={"car": (2.0, 0.5, 0.5)})

    def test_unknown_class_is_none(self):
        assert PRIORS.mean("bus") is None
