import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autolabel3d.errors import InvalidTransformError
from autolabel3d.geometry import (
    Box3D,
    CameraCalib,
    PointCloud,
    RigidTransform,
    normalize_yaw,
    project_point,
    project_points,
    transform_points,
)


def _cloud(points, frame="ego"):
    pts = np.asarray(points, dtype=np.float64)
    return PointCloud(pts, np.zeros(len(pts)), frame)


def _random_transform(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return RigidTransform(q, rng.normal(scale=5.0, size=3))


class TestTransformPoints:
    def test_identity_is_bitwise(self):
        cloud = _cloud([[1.5, -2.25, 3.0], [0.1, 0.2, 0.3]])
        out = transform_points(cloud, RigidTransform.identity())
        assert np.array_equal(out.points, cloud.points)
        assert np.array_equal(out.timestamps, cloud.timestamps)
        assert out.frame == cloud.frame

    def test_pure_translation(self):
        t = RigidTransform(np.array([1.0, 0, 0, 0]), np.array([1.0, 2.0, 3.0]))
        out = transform_points(_cloud([[0.0, 0.0, 0.0]]), t)
        assert np.allclose(out.points[0], [1.0, 2.0, 3.0])

    def test_quarter_turn(self):
        t = RigidTransform.from_yaw(math.pi / 2)
        out = transform_points(_cloud([[1.0, 0.0, 0.0]]), t)
        assert np.allclose(out.points[0], [0.0, 1.0, 0.0], atol=1e-12)

    def test_non_unit_quaternion_rejected(self):
        with pytest.raises(InvalidTransformError):
            RigidTransform(np.array([1.0, 1.0, 0.0, 0.0]), np.zeros(3))

    def test_point_count_preserved(self):
        rng = np.random.default_rng(3)
        cloud = _cloud(rng.normal(size=(57, 3)))
        assert len(transform_points(cloud, _random_transform(rng))) == 57

    def test_frame_retag(self):
        out = transform_points(_cloud([[0, 0, 0]]), RigidTransform.identity(), new_frame="global")
        assert out.frame == "global"

    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_inverse_roundtrip(self, seed):
        rng = np.random.default_rng(seed)
        t = _random_transform(rng)
        cloud = _cloud(rng.normal(scale=10.0, size=(20, 3)))
        back = transform_points(transform_points(cloud, t), t.inverse())
        assert np.allclose(back.points, cloud.points, atol=1e-9)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_composition(self, seed):
        rng = np.random.default_rng(seed)
        t1, t2 = _random_transform(rng), _random_transform(rng)
        cloud = _cloud(rng.normal(scale=10.0, size=(20, 3)))
        once = transform_points(cloud, t2 @ t1)
        twice = transform_points(transform_points(cloud, t1), t2)
        assert np.allclose(once.points, twice.points, atol=1e-9)

    def test_inverse_compose_is_identity(self):
        rng = np.random.default_rng(11)
        t = _random_transform(rng)
        ident = t @ t.inverse()
        assert np.allclose(ident.rotation_matrix, np.eye(3), atol=1e-9)
        assert np.allclose(ident.translation, 0.0, atol=1e-9)

    def test_from_matrix_roundtrip(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            t = _random_transform(rng)
            rebuilt = RigidTransform.from_matrix(t.rotation_matrix, t.translation)
            assert np.allclose(rebuilt.rotation_matrix, t.rotation_matrix, atol=1e-12)


@pytest.fixture
def calib():
    k = np.array([[500.0, 0.0, 320.0], [0.0, 500.0, 240.0], [0.0, 0.0, 1.0]])
    return CameraCalib("cam", k, RigidTransform.identity(), 640, 480)


class TestProjectPoint:
    def test_optical_axis_hits_principal_point(self, calib):
        assert project_point((0.0, 0.0, 5.0), calib) == (320.0, 240.0)

    def test_behind_camera(self, calib):
        assert project_point((0.0, 0.0, -1.0), calib) is None
        assert project_point((1.0, 1.0, 0.0), calib) is None

    def test_hand_evaluated_pixel(self, calib):
        # u = 500 * 1 / 2 + 320 = 570
        assert project_point((1.0, 0.0, 2.0), calib) == (570.0, 240.0)

    @settings(max_examples=50, deadline=None)
    @given(
        st.integers(min_value=0, max_value=10_000),
        st.floats(min_value=0.01, max_value=100.0),
    )
    def test_scale_invariant_along_rays(self, seed, lam):
        k = np.array([[500.0, 0.0, 320.0], [0.0, 500.0, 240.0], [0.0, 0.0, 1.0]])
        calib = CameraCalib("cam", k, RigidTransform.identity(), 640, 480)
        rng = np.random.default_rng(seed)
        p = rng.normal(size=3)
        p[2] = abs(p[2]) + 0.1
        a = project_point(p, calib)
        b = project_point(lam * p, calib)
        assert a is not None and b is not None
        assert math.isclose(a[0], b[0], abs_tol=1e-9 * max(1.0, abs(a[0])))
        assert math.isclose(a[1], b[1], abs_tol=1e-9 * max(1.0, abs(a[1])))

    def test_vectorized_matches_scalar(self, calib):
        rng = np.random.default_rng(5)
        pts = rng.normal(size=(40, 3)) * [2, 2, 5]
        uv, front = project_points(pts, calib)
        for i, p in enumerate(pts):
            single = project_point(p, calib)
            if single is None:
                assert not front[i]
            else:
                assert front[i]
                assert np.allclose(uv[i], single)


class TestNormalizeYaw:
    @pytest.mark.parametrize(
        "theta,expected",
        [(0.0, 0.0), (math.pi, math.pi), (-math.pi, math.pi), (math.pi / 2, math.pi / 2)],
    )
    def test_exact_cases(self, theta, expected):
        assert normalize_yaw(theta) == pytest.approx(expected, abs=1e-12)

    def test_three_pi_wraps_to_pi(self):
        out = normalize_yaw(3 * math.pi)
        # 3*pi in floats is a hair past the real 3*pi, so compare angularly
        assert min(abs(out - math.pi), abs(out + math.pi)) < 1e-12

    @settings(max_examples=200, deadline=None)
    @given(st.floats(min_value=-1e6, max_value=1e6))
    def test_range_and_equivalence(self, theta):
        out = normalize_yaw(theta)
        assert -math.pi < out <= math.pi
        assert math.isclose(math.cos(out), math.cos(theta), abs_tol=1e-6)
        assert math.isclose(math.sin(out), math.sin(theta), abs_tol=1e-6)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            normalize_yaw(float("nan"))
        with pytest.raises(ValueError):
            normalize_yaw(float("inf"))


class TestTypes:
    def test_cloud_rejects_non_finite(self):
        with pytest.raises(ValueError):
            PointCloud(np.array([[0.0, 0.0, np.nan]]), np.zeros(1), "ego")

    def test_cloud_rejects_decreasing_timestamps(self):
        with pytest.raises(ValueError):
            PointCloud(np.zeros((2, 3)), np.array([1.0, 0.5]), "ego")

    def test_cloud_requires_frame(self):
        with pytest.raises(ValueError):
            PointCloud(np.zeros((1, 3)), np.zeros(1), "")

    def test_box_normalizes_yaw(self):
        box = Box3D(np.zeros(3), np.ones(3), yaw=3 * math.pi / 1.0 + 0.25)
        assert -math.pi < box.yaw <= math.pi

    def test_box_rejects_nonpositive_size(self):
        with pytest.raises(ValueError):
            Box3D(np.zeros(3), np.array([1.0, 0.0, 1.0]), 0.0)

    def test_box_corners_axis_aligned(self):
        box = Box3D(np.array([1.0, 2.0, 0.5]), np.array([4.0, 2.0, 1.0]), 0.0)
        bev = box.corners_bev()
        assert np.allclose(sorted(bev[:, 0]), [-1.0, -1.0, 3.0, 3.0])
        assert np.allclose(sorted(bev[:, 1]), [1.0, 1.0, 3.0, 3.0])
        corners = box.corners()
        assert np.allclose(sorted(set(corners[:, 2])), [0.0, 1.0])

    def test_calib_validation(self):
        bad_k = np.array([[0.0, 0.0, 320.0], [0.0, 500.0, 240.0], [0.0, 0.0, 1.0]])
        with pytest.raises(ValueError):
            CameraCalib("cam", bad_k, RigidTransform.identity(), 640, 480)
