import math

import numpy as np
import pytest

from autolabel3d.clustering import (
    ClassWidthPrior,
    associate,
    build_proposal,
    dbscan,
    denoise,
    fit_box,
    lshape_fit,
)
from autolabel3d.errors import DegenerateGeometryError
from autolabel3d.geometry import FRAME_EGO, CameraCalib, PointCloud, RigidTransform
from autolabel3d.masks import Detection2D, encode

from oracles import canon_labels, dbscan_oracle, lshape_best_theta_oracle


def unit_emb(dim=8, axis=0):
    e = np.zeros(dim)
    e[axis] = 1.0
    return e


def make_calib(width=64, height=48, f=40.0):
    k = np.array([[f, 0.0, width / 2.0], [0.0, f, height / 2.0], [0.0, 0.0, 1.0]])
    # ego x forward -> camera z forward, ego y left -> camera -x, ego z up -> -y
    ego_from_cam = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
    extrinsic = RigidTransform.from_matrix(ego_from_cam.T, (0.0, 0.0, 0.0))
    return CameraCalib("cam", k, extrinsic, width, height)


def det_with_mask(grid, class_name="car", confidence=0.9):
    mask = encode(grid)
    rows, cols = np.nonzero(grid)
    bbox = np.array([cols.min(), rows.min(), cols.max() + 1, rows.max() + 1], dtype=float)
    return Detection2D("cam", class_name, confidence, bbox, mask, unit_emb())


def rect_points(rng, n, length, width, yaw=0.0, center=(0.0, 0.0)):
    """Points on the rectangle outline (all four edges)."""
    per_edge = n // 4
    l2, w2 = length / 2.0, width / 2.0
    ts = rng.uniform(-1.0, 1.0, (4, per_edge))
    pts = np.concatenate(
        [
            np.column_stack([ts[0] * l2, np.full(per_edge, -w2)]),
            np.column_stack([ts[1] * l2, np.full(per_edge, w2)]),
            np.column_stack([np.full(per_edge, -l2), ts[2] * w2]),
            np.column_stack([np.full(per_edge, l2), ts[3] * w2]),
            np.array([[l2, w2], [l2, -w2], [-l2, w2], [-l2, -w2]]),
        ]
    )
    c, s = math.cos(yaw), math.sin(yaw)
    rot = np.array([[c, -s], [s, c]])
    return pts @ rot.T + np.asarray(center)


class TestDbscan:
    def test_single_point(self):
        assert dbscan(np.array([[0.0, 0.0]]), eps=1.0, min_pts=1).tolist() == [0]

    def test_two_blobs(self):
        rng = np.random.default_rng(0)
        a = rng.uniform(-0.05, 0.05, (10, 2))
        b = rng.uniform(-0.05, 0.05, (10, 2)) + 10.0
        labels = dbscan(np.vstack([a, b]), eps=0.5, min_pts=3)
        assert canon_labels(labels) == tuple([0] * 10 + [1] * 10)

    def test_chain_at_exact_eps(self):
        pts = np.column_stack([np.arange(10) * 0.5, np.zeros(10)])
        labels = dbscan(pts, eps=0.5, min_pts=2)
        assert canon_labels(labels) == tuple([0] * 10)

    def test_all_noise(self):
        pts = np.array([[0.0, 0.0], [10.0, 0.0], [20.0, 0.0]])
        assert dbscan(pts, eps=1.0, min_pts=2).tolist() == [-1, -1, -1]

    def test_matches_oracle_randomized(self):
        rng = np.random.default_rng(2024)
        for _ in range(100):
            n = int(rng.integers(1, 120))
            xy = rng.normal(scale=rng.uniform(0.3, 2.0), size=(n, 2))
            eps = float(rng.uniform(0.2, 1.0))
            min_pts = int(rng.integers(1, 5))
            got = dbscan(xy, eps, min_pts)
            want = dbscan_oracle(xy, eps, min_pts)
            assert canon_labels(got) == canon_labels(want)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(77)
        for _ in range(30):
            n = int(rng.integers(5, 80))
            xy = rng.normal(scale=1.0, size=(n, 2))
            eps, min_pts = 0.6, 3
            base = canon_labels(dbscan(xy, eps, min_pts))
            perm = rng.permutation(n)
            permuted = dbscan(xy[perm], eps, min_pts)
            # undo the permutation, then canonicalize
            unshuffled = np.empty(n, dtype=np.int64)
            unshuffled[perm] = permuted
            assert canon_labels(unshuffled) == base

    def test_validation(self):
        with pytest.raises(ValueError):
            dbscan(np.zeros((3, 2)), eps=0.0, min_pts=1)
        with pytest.raises(ValueError):
            dbscan(np.zeros((3, 2)), eps=1.0, min_pts=0)


class TestDenoise:
    PRIORS = ClassWidthPrior({"car": 1.9, "pedestrian": 0.7})

    def test_tight_cluster_unchanged(self):
        rng = np.random.default_rng(1)
        pts = np.column_stack([rng.uniform(-0.5, 0.5, (30, 2)), np.zeros(30)])
        kept = denoise(pts, "car", self.PRIORS)
        assert np.array_equal(kept, np.arange(30))

    def test_wall_fragment_dropped(self):
        rng = np.random.default_rng(2)
        body = np.column_stack([rng.uniform(-1.0, 1.0, (50, 2)), np.zeros(50)])
        wall = body[:8].copy()
        wall[:, 0] += 8.0  # 8 m behind, beyond eps=1.9
        pts = np.vstack([body, wall])
        kept = denoise(pts, "car", self.PRIORS)
        assert set(kept.tolist()) == set(range(50))

    def test_all_noise_falls_back_to_full_cluster(self):
        pts = np.array([[0.0, 0.0, 0.0], [10.0, 0.0, 0.0], [20.0, 0.0, 0.0]])
        kept = denoise(pts, "car", self.PRIORS, min_pts=3)
        assert np.array_equal(kept, np.arange(3))

    def test_unknown_class_uses_default_eps(self):
        pts = np.array([[0.0, 0.0, 0.0], [0.4, 0.0, 0.0], [0.8, 0.0, 0.0]])
        kept = denoise(pts, "unicorn", self.PRIORS, min_pts=2, default_eps=0.5)
        assert len(kept) == 3

    def test_tie_broken_by_range(self):
        near = np.column_stack([np.linspace(2.0, 2.4, 5), np.zeros(5), np.zeros(5)])
        far = np.column_stack([np.linspace(30.0, 30.4, 5), np.zeros(5), np.zeros(5)])
        kept = denoise(np.vstack([far, near]), "pedestrian", self.PRIORS, min_pts=2)
        assert set(kept.tolist()) == {5, 6, 7, 8, 9}

    def test_never_grows(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            pts = rng.normal(scale=3.0, size=(int(rng.integers(1, 60)), 3))
            kept = denoise(pts, "car", self.PRIORS)
            assert len(kept) <= len(pts)


class TestLShape:
    def test_axis_aligned_rectangle(self):
        rng = np.random.default_rng(4)
        pts = rect_points(rng, 120, 4.0, 2.0)
        fit = lshape_fit(pts)
        assert fit.length == pytest.approx(4.0, abs=0.05)
        assert fit.width == pytest.approx(2.0, abs=0.05)
        assert min(abs(fit.yaw) % math.pi, math.pi - abs(fit.yaw) % math.pi) < math.radians(2)
        assert np.allclose(fit.center_xy, [0, 0], atol=0.05)

    def test_rotated_rectangle(self):
        rng = np.random.default_rng(5)
        yaw = math.radians(30.0)
        pts = rect_points(rng, 120, 4.0, 2.0, yaw=yaw, center=(3.0, -2.0))
        fit = lshape_fit(pts)
        d = abs((fit.yaw - yaw) % math.pi)
        assert min(d, math.pi - d) < math.radians(2)
        assert fit.length == pytest.approx(4.0, abs=0.05)
        assert fit.width == pytest.approx(2.0, abs=0.05)
        assert np.allclose(fit.center_xy, [3.0, -2.0], atol=0.05)

    def test_two_points_min_extent_floor(self):
        fit = lshape_fit(np.array([[0.0, 0.0], [1.0, 0.0]]))
        assert fit.length == pytest.approx(1.0, abs=1e-6)
        assert fit.width == 0.05

    def test_coincident_points_degenerate(self):
        with pytest.raises(DegenerateGeometryError):
            lshape_fit(np.zeros((5, 2)))
        with pytest.raises(DegenerateGeometryError):
            lshape_fit(np.array([[1.0, 1.0]]))

    def test_matches_fine_grid_oracle(self):
        rng = np.random.default_rng(6)
        for _ in range(15):
            yaw = rng.uniform(0, math.pi)
            pts = rect_points(rng, 80, 4.5, 1.8, yaw=yaw)
            fit = lshape_fit(pts)
            theta_opt = lshape_best_theta_oracle(pts, step_deg=0.1)
            d = abs((fit.yaw - theta_opt) % (math.pi / 2))
            assert min(d, math.pi / 2 - d) <= math.radians(1.0) + 1e-9

    def test_rotation_equivariance(self):
        rng = np.random.default_rng(7)
        pts = rect_points(rng, 100, 3.5, 1.5, yaw=math.radians(10))
        base = lshape_fit(pts)
        for phi_deg in (15.0, 37.0, 61.0):
            phi = math.radians(phi_deg)
            c, s = math.cos(phi), math.sin(phi)
            rotated = pts @ np.array([[c, -s], [s, c]]).T
            fit = lshape_fit(rotated)
            d = abs((fit.yaw - (base.yaw + phi)) % math.pi)
            assert min(d, math.pi - d) < math.radians(2)

    def test_contains_all_points_with_skin(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            pts = rng.normal(scale=2.0, size=(int(rng.integers(2, 60)), 2))
            if max(np.ptp(pts[:, 0]), np.ptp(pts[:, 1])) < 1e-9:
                continue
            fit = lshape_fit(pts)
            c, s = math.cos(fit.yaw), math.sin(fit.yaw)
            rel = pts - fit.center_xy
            u = rel @ np.array([c, s])
            v = rel @ np.array([-s, c])
            assert np.all(np.abs(u) <= fit.length / 2 + 0.01)
            assert np.all(np.abs(v) <= fit.width / 2 + 0.01)


class TestAssociate:
    def test_empty_detections(self):
        cloud = PointCloud(np.array([[5.0, 0.0, 0.0]]), np.zeros(1), FRAME_EGO)
        assert associate(cloud, make_calib(), []) == []

    def test_points_behind_camera(self):
        calib = make_calib()
        cloud = PointCloud(np.array([[-5.0, 0.0, 0.0]]), np.zeros(1), FRAME_EGO)
        grid = np.zeros((calib.height, calib.width), dtype=bool)
        grid[10:20, 10:20] = True
        assert associate(cloud, calib, [det_with_mask(grid)]) == []

    def test_points_land_in_their_mask(self):
        calib = make_calib()
        # three points ahead of the camera, two inside the mask region
        pts = np.array([[5.0, 0.0, 0.0], [5.0, 0.2, 0.1], [5.0, 3.0, 0.0]])
        cloud = PointCloud(pts, np.zeros(3), FRAME_EGO)
        grid = np.zeros((calib.height, calib.width), dtype=bool)
        grid[20:28, 28:36] = True  # covers the principal-point area
        clusters = associate(cloud, calib, [det_with_mask(grid)])
        assert len(clusters) == 1
        assert set(clusters[0].point_indices.tolist()) == {0, 1}

    def test_disjoint_masks_unique_assignment(self):
        calib = make_calib()
        rng = np.random.default_rng(9)
        pts = np.column_stack(
            [np.full(60, 6.0), rng.uniform(-3, 3, 60), rng.uniform(-1.5, 1.5, 60)]
        )
        cloud = PointCloud(pts, np.zeros(60), FRAME_EGO)
        left = np.zeros((calib.height, calib.width), dtype=bool)
        left[:, : calib.width // 2] = True
        right = ~left
        clusters = associate(cloud, calib, [det_with_mask(left), det_with_mask(right)])
        seen = np.concatenate([c.point_indices for c in clusters])
        assert len(seen) == len(set(seen.tolist()))


class TestBuildProposal:
    def make_det(self, image_width=64, bbox=None, class_name="car"):
        grid = np.zeros((48, image_width), dtype=bool)
        grid[10:20, 20:30] = True
        mask = encode(grid)
        bbox = np.asarray(bbox if bbox is not None else [20, 10, 30, 20], dtype=float)
        return Detection2D("cam", class_name, 0.8, bbox, mask, unit_emb())

    def test_recovers_box_from_surface_points(self):
        rng = np.random.default_rng(10)
        xy = rect_points(rng, 100, 4.0, 2.0, yaw=0.4, center=(7.0, 1.0))
        z = rng.uniform(0.0, 1.5, len(xy))
        pts = np.column_stack([xy, z])
        prop = build_proposal(pts, self.make_det())
        assert np.allclose(prop.box.center[:2], [7.0, 1.0], atol=0.1)
        d = abs((prop.box.yaw - 0.4) % math.pi)
        assert min(d, math.pi - d) < math.radians(5)
        assert prop.box.size[2] == pytest.approx(z.max() - z.min(), abs=1e-9)
        assert prop.box.center[2] == pytest.approx((z.max() + z.min()) / 2, abs=1e-9)

    def test_border_flag_central_bbox(self):
        # central 70% of a 64 px image is [9.6, 54.4]
        prop = build_proposal(
            np.array([[5.0, 0.0, 0.0], [6.0, 1.0, 0.5]]), self.make_det(bbox=[10, 10, 54, 20])
        )
        assert prop.border_flag is False

    def test_border_flag_left_band(self):
        prop = build_proposal(
            np.array([[5.0, 0.0, 0.0], [6.0, 1.0, 0.5]]), self.make_det(bbox=[5, 10, 30, 20])
        )
        assert prop.border_flag is True

    def test_single_point_min_extents(self):
        prop = build_proposal(np.array([[3.0, 2.0, 1.0]]), self.make_det())
        assert np.allclose(prop.box.center, [3.0, 2.0, 1.0])
        assert np.allclose(prop.box.size, [0.05, 0.05, 0.05])

    def test_fit_box_encloses_points(self):
        rng = np.random.default_rng(11)
        pts = rng.normal(scale=1.5, size=(40, 3))
        box = fit_box(pts)
        c, s = math.cos(box.yaw), math.sin(box.yaw)
        rel = pts[:, :2] - box.center[:2]
        u = rel @ np.array([c, s])
        v = rel @ np.array([-s, c])
        assert np.all(np.abs(u) <= box.size[0] / 2 + 0.01)
        assert np.all(np.abs(v) <= box.size[1] / 2 + 0.01)
        assert np.all(pts[:, 2] >= box.center[2] - box.size[2] / 2 - 0.01)
        assert np.all(pts[:, 2] <= box.center[2] + box.size[2] / 2 + 0.01)
