import filecmp
import json

import numpy as np
import pytest

from autolabel3d.geometry import Box3D
from autolabel3d.masks import decode
from autolabel3d.scene_io import load_scene
from autolabel3d.synth import (
    CameraSpec,
    GroundSpec,
    ObjectSpec,
    SceneSpec,
    default_camera_ring,
    generate,
    generate_to_dir,
    render_mask,
    synth_embedding,
)


def small_spec(**kw):
    defaults = dict(
        scene_id="unit",
        seed=5,
        n_frames=2,
        dt=0.5,
        ground=GroundSpec(extent=30.0, points_per_m2=0.4),
        cameras=tuple(default_camera_ring(4, width=320, height=240, fx=200.0)),
        objects=(
            ObjectSpec(class_name="car", size=(4.6, 1.9, 1.7), center=(8.0, 1.0, 0.85), yaw=0.5),
            ObjectSpec(
                class_name="pedestrian",
                size=(0.7, 0.7, 1.7),
                center=(5.0, -4.0, 0.85),
                velocity=(1.0, 0.0),
            ),
        ),
    )
    defaults.update(kw)
    return SceneSpec(**defaults)


class TestSynthEmbedding:
    def test_same_instance_sigma_zero(self):
        a = synth_embedding("car", 3)
        b = synth_embedding("car", 3, seed=999)
        assert np.array_equal(a, b)
        assert float(a @ b) == pytest.approx(1.0)

    def test_unit_norm(self):
        for sigma in (0.0, 0.05, 0.3):
            v = synth_embedding("bus", 1, sigma=sigma, seed=3)
            assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-12)

    def test_cross_instance_bounded(self):
        classes = ["car", "pedestrian", "bicycle", "truck"]
        vecs = [synth_embedding(c, i) for c in classes for i in range(10)]
        for i in range(len(vecs)):
            for j in range(i + 1, len(vecs)):
                assert float(vecs[i] @ vecs[j]) <= 0.5 + 1e-12

    def test_jitter_preserves_identity(self):
        rng = np.random.default_rng(0)
        same, cross = [], []
        for draw in range(100):
            s1 = int(rng.integers(0, 2**31))
            s2 = int(rng.integers(0, 2**31))
            a = synth_embedding("car", 1, sigma=0.05, seed=s1)
            b = synth_embedding("car", 1, sigma=0.05, seed=s2)
            c = synth_embedding("car", 2, sigma=0.05, seed=s1)
            same.append(float(a @ b))
            cross.append(float(a @ c))
        assert min(same) > max(cross)


class TestRenderMask:
    CAM = CameraSpec(camera_id="cam", width=320, height=240, fx=200.0, azimuth_deg=0.0).to_calib()

    def test_behind_camera_empty(self):
        box = Box3D(np.array([-10.0, 0.0, 1.0]), np.array([4.0, 2.0, 1.5]), 0.0)
        mask = render_mask(box, self.CAM)
        assert mask.area == 0

    def test_centered_box_centroid_near_principal_point(self):
        box = Box3D(np.array([10.0, 0.0, 1.6]), np.array([2.0, 2.0, 1.0]), 0.0)
        mask = render_mask(box, self.CAM)
        dense = decode(mask)
        rows, cols = np.nonzero(dense)
        assert abs(cols.mean() - self.CAM.cx) < 2.0
        assert abs(rows.mean() - self.CAM.cy) < 2.0

    def test_erosion_strictly_contained(self):
        box = Box3D(np.array([8.0, 0.5, 1.2]), np.array([3.0, 2.0, 1.5]), 0.3)
        full = decode(render_mask(box, self.CAM))
        eroded = decode(render_mask(box, self.CAM, erosion_px=2))
        assert eroded.sum() > 0
        assert np.array_equal(eroded & full, eroded)
        assert eroded.sum() < full.sum()

    def test_partially_behind_is_clipped_not_empty(self):
        box = Box3D(np.array([0.5, 0.0, 1.6]), np.array([4.0, 2.0, 1.5]), 0.0)
        mask = render_mask(box, self.CAM)
        assert mask.area > 0


class TestGenerate:
    def test_deterministic_directories(self, tmp_path):
        spec = small_spec()
        a = generate_to_dir(spec, tmp_path / "a")
        b = generate_to_dir(spec, tmp_path / "b")
        files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
        files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
        assert files_a == files_b
        for rel in files_a:
            assert filecmp.cmp(a / rel, b / rel, shallow=False), rel

    def test_seed_changes_points_not_structure(self, tmp_path):
        a = generate_to_dir(small_spec(seed=1), tmp_path / "a")
        b = generate_to_dir(small_spec(seed=2), tmp_path / "b")
        assert not filecmp.cmp(a / "sweeps" / "000000.bin", b / "sweeps" / "000000.bin", shallow=False)
        ma = json.loads((a / "manifest.json").read_text())
        mb = json.loads((b / "manifest.json").read_text())
        assert ma == mb

    def test_zero_objects(self):
        scene, gt = generate(small_spec(objects=()))
        assert all(not boxes for boxes in gt)
        assert all(not dets for per_cam in scene.detections for dets in per_cam.values())
        assert len(scene.sweeps[0]) > 0  # ground still present

    def test_static_object_constant_ground_truth(self):
        scene, gt = generate(small_spec(n_frames=3))
        first = gt[0][0].box
        for frame_boxes in gt[1:]:
            assert np.allclose(frame_boxes[0].box.center, first.center, atol=1e-12)
            assert frame_boxes[0].box.yaw == first.yaw

    def test_moving_object_ground_truth_advances(self):
        scene, gt = generate(small_spec(n_frames=3))
        ped = [boxes[1].box.center[0] for boxes in gt]
        assert ped[1] - ped[0] == pytest.approx(0.5)  # 1 m/s * 0.5 s

    def test_masks_disjoint_per_camera(self):
        spec = small_spec(
            objects=(
                ObjectSpec(class_name="car", size=(4.6, 1.9, 1.7), center=(10.0, 0.5, 0.85)),
                ObjectSpec(class_name="car", size=(4.6, 1.9, 1.7), center=(16.0, 0.0, 0.85)),
            )
        )
        scene, _ = generate(spec)
        for per_cam in scene.detections:
            for dets in per_cam.values():
                total = None
                for d in dets:
                    dense = decode(d.mask)
                    if total is None:
                        total = dense.astype(int)
                    else:
                        total += dense
                if total is not None:
                    assert total.max() <= 1

    def test_nearer_object_wins_contested_pixels(self):
        # two cars partially overlapping in the front camera: 8 m and 16 m out
        spec = small_spec(
            objects=(
                ObjectSpec(class_name="car", size=(4.6, 1.9, 1.7), center=(8.0, 0.0, 0.85)),
                ObjectSpec(class_name="car", size=(4.6, 1.9, 1.7), center=(16.0, 1.5, 0.85)),
            )
        )
        scene, gt = generate(spec)
        front = scene.detections[0]["cam_0"]
        boxes = [g.box for g in gt[0]]
        from autolabel3d.synth import render_hull

        calib = scene.frames[0].cameras[0]
        hull_near = render_hull(boxes[0], calib)
        hull_far = render_hull(boxes[1], calib)
        contested = hull_near & hull_far
        assert contested.any()
        masks = [decode(d.mask) for d in front]
        assert (masks[0] & contested).sum() == contested.sum()
        for far_mask in masks[1:]:
            assert (far_mask & contested).sum() == 0

    def test_emitted_scene_passes_ingestion(self, tmp_path):
        out = generate_to_dir(small_spec(), tmp_path / "scene")
        scene = load_scene(out)
        assert scene.scene_id == "unit"
        assert scene.n_frames == 2
        assert scene.embedding_dim == 32
        for per_cam in scene.detections:
            for dets in per_cam.values():
                for det in dets:
                    assert abs(np.linalg.norm(det.embedding) - 1.0) < 1e-6


class TestSpecParsing:
    def test_roundtrip_from_dict(self):
        obj = {
            "scene_id": "s",
            "seed": 3,
            "n_frames": 2,
            "dt": 0.25,
            "objects": [
                {
                    "class_name": "car",
                    "size": [4.0, 2.0, 1.5],
                    "center": [5.0, 0.0, 0.75],
                    "wall": {"distance": 6.0},
                }
            ],
        }
        spec = SceneSpec.from_dict(obj)
        assert spec.objects[0].wall.distance == 6.0
        assert spec.dt == 0.25

    def test_unknown_key_rejected(self):
        with pytest.raises(Exception) as err:
            SceneSpec.from_dict({"scene_id": "s", "wibble": 1})
        assert "wibble" in str(err.value)
