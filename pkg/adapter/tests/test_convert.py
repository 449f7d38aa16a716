"""Converter tests against a hand-built miniature dataset in table format."""

import json

import numpy as np
import pytest
from PIL import Image

from vlm_adapter.backends import SyntheticBackend
from vlm_adapter.config import AdapterConfig
from vlm_adapter.extract import extract_scene
from vlm_adapter.nuscenes_convert import convert_scene

from autolabel3d.geometry import RigidTransform
from autolabel3d.scene_io import load_scene

WIDTH, HEIGHT = 160, 120


def cam_rotation_sensor_to_ego():
    ego_from_cam = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
    return RigidTransform.from_matrix(ego_from_cam).rotation.tolist()


def build_mini_dataset(root, n_samples=3):
    (root / "sweeps_raw").mkdir(parents=True)
    (root / "images_raw").mkdir()

    sensors = [
        {"token": "sens-lidar", "channel": "LIDAR_TOP", "modality": "lidar"},
        {"token": "sens-cam", "channel": "CAM_FRONT", "modality": "camera"},
    ]
    calibrated = [
        {
            "token": "calib-lidar",
            "sensor_token": "sens-lidar",
            "translation": [0.9, 0.0, 1.8],
            "rotation": [1.0, 0.0, 0.0, 0.0],
            "camera_intrinsic": [],
        },
        {
            "token": "calib-cam",
            "sensor_token": "sens-cam",
            "translation": [1.7, 0.0, 1.5],
            "rotation": cam_rotation_sensor_to_ego(),
            "camera_intrinsic": [[100.0, 0.0, 80.0], [0.0, 100.0, 60.0], [0.0, 0.0, 1.0]],
        },
    ]

    rng = np.random.default_rng(7)
    samples, sample_data, ego_poses = [], [], []
    for i in range(n_samples):
        timestamp = 1_600_000_000_000_000 + i * 500_000  # microseconds
        samples.append(
            {
                "token": f"samp-{i}",
                "timestamp": timestamp,
                "scene_token": "scene-tok",
                "prev": f"samp-{i - 1}" if i else "",
                "next": f"samp-{i + 1}" if i < n_samples - 1 else "",
            }
        )
        ego_poses.append(
            {
                "token": f"pose-{i}",
                "timestamp": timestamp,
                "rotation": [1.0, 0.0, 0.0, 0.0],
                "translation": [2.0 * i, 0.0, 0.0],
            }
        )
        cloud = rng.uniform(-10, 10, (40, 5)).astype("<f4")
        cloud_rel = f"sweeps_raw/lidar_{i}.pcd.bin"
        cloud.tofile(root / cloud_rel)
        sample_data.append(
            {
                "token": f"sd-lidar-{i}",
                "sample_token": f"samp-{i}",
                "ego_pose_token": f"pose-{i}",
                "calibrated_sensor_token": "calib-lidar",
                "filename": cloud_rel,
                "fileformat": "pcd.bin",
                "is_key_frame": True,
                "width": 0,
                "height": 0,
            }
        )
        image = np.full((HEIGHT, WIDTH, 3), 30, dtype=np.uint8)
        image[40:80, 60:110] = (220, 40, 40)
        image_rel = f"images_raw/cam_{i}.png"
        Image.fromarray(image).save(root / image_rel)
        sample_data.append(
            {
                "token": f"sd-cam-{i}",
                "sample_token": f"samp-{i}",
                "ego_pose_token": f"pose-{i}",
                "calibrated_sensor_token": "calib-cam",
                "filename": image_rel,
                "fileformat": "png",
                "is_key_frame": True,
                "width": WIDTH,
                "height": HEIGHT,
            }
        )

    tables = {
        "scene": [
            {
                "token": "scene-tok",
                "name": "scene-0001",
                "first_sample_token": "samp-0",
                "last_sample_token": f"samp-{n_samples - 1}",
                "nbr_samples": n_samples,
            }
        ],
        "sample": samples,
        "sample_data": sample_data,
        "ego_pose": ego_poses,
        "calibrated_sensor": calibrated,
        "sensor": sensors,
    }
    for name, records in tables.items():
        (root / f"{name}.json").write_text(json.dumps(records))
    return root


class TestConvert:
    @pytest.fixture
    def dataset(self, tmp_path):
        return build_mini_dataset(tmp_path / "mini")

    def test_converted_scene_passes_core_validation(self, dataset, tmp_path):
        out = convert_scene(dataset, "scene-0001", tmp_path / "scene")
        scene = load_scene(out)
        assert scene.scene_id == "scene-0001"
        assert scene.n_frames == 3  # matches the source sample count
        assert [f.camera_id for f in scene.frames[0].cameras] == ["CAM_FRONT"]

    def test_timestamps_strictly_increasing(self, dataset, tmp_path):
        out = convert_scene(dataset, "scene-0001", tmp_path / "scene")
        scene = load_scene(out)
        ts = [f.timestamp for f in scene.frames]
        assert all(b > a for a, b in zip(ts, ts[1:]))

    def test_sweep_content_roundtrip(self, dataset, tmp_path):
        out = convert_scene(dataset, "scene-0001", tmp_path / "scene")
        raw = np.fromfile(dataset / "sweeps_raw" / "lidar_0.pcd.bin", dtype="<f4").reshape(-1, 5)
        written = np.fromfile(out / "sweeps" / "000000.bin", dtype="<f4").reshape(-1, 4)
        assert np.array_equal(written[:, :3], raw[:, :3])
        assert np.all(written[:, 3] == 0.0)

    def test_unknown_scene_name(self, dataset, tmp_path):
        with pytest.raises(KeyError):
            convert_scene(dataset, "scene-9999", tmp_path / "scene")

    def test_extract_after_convert(self, dataset, tmp_path):
        out = convert_scene(dataset, "scene-0001", tmp_path / "scene")
        cfg = AdapterConfig()
        count = extract_scene(out, cfg, SyntheticBackend(cfg))
        assert count == 3  # one colored rectangle per frame
        scene = load_scene(out)
        dets = scene.detections[0]["CAM_FRONT"]
        assert len(dets) == 1
        assert abs(np.linalg.norm(dets[0].embedding) - 1.0) <= 1e-6
