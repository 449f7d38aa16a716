"""Convert one scene of a nuScenes-style export into the interchange layout.

Reads the dataset's JSON tables directly (scene, sample, sample_data,
ego_pose, calibrated_sensor, sensor) rather than requiring a devkit. Only
keyframe sample_data entries are used: the lidar sweep becomes
sweeps/<frame>.bin, ego poses come from the lidar's ego_pose record, and each
camera contributes its calibration plus the source image (copied under
images/ for the extraction step). Detections are written as empty lists.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .scene_writer import CameraMeta, FrameMeta, write_scene_dir


def _load_table(root: Path, name: str) -> dict[str, dict]:
    path = root / f"{name}.json"
    if not path.is_file():
        raise FileNotFoundError(str(path))
    with open(path, encoding="utf-8") as fh:
        return {rec["token"]: rec for rec in json.load(fh)}


def _quat_conj(q):
    w, x, y, z = q
    return np.array([w, -x, -y, -z])


def _quat_rot(q, v):
    w, x, y, z = q
    rot = np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )
    return rot @ np.asarray(v, dtype=np.float64)


def _invert_pose(rotation, translation):
    """(sensor -> ego) records inverted into the (ego -> sensor) transform."""
    q = np.asarray(rotation, dtype=np.float64)
    q = q / np.linalg.norm(q)
    q_inv = _quat_conj(q)
    t_inv = -_quat_rot(q_inv, translation)
    return q_inv, t_inv


def convert_scene(dataset_root, scene_name: str, out_dir, table_dir: str | None = None) -> Path:
    """Export the named scene; returns the written directory."""
    root = Path(dataset_root)
    tables = root / table_dir if table_dir else root
    scenes = _load_table(tables, "scene")
    samples = _load_table(tables, "sample")
    sample_data = _load_table(tables, "sample_data")
    ego_poses = _load_table(tables, "ego_pose")
    calibrated = _load_table(tables, "calibrated_sensor")
    sensors = _load_table(tables, "sensor")

    scene = next((s for s in scenes.values() if s["name"] == scene_name), None)
    if scene is None:
        raise KeyError(f"scene {scene_name!r} not found; have {sorted(s['name'] for s in scenes.values())}")

    by_sample: dict[str, list[dict]] = {}
    for rec in sample_data.values():
        if rec.get("is_key_frame"):
            by_sample.setdefault(rec["sample_token"], []).append(rec)

    frames: list[FrameMeta] = []
    cameras: dict[str, CameraMeta] = {}
    lidar_rotation = lidar_translation = None

    token = scene["first_sample_token"]
    index = 0
    while token:
        sample = samples[token]
        lidar_rec = None
        cam_recs = []
        for rec in by_sample.get(token, []):
            modality = sensors[calibrated[rec["calibrated_sensor_token"]]["sensor_token"]]["modality"]
            if modality == "lidar":
                lidar_rec = rec
            elif modality == "camera":
                cam_recs.append(rec)
        if lidar_rec is None:
            raise KeyError(f"sample {token} has no keyframe lidar data")

        calib = calibrated[lidar_rec["calibrated_sensor_token"]]
        lidar_rotation = np.asarray(calib["rotation"], dtype=np.float64)
        lidar_translation = np.asarray(calib["translation"], dtype=np.float64)
        pose = ego_poses[lidar_rec["ego_pose_token"]]

        cloud_path = root / lidar_rec["filename"]
        if not cloud_path.is_file():
            raise FileNotFoundError(str(cloud_path))
        raw = np.fromfile(cloud_path, dtype="<f4")
        if raw.size % 5:
            raise ValueError(f"{cloud_path}: expected 5-float lidar records")
        points = raw.reshape(-1, 5)[:, :3]
        sweep = np.zeros((points.shape[0], 4), dtype=np.float64)
        sweep[:, :3] = points

        images: dict[str, Path] = {}
        for rec in sorted(cam_recs, key=lambda r: r["filename"]):
            cam_calib = calibrated[rec["calibrated_sensor_token"]]
            channel = sensors[cam_calib["sensor_token"]]["channel"]
            q_inv, t_inv = _invert_pose(cam_calib["rotation"], cam_calib["translation"])
            cameras[channel] = CameraMeta(
                camera_id=channel,
                width=rec["width"],
                height=rec["height"],
                intrinsics=np.asarray(cam_calib["camera_intrinsic"], dtype=np.float64),
                rotation=q_inv,
                translation=t_inv,
            )
            image_path = root / rec["filename"]
            if image_path.is_file():
                images[channel] = image_path

        frames.append(
            FrameMeta(
                index=index,
                timestamp=sample["timestamp"] * 1e-6,
                ego_rotation=np.asarray(pose["rotation"], dtype=np.float64),
                ego_translation=np.asarray(pose["translation"], dtype=np.float64),
                sweep=sweep,
                images=images,
            )
        )
        token = sample.get("next") or ""
        index += 1

    return write_scene_dir(
        out_dir,
        scene_id=scene_name,
        frames=frames,
        cameras=[cameras[k] for k in sorted(cameras)],
        lidar_rotation=lidar_rotation,
        lidar_translation=lidar_translation,
        embedding_dim=32,
    )
