"""Adapter-side writer for the scene interchange layout.

Mirrors the consumer's on-disk contract (see the core package README); kept
independent so this package couples to the core only through the format.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCENE_FORMAT = "autolabel3d-scene-v1"
CONVENTIONS = {
    "camera_axes": "z-forward-x-right-y-down",
    "yaw": "ccw-about-z-from-x",
    "units": "meters",
    "sweep_dtype": "float32-le",
}


def _unit_quat(q) -> list[float]:
    q = np.asarray(q, dtype=np.float64).reshape(4)
    return (q / np.linalg.norm(q)).tolist()


@dataclass
class CameraMeta:
    camera_id: str
    width: int
    height: int
    intrinsics: np.ndarray  # 3x3
    rotation: np.ndarray  # quaternion (w, x, y, z), camera <- ego
    translation: np.ndarray


@dataclass
class FrameMeta:
    index: int
    timestamp: float
    ego_rotation: np.ndarray  # quaternion (w, x, y, z), global <- ego
    ego_translation: np.ndarray
    sweep: np.ndarray  # (N, 4) float: x, y, z, dt in the sensor frame
    images: dict[str, Path] = field(default_factory=dict)  # camera_id -> source image


def write_scene_dir(
    out_dir,
    scene_id: str,
    frames: list[FrameMeta],
    cameras: list[CameraMeta],
    lidar_rotation,
    lidar_translation,
    embedding_dim: int,
) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": SCENE_FORMAT,
        "scene_id": scene_id,
        "conventions": dict(CONVENTIONS),
        "embedding_dim": int(embedding_dim),
        "lidar_extrinsic": {
            "rotation": _unit_quat(lidar_rotation),
            "translation": np.asarray(lidar_translation, dtype=np.float64).tolist(),
        },
        "cameras": [
            {
                "camera_id": cam.camera_id,
                "width": int(cam.width),
                "height": int(cam.height),
                "intrinsics": np.asarray(cam.intrinsics, dtype=np.float64).tolist(),
                "extrinsic": {
                    "rotation": _unit_quat(cam.rotation),
                    "translation": np.asarray(cam.translation, dtype=np.float64).tolist(),
                },
            }
            for cam in cameras
        ],
        "frames": [
            {
                "index": f.index,
                "timestamp": float(f.timestamp),
                "ego_pose": {
                    "rotation": _unit_quat(f.ego_rotation),
                    "translation": np.asarray(f.ego_translation, dtype=np.float64).tolist(),
                },
            }
            for f in frames
        ],
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    (out / "sweeps").mkdir(exist_ok=True)
    for f in frames:
        np.asarray(f.sweep, dtype="<f4").reshape(-1, 4).tofile(out / "sweeps" / f"{f.index:06d}.bin")
        det_dir = out / "detections" / f"{f.index:06d}"
        det_dir.mkdir(parents=True, exist_ok=True)
        for cam in cameras:
            det_path = det_dir / f"{cam.camera_id}.json"
            if not det_path.exists():
                det_path.write_text("[]\n", encoding="utf-8")
        if f.images:
            img_dir = out / "images" / f"{f.index:06d}"
            img_dir.mkdir(parents=True, exist_ok=True)
            for cam_id, src in f.images.items():
                suffix = Path(src).suffix.lower() or ".jpg"
                (img_dir / f"{cam_id}{suffix}").write_bytes(Path(src).read_bytes())
    return out
