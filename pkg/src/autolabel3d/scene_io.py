"""Scene directory interchange: loading, validation, writing, and sweep aggregation.

Layout (all binary data little-endian):

    manifest.json                     scene id, conventions, calibrations,
                                      lidar extrinsic (ego <- sensor), frames
                                      with ego poses (global <- ego)
    sweeps/<frame:06d>.bin            float32 records (x, y, z, dt) in the
                                      sensor frame; dt is the per-point
                                      timestamp offset from the frame time
    detections/<frame:06d>/<cam>.json per-camera 2D detections with COCO
                                      column-major RLE mask strings and a
                                      unit-norm appearance embedding

The manifest declares the camera axis convention so producers and consumers
cannot silently disagree.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .geometry import (
    FRAME_EGO,
    FRAME_SENSOR,
    CameraCalib,
    FrameContext,
    PointCloud,
    RigidTransform,
)
from .masks import Detection2D, RleMask, counts_to_string

SCENE_FORMAT = "autolabel3d-scene-v1"
CAMERA_AXES = "z-forward-x-right-y-down"
CONVENTIONS = {
    "camera_axes": CAMERA_AXES,
    "yaw": "ccw-about-z-from-x",
    "units": "meters",
    "sweep_dtype": "float32-le",
}
_SWEEP_DTYPE = np.dtype("<f4")


@dataclass(eq=False)
class Scene:
    """A fully loaded scene: frames, sensor-frame sweeps, per-camera detections."""

    scene_id: str
    frames: list[FrameContext]
    sweeps: list[PointCloud]
    detections: list[dict[str, list[Detection2D]]]
    lidar_extrinsic: RigidTransform
    embedding_dim: int

    @property
    def n_frames(self) -> int:
        return len(self.frames)


@dataclass(frozen=True, eq=False)
class SweepAggregate:
    """Up to k consecutive sweeps expressed in the reference frame's ego coords."""

    reference_frame_index: int
    cloud: PointCloud
    source_sweep: np.ndarray  # absolute frame index each point came from


def _transform_from_json(obj: dict, where: str) -> RigidTransform:
    try:
        return RigidTransform(np.asarray(obj["rotation"]), np.asarray(obj["translation"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: bad rigid transform ({exc})") from exc


def _transform_to_json(t: RigidTransform) -> dict:
    return {"rotation": t.rotation.tolist(), "translation": t.translation.tolist()}


def sweep_path(scene_dir: Path, frame_index: int) -> Path:
    return Path(scene_dir) / "sweeps" / f"{frame_index:06d}.bin"


def detections_dir(scene_dir: Path, frame_index: int) -> Path:
    return Path(scene_dir) / "detections" / f"{frame_index:06d}"


def load_scene(path, min_confidence: float = 0.0) -> Scene:
    """Load and validate a scene directory; see the module docstring for layout.

    Detections below `min_confidence` are dropped at load and never stored.
    Raises FileNotFoundError for missing files and SchemaError (with frame and
    field context) for invariant violations.
    """
    scene_dir = Path(path)
    manifest_path = scene_dir / "manifest.json"
    if not manifest_path.is_file():
        raise FileNotFoundError(str(manifest_path))
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)

    if manifest.get("format") != SCENE_FORMAT:
        raise SchemaError(f"manifest format {manifest.get('format')!r}, expected {SCENE_FORMAT!r}")
    axes = manifest.get("conventions", {}).get("camera_axes")
    if axes != CAMERA_AXES:
        raise SchemaError(f"camera axis convention {axes!r}, expected {CAMERA_AXES!r}")
    scene_id = manifest.get("scene_id")
    if not scene_id:
        raise SchemaError("manifest missing scene_id")
    embedding_dim = int(manifest.get("embedding_dim", 0))
    if embedding_dim < 1:
        raise SchemaError("manifest embedding_dim must be >= 1")
    lidar_extrinsic = _transform_from_json(manifest.get("lidar_extrinsic", {}), "lidar_extrinsic")

    cameras = []
    for entry in manifest.get("cameras", []):
        cam_id = entry.get("camera_id")
        try:
            cameras.append(
                CameraCalib(
                    camera_id=cam_id,
                    intrinsics=np.asarray(entry["intrinsics"], dtype=np.float64),
                    extrinsic=_transform_from_json(entry["extrinsic"], f"camera {cam_id}"),
                    width=entry["width"],
                    height=entry["height"],
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"camera {cam_id!r}: {exc}") from exc
    cameras = tuple(cameras)
    cam_by_id = {c.camera_id: c for c in cameras}
    if len(cam_by_id) != len(cameras):
        raise SchemaError("duplicate camera_id in manifest")

    frame_entries = manifest.get("frames", [])
    if not frame_entries:
        raise SchemaError("manifest frames list is empty")

    frames: list[FrameContext] = []
    sweeps: list[PointCloud] = []
    detections: list[dict[str, list[Detection2D]]] = []
    prev_ts = None
    for pos, entry in enumerate(frame_entries):
        idx = entry.get("index")
        if idx != pos:
            raise SchemaError(f"frame {pos}: index {idx!r} not contiguous from 0")
        ts = float(entry["timestamp"])
        if prev_ts is not None and ts <= prev_ts:
            raise SchemaError(f"frame {pos}: timestamp {ts} not strictly increasing")
        prev_ts = ts
        pose = _transform_from_json(entry.get("ego_pose", {}), f"frame {pos} ego_pose")
        frames.append(FrameContext(frame_index=pos, timestamp=ts, ego_pose=pose, cameras=cameras))

        spath = sweep_path(scene_dir, pos)
        if not spath.is_file():
            raise FileNotFoundError(str(spath))
        raw = np.fromfile(spath, dtype=_SWEEP_DTYPE)
        if raw.size % 4:
            raise SchemaError(f"frame {pos}: sweep file length not a multiple of 4 floats")
        rec = raw.reshape(-1, 4).astype(np.float64)
        try:
            sweeps.append(PointCloud(rec[:, :3], ts + rec[:, 3], FRAME_SENSOR))
        except ValueError as exc:
            raise SchemaError(f"frame {pos}: sweep: {exc}") from exc

        ddir = detections_dir(scene_dir, pos)
        per_camera: dict[str, list[Detection2D]] = {}
        for cam in cameras:
            dpath = ddir / f"{cam.camera_id}.json"
            if not dpath.is_file():
                raise FileNotFoundError(str(dpath))
            with open(dpath, encoding="utf-8") as fh:
                records = json.load(fh)
            dets = []
            for k, rec_d in enumerate(records):
                where = f"frame {pos}, camera {cam.camera_id}, detection {k}"
                try:
                    rle = rec_d["mask_rle"]
                    mask = RleMask.from_string((rle["size"][0], rle["size"][1]), rle["counts"])
                    det = Detection2D(
                        camera_id=cam.camera_id,
                        class_name=rec_d["class_name"],
                        confidence=rec_d["confidence"],
                        bbox2d=np.asarray(rec_d["bbox2d"], dtype=np.float64),
                        mask=mask,
                        embedding=np.asarray(rec_d["embedding"], dtype=np.float64),
                    )
                except (KeyError, TypeError, ValueError) as exc:
                    raise SchemaError(f"{where}: {exc}") from exc
                if det.mask.size != (cam.height, cam.width):
                    raise SchemaError(
                        f"{where}: mask size {det.mask.size} != image {(cam.height, cam.width)}"
                    )
                if det.embedding.shape[0] != embedding_dim:
                    raise SchemaError(
                        f"{where}: embedding dimension {det.embedding.shape[0]} != {embedding_dim}"
                    )
                if det.confidence >= min_confidence:
                    dets.append(det)
            per_camera[cam.camera_id] = dets
        for extra in sorted(p.stem for p in ddir.glob("*.json")):
            if extra not in cam_by_id:
                raise SchemaError(f"frame {pos}: detections for unknown camera_id {extra!r}")
        detections.append(per_camera)

    return Scene(
        scene_id=scene_id,
        frames=frames,
        sweeps=sweeps,
        detections=detections,
        lidar_extrinsic=lidar_extrinsic,
        embedding_dim=embedding_dim,
    )


def write_scene(scene: Scene, path) -> Path:
    """Write a scene directory in the interchange layout (deterministic bytes)."""
    scene_dir = Path(path)
    scene_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": SCENE_FORMAT,
        "scene_id": scene.scene_id,
        "conventions": dict(CONVENTIONS),
        "embedding_dim": scene.embedding_dim,
        "lidar_extrinsic": _transform_to_json(scene.lidar_extrinsic),
        "cameras": [
            {
                "camera_id": c.camera_id,
                "width": c.width,
                "height": c.height,
                "intrinsics": c.intrinsics.tolist(),
                "extrinsic": _transform_to_json(c.extrinsic),
            }
            for c in (scene.frames[0].cameras if scene.frames else ())
        ],
        "frames": [
            {"index": f.frame_index, "timestamp": f.timestamp, "ego_pose": _transform_to_json(f.ego_pose)}
            for f in scene.frames
        ],
    }
    with open(scene_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    (scene_dir / "sweeps").mkdir(exist_ok=True)
    for f, sweep in zip(scene.frames, scene.sweeps):
        rec = np.empty((len(sweep), 4), dtype=_SWEEP_DTYPE)
        rec[:, :3] = sweep.points
        rec[:, 3] = sweep.timestamps - f.timestamp
        rec.tofile(sweep_path(scene_dir, f.frame_index))

    for f, per_camera in zip(scene.frames, scene.detections):
        ddir = detections_dir(scene_dir, f.frame_index)
        ddir.mkdir(parents=True, exist_ok=True)
        for cam in f.cameras:
            records = [
                {
                    "class_name": d.class_name,
                    "confidence": d.confidence,
                    "bbox2d": d.bbox2d.tolist(),
                    "mask_rle": {
                        "size": list(d.mask.size),
                        "counts": counts_to_string(d.mask.counts),
                    },
                    "embedding": d.embedding.tolist(),
                }
                for d in per_camera.get(cam.camera_id, [])
            ]
            with open(ddir / f"{cam.camera_id}.json", "w", encoding="utf-8") as fh:
                json.dump(records, fh, indent=2, sort_keys=True)
                fh.write("\n")
    return scene_dir


def aggregate_sweeps(scene: Scene, ref_idx: int, k: int = 5) -> SweepAggregate:
    """Concatenate the k sweeps ending at ref_idx in the reference ego frame.

    Each sweep i is mapped sensor -> ego_i -> global -> ego_ref; sweeps before
    the scene start are skipped. No points are dropped.
    """
    if not 0 <= ref_idx < scene.n_frames:
        raise ValueError(f"reference frame {ref_idx} outside scene of {scene.n_frames} frames")
    if k < 1:
        raise ValueError("k must be >= 1")

    ref_from_global = scene.frames[ref_idx].ego_pose.inverse()
    parts, ts_parts, src_parts = [], [], []
    for i in range(ref_idx - k + 1, ref_idx + 1):
        if i < 0:
            continue
        to_ref = ref_from_global @ scene.frames[i].ego_pose @ scene.lidar_extrinsic
        parts.append(to_ref.apply(scene.sweeps[i].points))
        ts_parts.append(scene.sweeps[i].timestamps)
        src_parts.append(np.full(len(scene.sweeps[i]), i, dtype=np.int64))

    if parts:
        cloud = PointCloud(np.vstack(parts), np.concatenate(ts_parts), FRAME_EGO)
        source = np.concatenate(src_parts)
    else:
        cloud = PointCloud.empty(FRAME_EGO)
        source = np.empty(0, dtype=np.int64)
    return SweepAggregate(reference_frame_index=ref_idx, cloud=cloud, source_sweep=source)


__all__ = [
    "SCENE_FORMAT",
    "CAMERA_AXES",
    "CONVENTIONS",
    "Scene",
    "SweepAggregate",
    "load_scene",
    "write_scene",
    "aggregate_sweeps",
    "sweep_path",
    "detections_dir",
]
