"""Deterministic synthetic scene generator with exact ground truth.

Scenes consist of a (possibly sloped) ground plane, boxes on constant-velocity
trajectories whose sensor-visible faces are surface-sampled, a ring of virtual
pinhole cameras whose instance masks are the filled convex hulls of projected
box corners (painter's order resolves occlusion), and class-consistent unit
embeddings. Every draw derives from the spec seed, so identical specs produce
byte-identical scene directories.

Hull masks intentionally over-cover the objects: points behind an object can
project inside its mask, reproducing the parallax noise that cluster
denoising is meant to remove. Optional wall fragments amplify this.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .geometry import (
    FRAME_EGO,
    FRAME_SENSOR,
    Box3D,
    CameraCalib,
    FrameContext,
    PointCloud,
    RigidTransform,
    project_points,
)
from .masks import Detection2D, RleMask, encode
from .metrics import DYNAMIC_CLASSES
from .scene_io import Scene, write_scene

RESULTS_FORMAT = "autolabel3d-results-v1"


# ---------------------------------------------------------------------------
# spec types


def _check_keys(obj: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise SchemaError(f"{where}: unknown keys {', '.join(unknown)}")


@dataclass(frozen=True)
class GroundSpec:
    extent: float = 60.0
    slope_deg: float = 0.0
    points_per_m2: float = 2.0

    @classmethod
    def from_dict(cls, obj: dict) -> GroundSpec:
        _check_keys(obj, {"extent", "slope_deg", "points_per_m2"}, "ground")
        return cls(**obj)


@dataclass(frozen=True)
class NoiseSpec:
    point_sigma: float = 0.0
    embedding_sigma: float = 0.0
    mask_erosion_px: int = 0

    @classmethod
    def from_dict(cls, obj: dict) -> NoiseSpec:
        _check_keys(obj, {"point_sigma", "embedding_sigma", "mask_erosion_px"}, "noise")
        return cls(**obj)


@dataclass(frozen=True)
class WallSpec:
    """A vertical wall fragment placed behind the object as seen from ego."""

    distance: float = 8.0
    width: float = 1.2
    height: float = 1.5
    points: int = 60

    @classmethod
    def from_dict(cls, obj: dict) -> WallSpec:
        _check_keys(obj, {"distance", "width", "height", "points"}, "wall")
        return cls(**obj)


@dataclass(frozen=True)
class ObjectSpec:
    class_name: str
    size: tuple[float, float, float]
    center: tuple[float, float, float]
    yaw: float = 0.0
    velocity: tuple[float, float] = (0.0, 0.0)
    points_per_m2: float = 25.0
    confidence: float = 0.9
    wall: WallSpec | None = None

    @classmethod
    def from_dict(cls, obj: dict) -> ObjectSpec:
        _check_keys(
            obj,
            {"class_name", "size", "center", "yaw", "velocity", "points_per_m2", "confidence", "wall"},
            "object",
        )
        obj = dict(obj)
        if obj.get("wall") is not None:
            obj["wall"] = WallSpec.from_dict(obj["wall"])
        obj["size"] = tuple(obj["size"])
        obj["center"] = tuple(obj["center"])
        obj["velocity"] = tuple(obj.get("velocity", (0.0, 0.0)))
        return cls(**obj)


@dataclass(frozen=True)
class CameraSpec:
    camera_id: str
    width: int = 640
    height: int = 400
    fx: float = 457.0
    fy: float = 457.0
    cx: float | None = None
    cy: float | None = None
    azimuth_deg: float = 0.0
    position: tuple[float, float, float] = (0.0, 0.0, 1.6)

    @classmethod
    def from_dict(cls, obj: dict) -> CameraSpec:
        _check_keys(
            obj,
            {"camera_id", "width", "height", "fx", "fy", "cx", "cy", "azimuth_deg", "position"},
            "camera",
        )
        obj = dict(obj)
        if "position" in obj:
            obj["position"] = tuple(obj["position"])
        return cls(**obj)

    def to_calib(self) -> CameraCalib:
        cx = self.cx if self.cx is not None else self.width / 2.0
        cy = self.cy if self.cy is not None else self.height / 2.0
        psi = math.radians(self.azimuth_deg)
        c, s = math.cos(psi), math.sin(psi)
        # Columns are the camera axes (x right, y down, z forward) in ego coords.
        ego_from_cam = np.array([[s, 0.0, c], [-c, 0.0, s], [0.0, -1.0, 0.0]])
        cam_from_ego = RigidTransform.from_matrix(
            ego_from_cam.T, -(ego_from_cam.T @ np.asarray(self.position))
        )
        k = np.array([[self.fx, 0.0, cx], [0.0, self.fy, cy], [0.0, 0.0, 1.0]])
        return CameraCalib(self.camera_id, k, cam_from_ego, self.width, self.height)


def default_camera_ring(n: int = 6, width: int = 640, height: int = 400, fx: float = 400.0) -> list[CameraSpec]:
    """Evenly spaced ring with overlapping fields of view (full coverage)."""
    return [
        CameraSpec(
            camera_id=f"cam_{i}",
            width=width,
            height=height,
            fx=fx,
            fy=fx,
            azimuth_deg=i * 360.0 / n,
            position=(0.0, 0.0, 1.6),
        )
        for i in range(n)
    ]


@dataclass(frozen=True)
class SceneSpec:
    scene_id: str = "synthetic"
    seed: int = 0
    n_frames: int = 5
    dt: float = 0.5
    embedding_dim: int = 32
    ego_velocity: tuple[float, float] = (0.0, 0.0)
    lidar_height: float = 2.0
    ground: GroundSpec = field(default_factory=GroundSpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    cameras: tuple[CameraSpec, ...] = field(default_factory=lambda: tuple(default_camera_ring()))
    objects: tuple[ObjectSpec, ...] = ()

    def __post_init__(self) -> None:
        if self.n_frames < 1 or self.dt <= 0:
            raise ValueError("need n_frames >= 1 and dt > 0")
        if self.ground.points_per_m2 <= 0 or any(o.points_per_m2 <= 0 for o in self.objects):
            raise ValueError("point densities must be positive")

    @classmethod
    def from_dict(cls, obj: dict) -> SceneSpec:
        _check_keys(
            obj,
            {
                "scene_id",
                "seed",
                "n_frames",
                "dt",
                "embedding_dim",
                "ego_velocity",
                "lidar_height",
                "ground",
                "noise",
                "cameras",
                "objects",
            },
            "scene spec",
        )
        obj = dict(obj)
        if "ground" in obj:
            obj["ground"] = GroundSpec.from_dict(obj["ground"])
        if "noise" in obj:
            obj["noise"] = NoiseSpec.from_dict(obj["noise"])
        if "cameras" in obj:
            obj["cameras"] = tuple(CameraSpec.from_dict(c) for c in obj["cameras"])
        if "objects" in obj:
            obj["objects"] = tuple(ObjectSpec.from_dict(o) for o in obj["objects"])
        if "ego_velocity" in obj:
            obj["ego_velocity"] = tuple(obj["ego_velocity"])
        return cls(**obj)

    @classmethod
    def from_json_file(cls, path) -> SceneSpec:
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True, eq=False)
class GroundTruthBox:
    box: Box3D  # ego frame
    class_name: str
    instance_id: int


# ---------------------------------------------------------------------------
# embeddings


def synth_embedding(
    class_name: str, instance_id: int, sigma: float = 0.0, seed: int = 0, dim: int = 32
) -> np.ndarray:
    """Deterministic unit embedding for a (class, instance) key.

    Base vectors put weight 1/sqrt(2) on a key-specific coordinate pair, so
    any two distinct keys have dot product <= 0.5 (guaranteed for the known
    classes while instance ids stay below C(dim, 2) / #classes). Gaussian
    jitter of scale `sigma` is applied and the result renormalized.
    """
    if dim < 2:
        raise ValueError("embedding dimension must be >= 2")
    total = dim * (dim - 1) // 2
    capacity = max(total // len(DYNAMIC_CLASSES), 1)
    if class_name in DYNAMIC_CLASSES:
        class_slot = DYNAMIC_CLASSES.index(class_name)
    else:
        class_slot = zlib.crc32(class_name.encode()) % len(DYNAMIC_CLASSES)
    code = (class_slot * capacity + int(instance_id)) % total

    a, rem = 0, code
    while rem >= dim - 1 - a:
        rem -= dim - 1 - a
        a += 1
    b = a + 1 + rem

    vec = np.zeros(dim)
    vec[[a, b]] = 1.0 / math.sqrt(2.0)
    if sigma > 0.0:
        rng = np.random.default_rng(seed)
        vec = vec + sigma * rng.standard_normal(dim)
        vec /= np.linalg.norm(vec)
    return vec


# ---------------------------------------------------------------------------
# mask rendering


def _convex_hull(points: np.ndarray) -> np.ndarray:
    """Monotone-chain convex hull of (N, 2) points, counter-clockwise."""
    pts = np.unique(points, axis=0)
    if pts.shape[0] < 3:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[np.ndarray] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[np.ndarray] = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def _fill_convex(poly: np.ndarray, height: int, width: int) -> np.ndarray:
    """Rasterize a convex polygon: pixel centers inside the polygon are set."""
    grid = np.zeros((height, width), dtype=bool)
    if poly.shape[0] < 3:
        return grid
    ys = np.arange(height) + 0.5
    xlo = np.full(height, np.inf)
    xhi = np.full(height, -np.inf)
    n = poly.shape[0]
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if y1 == y2:
            continue
        rows = (ys >= min(y1, y2)) & (ys < max(y1, y2))
        if not rows.any():
            continue
        t = (ys[rows] - y1) / (y2 - y1)
        xs = x1 + t * (x2 - x1)
        xlo[rows] = np.minimum(xlo[rows], xs)
        xhi[rows] = np.maximum(xhi[rows], xs)
    for r in np.flatnonzero(np.isfinite(xlo) & (xhi >= xlo)):
        c0 = max(0, int(math.ceil(xlo[r] - 0.5)))
        c1 = min(width - 1, int(math.floor(xhi[r] - 0.5)))
        if c1 >= c0:
            grid[r, c0 : c1 + 1] = True
    return grid


def _erode(grid: np.ndarray, px: int) -> np.ndarray:
    out = grid
    for _ in range(px):
        shrunk = out.copy()
        shrunk[1:, :] &= out[:-1, :]
        shrunk[:-1, :] &= out[1:, :]
        shrunk[:, 1:] &= out[:, :-1]
        shrunk[:, :-1] &= out[:, 1:]
        shrunk[0, :] = False
        shrunk[-1, :] = False
        shrunk[:, 0] = False
        shrunk[:, -1] = False
        out = shrunk
    return out


def render_hull(box: Box3D, calib: CameraCalib) -> np.ndarray:
    """Dense hull mask of a box's projected corners (empty if behind camera)."""
    z_eps = 1e-6
    corners_cam = calib.extrinsic.apply(box.corners())
    edges = [(0, 1), (1, 2), (2, 3), (3, 0), (4, 5), (5, 6), (6, 7), (7, 4), (0, 4), (1, 5), (2, 6), (3, 7)]
    front = corners_cam[:, 2] > z_eps
    candidates = [corners_cam[i] for i in range(8) if front[i]]
    for i, j in edges:
        if front[i] != front[j]:
            a, b = corners_cam[i], corners_cam[j]
            t = (z_eps - a[2]) / (b[2] - a[2])
            candidates.append(a + t * (b - a))
    if not candidates:
        return np.zeros((calib.height, calib.width), dtype=bool)
    uv, _ = project_points(np.array(candidates), calib)
    hull = _convex_hull(uv)
    return _fill_convex(hull, calib.height, calib.width)


def render_mask(box: Box3D, calib: CameraCalib, erosion_px: int = 0) -> RleMask:
    """RLE hull mask for one box in a camera (no occlusion handling)."""
    return encode(_erode(render_hull(box, calib), erosion_px))


# ---------------------------------------------------------------------------
# surface sampling


_FACES = (
    # (axis, sign): outward normal of each side face in box-local coords
    (0, 1.0),
    (0, -1.0),
    (1, 1.0),
    (1, -1.0),
)


def _sample_object_pattern(obj: ObjectSpec, rng: np.random.Generator) -> dict:
    """Fixed local-frame point pattern per face (side faces plus the top)."""
    l, w, h = obj.size
    pattern: dict = {}
    for axis, sign in _FACES:
        span_u = w if axis == 0 else l
        count = max(3, int(math.ceil(obj.points_per_m2 * span_u * h)))
        u = rng.uniform(-0.5, 0.5, count)
        v = rng.uniform(0.0, 1.0, count)
        pts = np.empty((count, 3))
        if axis == 0:
            pts[:, 0] = sign * l / 2.0
            pts[:, 1] = u * w
        else:
            pts[:, 0] = u * l
            pts[:, 1] = sign * w / 2.0
        pts[:, 2] = (v - 0.5) * h
        pattern[(axis, sign)] = pts
    count = max(3, int(math.ceil(obj.points_per_m2 * l * w)))
    top = np.empty((count, 3))
    top[:, 0] = rng.uniform(-0.5, 0.5, count) * l
    top[:, 1] = rng.uniform(-0.5, 0.5, count) * w
    top[:, 2] = h / 2.0
    pattern["top"] = top
    return pattern


def _visible_object_points(
    pattern: dict, obj: ObjectSpec, center: np.ndarray, sensor_pos: np.ndarray
) -> np.ndarray:
    """World-frame points on the faces that actually face the sensor."""
    c, s = math.cos(obj.yaw), math.sin(obj.yaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    chunks = []
    for axis, sign in _FACES:
        normal_local = np.zeros(3)
        normal_local[axis] = sign
        normal_world = rot @ normal_local
        face_center = center + rot @ (normal_local * (obj.size[axis] / 2.0))
        if normal_world @ (sensor_pos - face_center) > 0:
            chunks.append(pattern[(axis, sign)])
    if sensor_pos[2] > center[2] + obj.size[2] / 2.0:
        chunks.append(pattern["top"])
    if not chunks:
        return np.empty((0, 3))
    return np.vstack(chunks) @ rot.T + center


def _wall_pattern(wall: WallSpec, rng: np.random.Generator) -> np.ndarray:
    pts = np.empty((wall.points, 3))
    pts[:, 0] = rng.uniform(-0.5, 0.5, wall.points) * wall.width
    pts[:, 1] = 0.0
    pts[:, 2] = rng.uniform(0.0, 1.0, wall.points) * wall.height
    return pts


# ---------------------------------------------------------------------------
# scene generation


def generate(spec: SceneSpec) -> tuple[Scene, list[list[GroundTruthBox]]]:
    """Build the scene and its per-frame ego-frame ground truth."""
    ground_rng = np.random.default_rng(np.random.SeedSequence((spec.seed, 0)))
    extent = spec.ground.extent
    n_ground = int(math.ceil(spec.ground.points_per_m2 * extent * extent))
    ground_xy = ground_rng.uniform(-extent / 2.0, extent / 2.0, (n_ground, 2))
    slope = math.tan(math.radians(spec.ground.slope_deg))
    ground_pts = np.column_stack([ground_xy, slope * ground_xy[:, 0]])

    patterns = []
    wall_patterns = []
    for k, obj in enumerate(spec.objects):
        obj_rng = np.random.default_rng(np.random.SeedSequence((spec.seed, 1, k)))
        patterns.append(_sample_object_pattern(obj, obj_rng))
        wall_patterns.append(_wall_pattern(obj.wall, obj_rng) if obj.wall else None)

    calibs = tuple(c.to_calib() for c in spec.cameras)
    lidar_extrinsic = RigidTransform(
        np.array([1.0, 0.0, 0.0, 0.0]), np.array([0.0, 0.0, spec.lidar_height])
    )

    frames: list[FrameContext] = []
    sweeps: list[PointCloud] = []
    detections: list[dict[str, list[Detection2D]]] = []
    ground_truth: list[list[GroundTruthBox]] = []

    for f in range(spec.n_frames):
        t = f * spec.dt
        ego_pos = np.array([spec.ego_velocity[0] * t, spec.ego_velocity[1] * t, 0.0])
        ego_pose = RigidTransform(np.array([1.0, 0.0, 0.0, 0.0]), ego_pos)
        frames.append(FrameContext(frame_index=f, timestamp=t, ego_pose=ego_pose, cameras=calibs))
        sensor_pos = ego_pos + lidar_extrinsic.translation

        world_parts = [ground_pts]
        centers = []
        for k, obj in enumerate(spec.objects):
            center = np.array(
                [obj.center[0] + obj.velocity[0] * t, obj.center[1] + obj.velocity[1] * t, obj.center[2]]
            )
            centers.append(center)
            world_parts.append(_visible_object_points(patterns[k], obj, center, sensor_pos))
            if wall_patterns[k] is not None:
                away = center[:2] - ego_pos[:2]
                away = away / (np.linalg.norm(away) or 1.0)
                ortho = np.array([-away[1], away[0]])
                wall_center = np.array(
                    [center[0] + away[0] * obj.wall.distance, center[1] + away[1] * obj.wall.distance, 0.0]
                )
                local = wall_patterns[k]
                wall_world = (
                    wall_center
                    + local[:, 0, None] * np.array([ortho[0], ortho[1], 0.0])
                    + local[:, 2, None] * np.array([0.0, 0.0, 1.0])
                )
                world_parts.append(wall_world)
        world = np.vstack(world_parts)

        if spec.noise.point_sigma > 0.0:
            frame_rng = np.random.default_rng(np.random.SeedSequence((spec.seed, 2, f)))
            world = world + spec.noise.point_sigma * frame_rng.standard_normal(world.shape)

        sensor_from_global = (ego_pose @ lidar_extrinsic).inverse()
        sweep_pts = sensor_from_global.apply(world)
        # Quantize like the on-disk float32 records so a written scene
        # round-trips exactly.
        sweep_pts = sweep_pts.astype("<f4").astype(np.float64)
        sweeps.append(PointCloud(sweep_pts, np.full(len(sweep_pts), t), FRAME_SENSOR))

        gt_frame: list[GroundTruthBox] = []
        ego_from_global = ego_pose.inverse()
        boxes_ego = []
        for k, obj in enumerate(spec.objects):
            box_global = Box3D(
                center=centers[k], size=np.asarray(obj.size), yaw=obj.yaw,
                velocity=np.asarray(obj.velocity), frame="global",
            )
            box_ego = box_global.transformed(ego_from_global, FRAME_EGO)
            boxes_ego.append(box_ego)
            gt_frame.append(GroundTruthBox(box=box_ego, class_name=obj.class_name, instance_id=k))
        ground_truth.append(gt_frame)

        per_camera: dict[str, list[Detection2D]] = {}
        for ci, calib in enumerate(calibs):
            hulls = [render_hull(b, calib) for b in boxes_ego]
            cam_pos_ego = calib.extrinsic.inverse().translation
            depth_order = sorted(
                range(len(boxes_ego)),
                key=lambda k: -float(np.linalg.norm(boxes_ego[k].center - cam_pos_ego)),
            )
            owner = np.full((calib.height, calib.width), -1, dtype=np.int64)
            for k in depth_order:
                owner[hulls[k]] = k
            dets = []
            for k, obj in enumerate(spec.objects):
                final = _erode((owner == k) & hulls[k], spec.noise.mask_erosion_px)
                if not final.any():
                    continue
                rows, cols = np.nonzero(final)
                emb_seed = int(
                    np.random.SeedSequence((spec.seed, 3, f, ci, k)).generate_state(1)[0]
                )
                dets.append(
                    Detection2D(
                        camera_id=calib.camera_id,
                        class_name=obj.class_name,
                        confidence=obj.confidence,
                        bbox2d=np.array(
                            [cols.min(), rows.min(), cols.max() + 1, rows.max() + 1], dtype=np.float64
                        ),
                        mask=encode(final),
                        embedding=synth_embedding(
                            obj.class_name, k, spec.noise.embedding_sigma, emb_seed, spec.embedding_dim
                        ),
                    )
                )
            per_camera[calib.camera_id] = dets
        detections.append(per_camera)

    scene = Scene(
        scene_id=spec.scene_id,
        frames=frames,
        sweeps=sweeps,
        detections=detections,
        lidar_extrinsic=lidar_extrinsic,
        embedding_dim=spec.embedding_dim,
    )
    return scene, ground_truth


def ground_truth_to_dict(scene: Scene, ground_truth: list[list[GroundTruthBox]]) -> dict:
    return {
        "format": RESULTS_FORMAT,
        "scene_id": scene.scene_id,
        "frames": [
            {
                "frame_index": frame.frame_index,
                "timestamp": frame.timestamp,
                "boxes": [
                    {
                        "center": gt.box.center.tolist(),
                        "size": gt.box.size.tolist(),
                        "yaw": gt.box.yaw,
                        "velocity": gt.box.velocity.tolist(),
                        "class_name": gt.class_name,
                        "instance_id": gt.instance_id,
                    }
                    for gt in boxes
                ],
            }
            for frame, boxes in zip(scene.frames, ground_truth)
        ],
    }


def generate_to_dir(spec: SceneSpec, out_dir) -> Path:
    """Generate and write the scene plus ground_truth.json; returns the path."""
    scene, gt = generate(spec)
    out = Path(out_dir)
    write_scene(scene, out)
    with open(out / "ground_truth.json", "w", encoding="utf-8") as fh:
        json.dump(ground_truth_to_dict(scene, gt), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


__all__ = [
    "RESULTS_FORMAT",
    "GroundSpec",
    "NoiseSpec",
    "WallSpec",
    "ObjectSpec",
    "CameraSpec",
    "SceneSpec",
    "GroundTruthBox",
    "default_camera_ring",
    "synth_embedding",
    "render_mask",
    "render_hull",
    "generate",
    "generate_to_dir",
    "ground_truth_to_dict",
]
