"""Frame-aware geometry: point clouds, rigid transforms, pinhole cameras, yaw boxes.

Camera convention throughout: z forward, x right, y down. Boxes are yaw-only
(no roll/pitch) with size ordered (length, width, height).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .errors import InvalidTransformError

FRAME_SENSOR = "sensor"
FRAME_EGO = "ego"
FRAME_GLOBAL = "global"

TWO_PI = 2.0 * math.pi


def normalize_yaw(theta: float) -> float:
    """Wrap an angle to the half-open interval (-pi, pi]."""
    theta = float(theta)
    if not math.isfinite(theta):
        raise ValueError(f"yaw must be finite, got {theta!r}")
    wrapped = theta % TWO_PI
    if wrapped > math.pi:
        wrapped -= TWO_PI
    return wrapped


def yaw_difference(a: float, b: float) -> float:
    """Absolute heading difference in [0, pi] over the full 2*pi period."""
    return abs(normalize_yaw(a - b))


def yaw_difference_mod_pi(a: float, b: float) -> float:
    """Absolute axis difference in [0, pi/2], ignoring heading sign."""
    d = (a - b) % math.pi
    return min(d, math.pi - d)


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Rotation as a unit quaternion (w, x, y, z) plus translation; p -> R p + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        q = np.array(self.rotation, dtype=np.float64).reshape(4)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if not (np.isfinite(q).all() and np.isfinite(t).all()):
            raise InvalidTransformError("transform has non-finite entries")
        norm = float(np.linalg.norm(q))
        if abs(norm - 1.0) > 1e-9:
            raise InvalidTransformError(f"quaternion norm {norm:.12g} is not 1")
        q.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    @classmethod
    def from_yaw(cls, yaw: float, translation=(0.0, 0.0, 0.0)) -> RigidTransform:
        half = 0.5 * float(yaw)
        return cls(
            np.array([math.cos(half), 0.0, 0.0, math.sin(half)]),
            np.asarray(translation, dtype=np.float64),
        )

    @classmethod
    def from_matrix(cls, rotation_matrix: np.ndarray, translation=(0.0, 0.0, 0.0)) -> RigidTransform:
        """Build from a 3x3 rotation matrix (Shepperd's quaternion extraction)."""
        m = np.asarray(rotation_matrix, dtype=np.float64).reshape(3, 3)
        trace = m[0, 0] + m[1, 1] + m[2, 2]
        if trace > 0:
            s = math.sqrt(trace + 1.0) * 2.0
            q = np.array(
                [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
            )
        elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
            s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
            q = np.array(
                [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
            )
        elif m[1, 1] >= m[2, 2]:
            s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
            q = np.array(
                [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
            )
        else:
            s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
            q = np.array(
                [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
            )
        return cls(q / np.linalg.norm(q), np.asarray(translation, dtype=np.float64))

    @cached_property
    def rotation_matrix(self) -> np.ndarray:
        w, x, y, z = self.rotation
        m = np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )
        m.setflags(write=False)
        return m

    @property
    def yaw(self) -> float:
        """Heading component of the rotation (exact for yaw-only rotations)."""
        m = self.rotation_matrix
        return math.atan2(m[1, 0], m[0, 0])

    def __matmul__(self, other: RigidTransform) -> RigidTransform:
        """Composition: (self @ other) applies `other` first, then `self`."""
        w1, x1, y1, z1 = self.rotation
        w2, x2, y2, z2 = other.rotation
        q = np.array(
            [
                w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
                w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
                w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
                w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
            ]
        )
        q /= np.linalg.norm(q)
        return RigidTransform(q, self.rotation_matrix @ other.translation + self.translation)

    def inverse(self) -> RigidTransform:
        w, x, y, z = self.rotation
        q = np.array([w, -x, -y, -z])
        return RigidTransform(q, -(self.rotation_matrix.T @ self.translation))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an (N, 3) array (or a single 3-vector)."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation_matrix.T + self.translation


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Timestamped 3D points tagged with the frame they are expressed in."""

    points: np.ndarray
    timestamps: np.ndarray
    frame: str

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=np.float64).reshape(-1, 3)
        ts = np.array(self.timestamps, dtype=np.float64).reshape(-1)
        if pts.shape[0] != ts.shape[0]:
            raise ValueError(f"{pts.shape[0]} points but {ts.shape[0]} timestamps")
        if not np.isfinite(pts).all():
            raise ValueError("point cloud contains non-finite coordinates")
        if not np.isfinite(ts).all():
            raise ValueError("point cloud contains non-finite timestamps")
        if ts.size > 1 and np.any(np.diff(ts) < 0):
            raise ValueError("timestamps must be non-decreasing within a sweep")
        if not self.frame:
            raise ValueError("frame tag is required")
        pts.setflags(write=False)
        ts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "timestamps", ts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @classmethod
    def empty(cls, frame: str) -> PointCloud:
        return cls(np.empty((0, 3)), np.empty(0), frame)

    def select(self, indices: np.ndarray) -> PointCloud:
        """Subset by ascending indices (preserves timestamp monotonicity)."""
        return PointCloud(self.points[indices], self.timestamps[indices], self.frame)


def transform_points(cloud: PointCloud, t: RigidTransform, new_frame: str | None = None) -> PointCloud:
    """Apply a rigid transform to every point; the caller decides the new frame tag."""
    return PointCloud(t.apply(cloud.points), cloud.timestamps, new_frame or cloud.frame)


@dataclass(frozen=True, eq=False)
class CameraCalib:
    """Pinhole camera with zero skew; extrinsic maps ego coordinates to camera."""

    camera_id: str
    intrinsics: np.ndarray
    extrinsic: RigidTransform
    width: int
    height: int

    def __post_init__(self) -> None:
        k = np.array(self.intrinsics, dtype=np.float64).reshape(3, 3)
        if not np.isfinite(k).all():
            raise ValueError(f"camera {self.camera_id}: non-finite intrinsics")
        if k[0, 0] <= 0 or k[1, 1] <= 0:
            raise ValueError(f"camera {self.camera_id}: focal lengths must be positive")
        if k[0, 1] != 0 or not np.array_equal(k[2], [0.0, 0.0, 1.0]) or k[1, 0] != 0:
            raise ValueError(f"camera {self.camera_id}: intrinsics must be zero-skew pinhole")
        w, h = int(self.width), int(self.height)
        if w <= 0 or h <= 0:
            raise ValueError(f"camera {self.camera_id}: image size must be positive")
        if not (0 < k[0, 2] < w and 0 < k[1, 2] < h):
            raise ValueError(f"camera {self.camera_id}: principal point outside image")
        k.setflags(write=False)
        object.__setattr__(self, "intrinsics", k)
        object.__setattr__(self, "width", w)
        object.__setattr__(self, "height", h)

    @property
    def fx(self) -> float:
        return float(self.intrinsics[0, 0])

    @property
    def fy(self) -> float:
        return float(self.intrinsics[1, 1])

    @property
    def cx(self) -> float:
        return float(self.intrinsics[0, 2])

    @property
    def cy(self) -> float:
        return float(self.intrinsics[1, 2])


def project_point(p_cam, calib: CameraCalib) -> tuple[float, float] | None:
    """Pinhole projection of one camera-frame point; None signals behind-camera."""
    x, y, z = (float(v) for v in p_cam)
    if z <= 0.0:
        return None
    return (calib.fx * x / z + calib.cx, calib.fy * y / z + calib.cy)


def project_points(points_cam: np.ndarray, calib: CameraCalib) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized projection: (N, 2) pixel coords and an in-front-of-camera mask."""
    pts = np.asarray(points_cam, dtype=np.float64).reshape(-1, 3)
    z = pts[:, 2]
    in_front = z > 0.0
    safe_z = np.where(in_front, z, 1.0)
    uv = np.empty((pts.shape[0], 2))
    uv[:, 0] = calib.fx * pts[:, 0] / safe_z + calib.cx
    uv[:, 1] = calib.fy * pts[:, 1] / safe_z + calib.cy
    return uv, in_front


@dataclass(frozen=True, eq=False)
class Box3D:
    """Yaw-oriented box: center, (length, width, height), heading, planar velocity."""

    center: np.ndarray
    size: np.ndarray
    yaw: float
    velocity: np.ndarray = (0.0, 0.0)
    frame: str = FRAME_EGO

    def __post_init__(self) -> None:
        c = np.array(self.center, dtype=np.float64).reshape(3)
        s = np.array(self.size, dtype=np.float64).reshape(3)
        v = np.array(self.velocity, dtype=np.float64).reshape(2)
        if not (np.isfinite(c).all() and np.isfinite(s).all() and np.isfinite(v).all()):
            raise ValueError("box has non-finite entries")
        if np.any(s <= 0):
            raise ValueError(f"box size must be positive, got {s.tolist()}")
        for a in (c, s, v):
            a.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "size", s)
        object.__setattr__(self, "velocity", v)
        object.__setattr__(self, "yaw", normalize_yaw(self.yaw))

    @property
    def speed(self) -> float:
        return float(np.hypot(self.velocity[0], self.velocity[1]))

    def corners_bev(self) -> np.ndarray:
        """(4, 2) footprint corners, counter-clockwise starting front-left."""
        l, w = self.size[0] / 2.0, self.size[1] / 2.0
        local = np.array([[l, w], [l, -w], [-l, -w], [-l, w]])
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + self.center[:2]

    def corners(self) -> np.ndarray:
        """(8, 3) box corners: bottom face then top face."""
        bev = self.corners_bev()
        zb = self.center[2] - self.size[2] / 2.0
        zt = self.center[2] + self.size[2] / 2.0
        bottom = np.column_stack([bev, np.full(4, zb)])
        top = np.column_stack([bev, np.full(4, zt)])
        return np.vstack([bottom, top])

    def transformed(self, t: RigidTransform, new_frame: str | None = None) -> Box3D:
        """Re-express in another frame (rotation treated as yaw-dominant)."""
        dyaw = t.yaw
        c, s = math.cos(dyaw), math.sin(dyaw)
        rot2 = np.array([[c, -s], [s, c]])
        return Box3D(
            center=t.apply(self.center),
            size=self.size,
            yaw=self.yaw + dyaw,
            velocity=rot2 @ self.velocity,
            frame=new_frame or self.frame,
        )


@dataclass(frozen=True, eq=False)
class FrameContext:
    """One time step: index, timestamp, ego pose (global <- ego), camera rig."""

    frame_index: int
    timestamp: float
    ego_pose: RigidTransform
    cameras: tuple[CameraCalib, ...]

    def camera(self, camera_id: str) -> CameraCalib:
        for cam in self.cameras:
            if cam.camera_id == camera_id:
                return cam
        raise KeyError(camera_id)


__all__ = [
    "FRAME_SENSOR",
    "FRAME_EGO",
    "FRAME_GLOBAL",
    "normalize_yaw",
    "yaw_difference",
    "yaw_difference_mod_pi",
    "RigidTransform",
    "PointCloud",
    "transform_points",
    "CameraCalib",
    "project_point",
    "project_points",
    "Box3D",
    "FrameContext",
    "replace",
]
