"""Mask-to-point association, density denoising, and oriented box fitting."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DegenerateGeometryError
from .geometry import Box3D, CameraCalib, PointCloud, normalize_yaw, project_points
from .masks import Detection2D

MIN_EXTENT = 0.05
BORDER_BAND = 0.15
_ANGLES = np.deg2rad(np.arange(90, dtype=np.float64))


@dataclass(frozen=True)
class ClassWidthPrior:
    """Average object width per class, used as the clustering radius."""

    widths: dict[str, float]

    def __post_init__(self) -> None:
        if any(w <= 0 for w in self.widths.values()):
            raise ValueError("class widths must be positive")

    def get(self, class_name: str, default: float) -> float:
        return self.widths.get(class_name, default)


@dataclass(frozen=True, eq=False)
class ObjectProposal:
    """A denoised point cluster with its fitted box and 2D appearance data."""

    point_indices: np.ndarray
    class_name: str
    confidence: float
    embedding: np.ndarray
    box: Box3D
    source_cameras: frozenset[str]
    border_flag: bool

    def __post_init__(self) -> None:
        idx = np.array(self.point_indices, dtype=np.int64).reshape(-1)
        if idx.size == 0:
            raise ValueError("proposal must reference at least one point")
        idx.setflags(write=False)
        emb = np.array(self.embedding, dtype=np.float64).reshape(-1)
        emb.setflags(write=False)
        object.__setattr__(self, "point_indices", idx)
        object.__setattr__(self, "embedding", emb)
        object.__setattr__(self, "source_cameras", frozenset(self.source_cameras))


@dataclass(frozen=True, eq=False)
class RawCluster:
    """Points (indices into the kept cloud) claimed by one detection's mask."""

    detection: Detection2D
    point_indices: np.ndarray


def associate(
    kept_points: PointCloud, cam: CameraCalib, dets: list[Detection2D]
) -> list[RawCluster]:
    """Assign ego-frame points to the detection whose mask contains their pixel.

    Detections must already be NMS'd for this camera (pairwise disjoint
    masks), so each point lands in at most one cluster. Detections that
    capture no points produce no cluster.
    """
    if not dets or len(kept_points) == 0:
        return []
    p_cam = cam.extrinsic.apply(kept_points.points)
    uv, in_front = project_points(p_cam, cam)
    cols = np.floor(uv[:, 0]).astype(np.int64)
    rows = np.floor(uv[:, 1]).astype(np.int64)
    in_image = in_front & (cols >= 0) & (cols < cam.width) & (rows >= 0) & (rows < cam.height)
    safe_cols = np.clip(cols, 0, cam.width - 1)
    safe_rows = np.clip(rows, 0, cam.height - 1)

    clusters = []
    for det in dets:
        hit = in_image & det.mask.dense[safe_rows, safe_cols]
        indices = np.flatnonzero(hit).astype(np.int64)
        if indices.size:
            clusters.append(RawCluster(det, indices))
    return clusters


def dbscan(points_xy: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """Density clustering labels (-1 is noise); see kernels for the exact rule."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    return kernels.dbscan_labels(np.asarray(points_xy, dtype=np.float64), float(eps), int(min_pts))


def denoise(
    points: np.ndarray,
    class_name: str,
    priors: ClassWidthPrior,
    min_pts: int = 3,
    default_eps: float = 1.0,
) -> np.ndarray:
    """Indices of the dominant spatial component of a cluster (XY plane).

    eps is the class-average width. The component with the most points wins;
    ties go to the component nearest the ego origin. When everything is
    labeled noise the full cluster is returned unchanged.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] not in (2, 3):
        raise ValueError(f"expected (N, 2) or (N, 3) points, got shape {pts.shape}")
    if pts.shape[0] == 0:
        raise ValueError("cannot denoise an empty cluster")
    xy = pts[:, :2]
    labels = dbscan(xy, priors.get(class_name, default_eps), min_pts)
    valid = labels >= 0
    if not valid.any():
        return np.arange(pts.shape[0], dtype=np.int64)

    best_label = -1
    best_key = None
    for lbl in np.unique(labels[valid]):
        member = labels == lbl
        count = int(member.sum())
        mean_range = float(np.hypot(xy[member, 0], xy[member, 1]).mean())
        key = (-count, mean_range, int(lbl))
        if best_key is None or key < best_key:
            best_key = key
            best_label = int(lbl)
    return np.flatnonzero(labels == best_label).astype(np.int64)


@dataclass(frozen=True, eq=False)
class RectangleFit:
    yaw: float
    center_xy: np.ndarray
    length: float
    width: float


def lshape_fit(points_xy: np.ndarray, angle_step_deg: float = 1.0) -> RectangleFit:
    """Oriented rectangle via a heading scan with the closeness criterion.

    Headings are scanned over [0, 90) degrees; the winning heading maximizes
    the sum of inverse point-to-nearest-edge distances (floored at 1 mm).
    Extents are floored at MIN_EXTENT, length >= width, and the returned yaw
    points along the length axis, wrapped to (-pi, pi].
    """
    xy = np.asarray(points_xy, dtype=np.float64).reshape(-1, 2)
    if xy.shape[0] < 2:
        raise DegenerateGeometryError(f"rectangle fit needs >= 2 points, got {xy.shape[0]}")
    if max(np.ptp(xy[:, 0]), np.ptp(xy[:, 1])) < 1e-9:
        raise DegenerateGeometryError("all points coincident")

    if angle_step_deg == 1.0:
        angles = _ANGLES
    else:
        angles = np.deg2rad(np.arange(0.0, 90.0, angle_step_deg))
    scores = kernels.lshape_scores(xy, angles)
    theta = float(angles[int(np.argmax(scores))])

    c, s = math.cos(theta), math.sin(theta)
    c1 = xy[:, 0] * c + xy[:, 1] * s
    c2 = -xy[:, 0] * s + xy[:, 1] * c
    lo1, hi1 = float(c1.min()), float(c1.max())
    lo2, hi2 = float(c2.min()), float(c2.max())
    ext1 = max(hi1 - lo1, MIN_EXTENT)
    ext2 = max(hi2 - lo2, MIN_EXTENT)
    mid1 = 0.5 * (lo1 + hi1)
    mid2 = 0.5 * (lo2 + hi2)
    center = np.array([mid1 * c - mid2 * s, mid1 * s + mid2 * c])

    if ext1 >= ext2:
        return RectangleFit(normalize_yaw(theta), center, ext1, ext2)
    return RectangleFit(normalize_yaw(theta + 0.5 * math.pi), center, ext2, ext1)


def fit_box(points: np.ndarray, frame: str = "ego") -> Box3D:
    """Box from an XY rectangle fit plus the vertical span of the points."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    z_lo = float(pts[:, 2].min())
    z_hi = float(pts[:, 2].max())
    height = max(z_hi - z_lo, MIN_EXTENT)
    try:
        rect = lshape_fit(pts[:, :2])
        center_xy, length, width, yaw = rect.center_xy, rect.length, rect.width, rect.yaw
    except DegenerateGeometryError:
        center_xy = pts[:, :2].mean(axis=0)
        length = width = MIN_EXTENT
        yaw = 0.0
    return Box3D(
        center=np.array([center_xy[0], center_xy[1], 0.5 * (z_lo + z_hi)]),
        size=np.array([length, width, height]),
        yaw=yaw,
        frame=frame,
    )


def build_proposal(
    points: np.ndarray,
    det: Detection2D,
    point_indices: np.ndarray | None = None,
) -> ObjectProposal:
    """Proposal from a retained ego-frame cluster and its source detection."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if pts.shape[0] == 0:
        raise ValueError("cannot build a proposal from an empty cluster")
    if point_indices is None:
        point_indices = np.arange(pts.shape[0], dtype=np.int64)

    image_width = det.mask.size[1]
    x0, _, x1, _ = det.bbox2d
    border = bool(x0 < BORDER_BAND * image_width or x1 > (1.0 - BORDER_BAND) * image_width)

    return ObjectProposal(
        point_indices=point_indices,
        class_name=det.class_name,
        confidence=det.confidence,
        embedding=det.embedding,
        box=fit_box(pts),
        source_cameras=frozenset([det.camera_id]),
        border_flag=border,
    )


__all__ = [
    "MIN_EXTENT",
    "BORDER_BAND",
    "ClassWidthPrior",
    "ObjectProposal",
    "RawCluster",
    "RectangleFit",
    "associate",
    "dbscan",
    "denoise",
    "lshape_fit",
    "fit_box",
    "build_proposal",
]
