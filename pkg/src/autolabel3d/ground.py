"""Ground and sky removal via global plus per-sector RANSAC plane fits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError
from .geometry import PointCloud

_HYPOTHESIS_BLOCK = 32


@dataclass(frozen=True, eq=False)
class Plane:
    """Plane {p : normal . p + offset = 0} with the normal canonically upward."""

    normal: np.ndarray
    offset: float
    inlier_count: int

    def __post_init__(self) -> None:
        n = np.array(self.normal, dtype=np.float64).reshape(3)
        if abs(float(np.linalg.norm(n)) - 1.0) > 1e-9:
            raise ValueError("plane normal must be unit length")
        n.setflags(write=False)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset))

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return pts @ self.normal + self.offset


@dataclass(frozen=True)
class GroundConfig:
    ground_threshold: float = 0.30
    max_range: float = 40.0
    max_height: float = 4.0
    n_sectors: int = 8
    ransac_iters: int = 200
    ransac_inlier_tol: float = 0.10
    rng_seed: int = 0
    sector_min_points: int = 50
    # A sector fit is only trusted when it stays consistent with the global
    # plane; otherwise dense elevated surfaces (vehicle roofs, decks) can win
    # the sector consensus and swallow the objects standing on the ground.
    sector_max_tilt_deg: float = 10.0
    sector_max_offset: float = 1.0
    # True removes points more than max_height above the local plane (sky);
    # False removes points below it instead.
    remove_above_height: bool = True

    def __post_init__(self) -> None:
        if min(self.ground_threshold, self.max_range, self.max_height, self.ransac_inlier_tol) <= 0:
            raise ValueError("ground thresholds must be positive")
        if self.n_sectors < 1 or self.ransac_iters < 1 or self.sector_min_points < 3:
            raise ValueError("invalid ground filter configuration")
        if self.sector_max_tilt_deg <= 0 or self.sector_max_offset <= 0:
            raise ValueError("sector consistency gates must be positive")


def _canonical(normal: np.ndarray) -> np.ndarray:
    nx, ny, nz = normal
    if nz < 0 or (nz == 0 and (nx < 0 or (nx == 0 and ny < 0))):
        return -normal
    return normal


def _refit(points: np.ndarray) -> tuple[np.ndarray, float]:
    """Least-squares plane through `points` via the smallest covariance axis."""
    centroid = points.mean(axis=0)
    q = points - centroid
    cov = q.T @ q
    _, vecs = np.linalg.eigh(cov)
    normal = _canonical(vecs[:, 0])
    return normal, float(-(normal @ centroid))


def fit_plane_ransac(cloud, iters: int = 200, tol: float = 0.10, seed: int = 0) -> Plane:
    """Best-consensus plane over random 3-point hypotheses, refit to its inliers.

    Deterministic for a fixed seed. Raises DegenerateGeometryError when fewer
    than 3 points are given or all points are collinear.
    """
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    pts = pts.reshape(-1, 3)
    n = pts.shape[0]
    if n < 3:
        raise DegenerateGeometryError(f"plane fit needs >= 3 points, got {n}")
    svals = np.linalg.svd(pts - pts.mean(axis=0), compute_uv=False)
    if svals[1] <= 1e-12 * max(svals[0], 1.0):
        raise DegenerateGeometryError("all points are collinear")

    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=(iters, 3))
    p0 = pts[idx[:, 0]]
    normals = np.cross(pts[idx[:, 1]] - p0, pts[idx[:, 2]] - p0)
    norms = np.linalg.norm(normals, axis=1)
    valid = norms > 1e-12
    normals[valid] /= norms[valid, None]
    offsets = -np.einsum("ij,ij->i", normals, p0)

    best_count = -1
    best_hyp = -1
    for start in range(0, iters, _HYPOTHESIS_BLOCK):
        stop = min(start + _HYPOTHESIS_BLOCK, iters)
        dist = np.abs(pts @ normals[start:stop].T + offsets[start:stop])
        counts = (dist <= tol).sum(axis=0)
        counts[~valid[start:stop]] = -1
        k = int(counts.argmax())
        if counts[k] > best_count:
            best_count = int(counts[k])
            best_hyp = start + k

    if best_count < 3:
        # Random sampling found nothing usable; scan triplets deterministically.
        found = False
        for i in range(n - 2):
            v = np.cross(pts[i + 1] - pts[i], pts[i + 2] - pts[i])
            if np.linalg.norm(v) > 1e-12:
                normal = v / np.linalg.norm(v)
                offset = float(-(normal @ pts[i]))
                found = True
                break
        if not found:
            raise DegenerateGeometryError("no non-collinear point triple found")
    else:
        normal = normals[best_hyp]
        offset = float(offsets[best_hyp])

    inliers = np.abs(pts @ normal + offset) <= tol
    if inliers.sum() >= 3:
        normal, offset = _refit(pts[inliers])
        inliers = np.abs(pts @ normal + offset) <= tol
    return Plane(_canonical(normal), offset, int(inliers.sum()))


def sector_index(points: np.ndarray, n_sectors: int) -> np.ndarray:
    """Equal azimuth sector of each point about the ego origin."""
    az = np.arctan2(points[:, 1], points[:, 0])
    idx = np.floor((az + np.pi) / (2.0 * np.pi / n_sectors)).astype(np.int64)
    return np.clip(idx, 0, n_sectors - 1)


def remove_ground(aggregate, cfg: GroundConfig) -> np.ndarray:
    """Indices of points that survive the ground, range, and height gates.

    A global plane is fitted first; each azimuth sector with enough support
    gets its own RANSAC fit, otherwise the global plane is used. A point is
    removed when its signed height over its sector plane is below
    `ground_threshold`, its horizontal range exceeds `max_range`, or it sits
    beyond `max_height` on the configured side of the plane.
    """
    cloud = aggregate.cloud if hasattr(aggregate, "cloud") else aggregate
    pts = cloud.points
    n = pts.shape[0]
    if n == 0:
        return np.empty(0, dtype=np.int64)

    seeds = np.random.SeedSequence(cfg.rng_seed).generate_state(cfg.n_sectors + 1)
    global_plane = fit_plane_ransac(pts, cfg.ransac_iters, cfg.ransac_inlier_tol, int(seeds[0]))

    sectors = sector_index(pts, cfg.n_sectors)
    min_dot = np.cos(np.radians(cfg.sector_max_tilt_deg))
    planes = [global_plane] * cfg.n_sectors
    for s in range(cfg.n_sectors):
        sel = sectors == s
        if int(sel.sum()) < cfg.sector_min_points:
            continue
        try:
            candidate = fit_plane_ransac(
                pts[sel], cfg.ransac_iters, cfg.ransac_inlier_tol, int(seeds[s + 1])
            )
        except DegenerateGeometryError:
            continue
        centroid = pts[sel].mean(axis=0)[None, :]
        gap = abs(float(candidate.signed_distance(centroid)[0]) - float(global_plane.signed_distance(centroid)[0]))
        if float(candidate.normal @ global_plane.normal) >= min_dot and gap <= cfg.sector_max_offset:
            planes[s] = candidate

    signed = np.empty(n)
    for s in range(cfg.n_sectors):
        sel = sectors == s
        if sel.any():
            signed[sel] = planes[s].signed_distance(pts[sel])

    horizontal = np.hypot(pts[:, 0], pts[:, 1])
    keep = (signed >= cfg.ground_threshold) & (horizontal <= cfg.max_range)
    if cfg.remove_above_height:
        keep &= signed <= cfg.max_height
    else:
        keep &= signed >= cfg.max_height
    return np.flatnonzero(keep).astype(np.int64)


__all__ = ["Plane", "GroundConfig", "fit_plane_ransac", "remove_ground", "sector_index"]
