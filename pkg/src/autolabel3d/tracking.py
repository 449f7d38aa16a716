"""Cross-camera proposal merging, appearance tracking, and ICP velocity estimation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .clustering import ClassWidthPrior, ObjectProposal, fit_box
from .geometry import CameraCalib, PointCloud


@dataclass(frozen=True)
class TrackingConfig:
    max_speed: float = 15.0
    similarity_floor: float = 0.3
    icp_max_iters: int = 50
    icp_tol: float = 1e-4
    moving_threshold: float = 0.5

    def __post_init__(self) -> None:
        if min(self.max_speed, self.similarity_floor, self.icp_tol, self.moving_threshold) <= 0:
            raise ValueError("tracking parameters must be positive")
        if self.icp_max_iters < 1:
            raise ValueError("icp_max_iters must be >= 1")


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Dot product of two unit-normalized vectors."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ValueError(f"embedding dimensions differ: {a.shape[0]} vs {b.shape[0]}")
    return float(a @ b)


def camera_ring_adjacency(cameras: tuple[CameraCalib, ...]) -> frozenset[frozenset[str]]:
    """Adjacent camera pairs on the rig, ordered by optical-axis azimuth."""
    if len(cameras) < 2:
        return frozenset()
    axes = []
    for cam in cameras:
        forward = cam.extrinsic.inverse().rotation_matrix @ np.array([0.0, 0.0, 1.0])
        axes.append((math.atan2(forward[1], forward[0]), cam.camera_id))
    axes.sort()
    ids = [cid for _, cid in axes]
    if len(ids) == 2:
        return frozenset([frozenset(ids)])
    return frozenset(frozenset((ids[i], ids[(i + 1) % len(ids)])) for i in range(len(ids)))


class _UnionFind:
    def __init__(self, n: int) -> None:
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i: int, j: int) -> None:
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)


def _proposal_sort_key(p: ObjectProposal) -> tuple:
    return (int(p.point_indices.min()), p.class_name, sorted(p.source_cameras))


def merge_multicamera(
    proposals: list[ObjectProposal],
    points: np.ndarray,
    width_priors: ClassWidthPrior,
    adjacency: frozenset[frozenset[str]],
    default_width: float = 1.0,
) -> list[ObjectProposal]:
    """Merge same-class proposals from one frame that overlap across cameras.

    Two proposals join the same group when their classes match and they either
    share points of the kept cloud, or both touch a lateral image border on
    adjacent cameras with centers within one class width. Groups are merged by
    unioning points, averaging embeddings (renormalized) and confidences, and
    refitting the box; the result is independent of the input order.
    """
    if not proposals:
        return []
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    uf = _UnionFind(len(proposals))
    for i in range(len(proposals)):
        for j in range(i + 1, len(proposals)):
            a, b = proposals[i], proposals[j]
            if a.class_name != b.class_name:
                continue
            shares = np.intersect1d(a.point_indices, b.point_indices, assume_unique=True).size > 0
            if not shares:
                if not (a.border_flag and b.border_flag):
                    continue
                cross = any(
                    ca != cb and frozenset((ca, cb)) in adjacency
                    for ca in a.source_cameras
                    for cb in b.source_cameras
                )
                if not cross:
                    continue
                gate = width_priors.get(a.class_name, default_width)
                dist = float(np.linalg.norm(a.box.center[:2] - b.box.center[:2]))
                if dist > gate:
                    continue
            uf.union(i, j)

    groups: dict[int, list[int]] = {}
    for i in range(len(proposals)):
        groups.setdefault(uf.find(i), []).append(i)

    merged: list[ObjectProposal] = []
    for members in groups.values():
        if len(members) == 1:
            merged.append(proposals[members[0]])
            continue
        ordered = sorted((proposals[i] for i in members), key=_proposal_sort_key)
        indices = np.unique(np.concatenate([p.point_indices for p in ordered]))
        embedding = np.mean([p.embedding for p in ordered], axis=0)
        norm = float(np.linalg.norm(embedding))
        embedding = embedding / norm if norm > 1e-12 else ordered[0].embedding
        merged.append(
            ObjectProposal(
                point_indices=indices,
                class_name=ordered[0].class_name,
                confidence=float(np.mean([p.confidence for p in ordered])),
                embedding=embedding,
                box=fit_box(pts[indices], frame=ordered[0].box.frame),
                source_cameras=frozenset().union(*(p.source_cameras for p in ordered)),
                border_flag=any(p.border_flag for p in ordered),
            )
        )
    merged.sort(key=_proposal_sort_key)
    return merged


def match_frames(
    prev: list[ObjectProposal],
    next_: list[ObjectProposal],
    dt: float,
    cfg: TrackingConfig,
) -> list[tuple[int, int]]:
    """Mutual-best embedding matches between consecutive frames.

    Candidate pairs need matching classes, planar center distance within
    max_speed * dt, and similarity at or above the floor. A pair survives
    only when each side is the other's best candidate (ties broken by smaller
    distance, then smaller index).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not prev or not next_:
        return []
    gate = cfg.max_speed * dt
    n, m = len(prev), len(next_)
    sim = np.full((n, m), -np.inf)
    dist = np.full((n, m), np.inf)
    for i, a in enumerate(prev):
        for j, b in enumerate(next_):
            if a.class_name != b.class_name:
                continue
            d = float(np.linalg.norm(a.box.center[:2] - b.box.center[:2]))
            if d > gate:
                continue
            s = cosine_similarity(a.embedding, b.embedding)
            if s < cfg.similarity_floor:
                continue
            sim[i, j] = s
            dist[i, j] = d

    def best_of(values: np.ndarray, dists: np.ndarray) -> int:
        candidates = np.flatnonzero(np.isfinite(dists))
        if candidates.size == 0:
            return -1
        keys = sorted(((-values[k], dists[k], int(k)) for k in candidates))
        return keys[0][2]

    best_next = [best_of(sim[i], dist[i]) for i in range(n)]
    best_prev = [best_of(sim[:, j], dist[:, j]) for j in range(m)]
    return [(i, j) for i, j in enumerate(best_next) if j >= 0 and best_prev[j] == i]


def icp_translation(src, dst, cfg: TrackingConfig | None = None) -> np.ndarray:
    """Translation-only ICP from src onto dst, seeded with the centroid offset.

    The mean squared nearest-neighbor distance is non-increasing across
    iterations (asserted); iteration stops when the update norm drops below
    the tolerance.
    """
    cfg = cfg or TrackingConfig()
    s = (src.points if isinstance(src, PointCloud) else np.asarray(src, dtype=np.float64)).reshape(-1, 3)
    d = (dst.points if isinstance(dst, PointCloud) else np.asarray(dst, dtype=np.float64)).reshape(-1, 3)
    if s.shape[0] == 0 or d.shape[0] == 0:
        raise ValueError("ICP requires non-empty clouds")

    t = d.mean(axis=0) - s.mean(axis=0)
    prev_err = np.inf
    for _ in range(cfg.icp_max_iters):
        moved = s + t
        nn = kernels.nearest_neighbors(moved, d)
        diffs = d[nn] - moved
        err = float((diffs * diffs).sum(axis=1).mean())
        assert err <= prev_err + 1e-9, "ICP residual increased"
        prev_err = err
        delta = diffs.mean(axis=0)
        t = t + delta
        if float(np.linalg.norm(delta)) < cfg.icp_tol:
            break
    return t


@dataclass(eq=False)
class Track:
    """One object identity: per-frame proposals, velocities, and link scores."""

    track_id: int
    frames: list[int] = field(default_factory=list)
    proposal_indices: list[int] = field(default_factory=list)
    velocities: list[np.ndarray] = field(default_factory=list)
    link_similarities: list[float] = field(default_factory=list)


def build_tracks(
    proposals_per_frame: list[list[ObjectProposal]],
    points_per_frame: list[list[np.ndarray]],
    timestamps: list[float],
    cfg: TrackingConfig,
) -> list[Track]:
    """Chain mutual-best matches into tracks and estimate per-link velocities.

    points_per_frame holds each proposal's cluster points in a frame-stable
    (global) coordinate system. A proposal's velocity is that of its incoming
    link; track heads reuse their outgoing link, singletons get (0, 0).
    """
    n_frames = len(proposals_per_frame)
    links: dict[tuple[int, int], tuple[int, int]] = {}
    velocities: dict[tuple[int, int], np.ndarray] = {}
    similarities: dict[tuple[tuple[int, int], tuple[int, int]], float] = {}

    for f in range(n_frames - 1):
        dt = timestamps[f + 1] - timestamps[f]
        for i, j in match_frames(proposals_per_frame[f], proposals_per_frame[f + 1], dt, cfg):
            shift = icp_translation(points_per_frame[f][i], points_per_frame[f + 1][j], cfg)
            v = shift[:2] / dt
            links[(f, i)] = (f + 1, j)
            velocities[(f + 1, j)] = v  # incoming-link velocity
            similarities[((f, i), (f + 1, j))] = cosine_similarity(
                proposals_per_frame[f][i].embedding, proposals_per_frame[f + 1][j].embedding
            )

    has_incoming = set(links.values())
    tracks: list[Track] = []
    for f in range(n_frames):
        for i in range(len(proposals_per_frame[f])):
            node = (f, i)
            if node in has_incoming:
                continue
            track = Track(track_id=len(tracks))
            while True:
                track.frames.append(node[0])
                track.proposal_indices.append(node[1])
                nxt = links.get(node)
                if node in velocities:
                    v = velocities[node]
                elif nxt is not None:
                    v = velocities[nxt]  # head reuses its outgoing link
                else:
                    v = np.zeros(2)
                track.velocities.append(v)
                if nxt is None:
                    break
                track.link_similarities.append(similarities[(node, nxt)])
                node = nxt
            tracks.append(track)
    return tracks


__all__ = [
    "TrackingConfig",
    "Track",
    "cosine_similarity",
    "camera_ring_adjacency",
    "merge_multicamera",
    "match_frames",
    "icp_translation",
    "build_tracks",
]
