"""Numpy reference implementation of the hot kernels.

Semantics (shared with the compiled backend):

dbscan_labels
    Density clustering on 2D points. A point is core iff it has >= min_pts
    neighbors within eps (inclusive of itself, distance <= eps). Clusters are
    connected components of core points; component ids are assigned in order
    of each component's smallest point index. Border points (non-core with a
    core neighbor) attach to the cluster of their nearest core neighbor, ties
    broken by the core point's lexicographically smallest (x, y). Noise is -1.
    The rule is independent of input order up to label renaming.

lshape_scores
    Rectangle-heading scan: for each candidate angle, project points onto the
    rotated axes and score sum(1 / max(d, d0)) where d is each point's
    distance to the nearest of the four candidate rectangle edges.

nearest_neighbors
    Brute-force nearest neighbor indices from src into dst (first index wins
    ties, matching argmin).
"""

import numpy as np

BACKEND = "pure"

_BLOCK = 512


def dbscan_labels(xy: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    pts = np.ascontiguousarray(xy, dtype=np.float64).reshape(-1, 2)
    n = pts.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return labels

    dx = pts[:, 0, None] - pts[None, :, 0]
    dy = pts[:, 1, None] - pts[None, :, 1]
    d2 = dx * dx + dy * dy
    adj = d2 <= eps * eps
    core = adj.sum(axis=1) >= min_pts

    comp = np.full(n, -1, dtype=np.int64)
    next_id = 0
    for i in np.flatnonzero(core):
        if comp[i] >= 0:
            continue
        member = np.zeros(n, dtype=bool)
        member[i] = True
        frontier = member.copy()
        while frontier.any():
            reach = adj[frontier].any(axis=0) & core & ~member
            member |= reach
            frontier = reach
        comp[member] = next_id
        next_id += 1
    labels[core] = comp[core]

    for j in np.flatnonzero(~core):
        nb = np.flatnonzero(adj[j] & core)
        if nb.size == 0:
            continue
        dj = d2[j, nb]
        best = nb[dj == dj.min()]
        if best.size > 1:
            order = np.lexsort((pts[best, 1], pts[best, 0]))
            best = best[order]
        labels[j] = comp[best[0]]
    return labels


def lshape_scores(xy: np.ndarray, angles: np.ndarray, d0: float = 1e-3) -> np.ndarray:
    pts = np.ascontiguousarray(xy, dtype=np.float64).reshape(-1, 2)
    angs = np.asarray(angles, dtype=np.float64).reshape(-1)
    x, y = pts[:, 0], pts[:, 1]
    scores = np.empty(angs.shape[0])
    for k, theta in enumerate(angs):
        c, s = np.cos(theta), np.sin(theta)
        c1 = x * c + y * s
        c2 = -x * s + y * c
        d1 = np.minimum(c1 - c1.min(), c1.max() - c1)
        d2 = np.minimum(c2 - c2.min(), c2.max() - c2)
        d = np.minimum(d1, d2)
        scores[k] = (1.0 / np.maximum(d, d0)).sum()
    return scores


def nearest_neighbors(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    s = np.ascontiguousarray(src, dtype=np.float64).reshape(-1, 3)
    d = np.ascontiguousarray(dst, dtype=np.float64).reshape(-1, 3)
    if d.shape[0] == 0:
        raise ValueError("destination cloud is empty")
    out = np.empty(s.shape[0], dtype=np.int64)
    for start in range(0, s.shape[0], _BLOCK):
        blk = s[start : start + _BLOCK]
        diff = blk[:, None, :] - d[None, :, :]
        d2 = (diff * diff).sum(axis=-1)
        out[start : start + blk.shape[0]] = d2.argmin(axis=1)
    return out
