# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled implementation of the hot kernels; see kernels.pure for semantics."""

from libc.math cimport cos, sin

import numpy as np

BACKEND = "native"


def dbscan_labels(xy, double eps, long long min_pts):
    pts = np.ascontiguousarray(xy, dtype=np.float64).reshape(-1, 2)
    cdef double[:, ::1] p = pts
    cdef Py_ssize_t n = p.shape[0]
    labels_arr = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return labels_arr
    cdef long long[::1] labels = labels_arr

    cdef double e2 = eps * eps
    core_arr = np.zeros(n, dtype=np.uint8)
    comp_arr = np.full(n, -1, dtype=np.int64)
    stack_arr = np.empty(n, dtype=np.int64)
    cdef unsigned char[::1] core = core_arr
    cdef long long[::1] comp = comp_arr
    cdef long long[::1] stack = stack_arr

    cdef Py_ssize_t i, j, k, sp
    cdef long long cnt, next_id = 0, best_k
    cdef double dx, dy, d2, best_d2

    for i in range(n):
        cnt = 0
        for j in range(n):
            dx = p[i, 0] - p[j, 0]
            dy = p[i, 1] - p[j, 1]
            if dx * dx + dy * dy <= e2:
                cnt += 1
        if cnt >= min_pts:
            core[i] = 1

    for i in range(n):
        if not core[i] or comp[i] >= 0:
            continue
        comp[i] = next_id
        sp = 0
        stack[sp] = i
        sp += 1
        while sp > 0:
            sp -= 1
            j = stack[sp]
            for k in range(n):
                if core[k] and comp[k] < 0:
                    dx = p[j, 0] - p[k, 0]
                    dy = p[j, 1] - p[k, 1]
                    if dx * dx + dy * dy <= e2:
                        comp[k] = next_id
                        stack[sp] = k
                        sp += 1
        next_id += 1

    for i in range(n):
        if core[i]:
            labels[i] = comp[i]
            continue
        best_k = -1
        best_d2 = 0.0
        for k in range(n):
            if not core[k]:
                continue
            dx = p[i, 0] - p[k, 0]
            dy = p[i, 1] - p[k, 1]
            d2 = dx * dx + dy * dy
            if d2 > e2:
                continue
            if best_k < 0 or d2 < best_d2:
                best_k = k
                best_d2 = d2
            elif d2 == best_d2:
                if p[k, 0] < p[best_k, 0] or (
                    p[k, 0] == p[best_k, 0] and p[k, 1] < p[best_k, 1]
                ):
                    best_k = k
        if best_k >= 0:
            labels[i] = comp[best_k]
    return labels_arr


def lshape_scores(xy, angles, double d0=1e-3):
    pts = np.ascontiguousarray(xy, dtype=np.float64).reshape(-1, 2)
    angs = np.ascontiguousarray(angles, dtype=np.float64).reshape(-1)
    cdef double[:, ::1] p = pts
    cdef double[::1] a = angs
    cdef Py_ssize_t n = p.shape[0], m = a.shape[0]
    scores_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] scores = scores_arr

    cdef Py_ssize_t i, k
    cdef double c, s, c1, c2, min1, max1, min2, max2, d1, d2, d, acc

    for k in range(m):
        c = cos(a[k])
        s = sin(a[k])
        min1 = 0.0
        max1 = 0.0
        min2 = 0.0
        max2 = 0.0
        for i in range(n):
            c1 = p[i, 0] * c + p[i, 1] * s
            c2 = -p[i, 0] * s + p[i, 1] * c
            if i == 0:
                min1 = c1
                max1 = c1
                min2 = c2
                max2 = c2
            else:
                if c1 < min1:
                    min1 = c1
                if c1 > max1:
                    max1 = c1
                if c2 < min2:
                    min2 = c2
                if c2 > max2:
                    max2 = c2
        acc = 0.0
        for i in range(n):
            c1 = p[i, 0] * c + p[i, 1] * s
            c2 = -p[i, 0] * s + p[i, 1] * c
            d1 = c1 - min1
            if max1 - c1 < d1:
                d1 = max1 - c1
            d2 = c2 - min2
            if max2 - c2 < d2:
                d2 = max2 - c2
            d = d1 if d1 < d2 else d2
            if d < d0:
                d = d0
            acc += 1.0 / d
        scores[k] = acc
    return scores_arr


def nearest_neighbors(src, dst):
    s_arr = np.ascontiguousarray(src, dtype=np.float64).reshape(-1, 3)
    d_arr = np.ascontiguousarray(dst, dtype=np.float64).reshape(-1, 3)
    cdef double[:, ::1] s = s_arr
    cdef double[:, ::1] d = d_arr
    cdef Py_ssize_t n = s.shape[0], m = d.shape[0]
    if m == 0:
        raise ValueError("destination cloud is empty")
    out_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] out = out_arr

    cdef Py_ssize_t i, j
    cdef long long best_j
    cdef double dx, dy, dz, d2, best
    for i in range(n):
        best_j = 0
        best = 0.0
        for j in range(m):
            dx = s[i, 0] - d[j, 0]
            dy = s[i, 1] - d[j, 1]
            dz = s[i, 2] - d[j, 2]
            d2 = dx * dx + dy * dy + dz * dz
            if j == 0 or d2 < best:
                best = d2
                best_j = j
        out[i] = best_j
    return out_arr
