"""Exact point-to-mesh distance with a bounding-volume hierarchy.

Magnitude is the minimum Euclidean distance over all triangles; the BVH only
prunes triangles whose box is already farther than the best hit, so results
equal the exhaustive scan.  Sign comes from the generalized winding number
(1 inside a closed outward-oriented mesh, 0 outside).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

LEAF_SIZE = 4


@dataclass(frozen=True)
class BVH:
    corners: np.ndarray   # (T, 3, 3) triangles in leaf order
    box_min: np.ndarray   # (N, 3)
    box_max: np.ndarray
    left: np.ndarray      # child index, -1 for leaves
    right: np.ndarray
    start: np.ndarray     # first triangle of a leaf
    count: np.ndarray

    @classmethod
    def build(cls, corners) -> "BVH":
        corners = np.asarray(corners, dtype=np.float64)
        cent = corners.mean(axis=1)
        tmin = corners.min(axis=1)
        tmax = corners.max(axis=1)
        order = np.arange(len(corners))
        box_min, box_max, left, right, start, count = [], [], [], [], [], []

        def node(lo, hi):
            idx = len(box_min)
            ids = order[lo:hi]
            box_min.append(tmin[ids].min(axis=0))
            box_max.append(tmax[ids].max(axis=0))
            left.append(-1)
            right.append(-1)
            start.append(lo)
            count.append(hi - lo)
            if hi - lo > LEAF_SIZE:
                c = cent[ids]
                axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
                # stable sort keeps the build deterministic across platforms
                order[lo:hi] = ids[np.argsort(c[:, axis], kind="stable")]
                mid = (lo + hi) // 2
                left[idx] = node(lo, mid)
                right[idx] = node(mid, hi)
                count[idx] = 0
            return idx

        node(0, len(corners))
        return cls(
            corners=np.ascontiguousarray(corners[order]),
            box_min=np.array(box_min),
            box_max=np.array(box_max),
            left=np.array(left, dtype=np.int64),
            right=np.array(right, dtype=np.int64),
            start=np.array(start, dtype=np.int64),
            count=np.array(count, dtype=np.int64),
        )


@njit(cache=True, inline="always")
def _dot(ax, ay, az, bx, by, bz):
    return ax * bx + ay * by + az * bz


@njit(cache=True)
def _closest_on_triangle(px, py, pz, tri):
    # Ericson, Real-Time Collision Detection 5.1.5 (Voronoi region walk);
    # scalar form keeps the kernel allocation-free
    ax, ay, az = tri[0, 0], tri[0, 1], tri[0, 2]
    bx, by, bz = tri[1, 0], tri[1, 1], tri[1, 2]
    cx, cy, cz = tri[2, 0], tri[2, 1], tri[2, 2]
    abx, aby, abz = bx - ax, by - ay, bz - az
    acx, acy, acz = cx - ax, cy - ay, cz - az
    d1 = _dot(abx, aby, abz, px - ax, py - ay, pz - az)
    d2 = _dot(acx, acy, acz, px - ax, py - ay, pz - az)
    if d1 <= 0.0 and d2 <= 0.0:
        return ax, ay, az
    d3 = _dot(abx, aby, abz, px - bx, py - by, pz - bz)
    d4 = _dot(acx, acy, acz, px - bx, py - by, pz - bz)
    if d3 >= 0.0 and d4 <= d3:
        return bx, by, bz
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return ax + v * abx, ay + v * aby, az + v * abz
    d5 = _dot(abx, aby, abz, px - cx, py - cy, pz - cz)
    d6 = _dot(acx, acy, acz, px - cx, py - cy, pz - cz)
    if d6 >= 0.0 and d5 <= d6:
        return cx, cy, cz
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return ax + w * acx, ay + w * acy, az + w * acz
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return bx + w * (cx - bx), by + w * (cy - by), bz + w * (cz - bz)
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return ax + abx * v + acx * w, ay + aby * v + acy * w, az + abz * v + acz * w


@njit(cache=True)
def _box_dist2(px, py, pz, lo, hi):
    s = 0.0
    for k, q in enumerate((px, py, pz)):
        if q < lo[k]:
            s += (lo[k] - q) ** 2
        elif q > hi[k]:
            s += (q - hi[k]) ** 2
    return s


@njit(cache=True)
def _nearest(points, corners, box_min, box_max, left, right, start, count):
    n = points.shape[0]
    dist = np.empty(n)
    closest = np.empty((n, 3))
    stack = np.empty(128, dtype=np.int64)
    for i in range(n):
        px, py, pz = points[i, 0], points[i, 1], points[i, 2]
        best = np.inf
        qx, qy, qz = px, py, pz
        top = 1
        stack[0] = 0
        while top > 0:
            top -= 1
            nd = stack[top]
            if _box_dist2(px, py, pz, box_min[nd], box_max[nd]) > best:
                continue
            if left[nd] < 0:
                for t in range(start[nd], start[nd] + count[nd]):
                    x, y, z = _closest_on_triangle(px, py, pz, corners[t])
                    d = (px - x) ** 2 + (py - y) ** 2 + (pz - z) ** 2
                    if d < best:
                        best = d
                        qx, qy, qz = x, y, z
            else:
                # push the nearer child last so it is popped first
                dl = _box_dist2(px, py, pz, box_min[left[nd]], box_max[left[nd]])
                dr = _box_dist2(px, py, pz, box_min[right[nd]], box_max[right[nd]])
                if dl < dr:
                    stack[top] = right[nd]
                    stack[top + 1] = left[nd]
                else:
                    stack[top] = left[nd]
                    stack[top + 1] = right[nd]
                top += 2
        dist[i] = np.sqrt(best)
        closest[i, 0] = qx
        closest[i, 1] = qy
        closest[i, 2] = qz
    return dist, closest


@njit(cache=True)
def _winding(points, corners):
    # Van Oosterom-Strackee solid angle per triangle, summed over the mesh
    n = points.shape[0]
    out = np.empty(n)
    for i in range(n):
        px, py, pz = points[i, 0], points[i, 1], points[i, 2]
        total = 0.0
        for t in range(corners.shape[0]):
            ax, ay, az = corners[t, 0, 0] - px, corners[t, 0, 1] - py, corners[t, 0, 2] - pz
            bx, by, bz = corners[t, 1, 0] - px, corners[t, 1, 1] - py, corners[t, 1, 2] - pz
            cx, cy, cz = corners[t, 2, 0] - px, corners[t, 2, 1] - py, corners[t, 2, 2] - pz
            la = np.sqrt(ax * ax + ay * ay + az * az)
            lb = np.sqrt(bx * bx + by * by + bz * bz)
            lc = np.sqrt(cx * cx + cy * cy + cz * cz)
            det = ax * (by * cz - bz * cy) - ay * (bx * cz - bz * cx) + az * (bx * cy - by * cx)
            den = la * lb * lc + _dot(ax, ay, az, bx, by, bz) * lc + _dot(bx, by, bz, cx, cy, cz) * la + _dot(cx, cy, cz, ax, ay, az) * lb
            total += 2.0 * np.arctan2(det, den)
        out[i] = total / (4.0 * np.pi)
    return out


def _as_points(points):
    p = np.ascontiguousarray(np.asarray(points, dtype=np.float64))
    return p.reshape(-1, 3)


def unsigned_distance(points, mesh):
    """Distance and closest surface point for each query point."""
    b = mesh.bvh
    return _nearest(_as_points(points), b.corners, b.box_min, b.box_max, b.left, b.right, b.start, b.count)


def winding_number(points, mesh):
    return _winding(_as_points(points), np.ascontiguousarray(mesh.corners))


def signed_distance(points, mesh):
    """Signed distance, negative inside.  Scalar in, scalar out."""
    pts = _as_points(points)
    dist, _ = unsigned_distance(pts, mesh)
    lo, hi = mesh.bounds
    # points outside the bounding box are outside; skip their O(T) winding sum
    cand = np.flatnonzero(np.all((pts > lo) & (pts < hi), axis=1))
    inside = np.zeros(len(pts), dtype=bool)
    if cand.size:
        inside[cand] = _winding(np.ascontiguousarray(pts[cand]), np.ascontiguousarray(mesh.corners)) > 0.5
    sd = np.where(inside, -dist, dist)
    return float(sd[0]) if np.ndim(points) == 1 else sd


def closest_point(points, mesh):
    return unsigned_distance(points, mesh)[1]


def min_clearance(centers, radii, mesh) -> float:
    """Smallest signed gap between a set of spheres and the mesh surface."""
    centers = _as_points(centers)
    radii = np.broadcast_to(np.asarray(radii, dtype=float), (len(centers),))
    if len(centers) == 0:
        raise ValueError("body has no spheres")
    return float(np.min(signed_distance(centers, mesh) - radii))
