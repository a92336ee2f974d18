"""Watertight triangle meshes, primitive builders and file I/O."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from ..errors import TopologyError

MIN_AREA = 1e-12


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Closed, consistently oriented triangle mesh.

    Construction validates the mesh: every undirected edge is shared by
    exactly two triangles, every directed edge occurs once (consistent
    winding), no triangle is degenerate and the enclosed volume is positive
    (outward normals).  Meshes are immutable; acceleration structures are
    cached on first use.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    validate: bool = True

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3 or t.ndim != 2 or t.shape[1] != 3:
            raise TopologyError("vertices must be (N, 3) and triangles (M, 3)")
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        if self.validate:
            check_watertight(v, t)

    @property
    def corners(self) -> np.ndarray:
        return self.vertices[self.triangles]

    @cached_property
    def areas(self) -> np.ndarray:
        a, b, c = np.moveaxis(self.corners, 1, 0)
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    @cached_property
    def volume(self) -> float:
        a, b, c = np.moveaxis(self.corners, 1, 0)
        return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)

    @property
    def bounds(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @cached_property
    def bvh(self):
        from .distance import BVH

        return BVH.build(self.corners)

    def transformed(self, rotation=None, translation=None, scale: float = 1.0) -> "TriangleMesh":
        v = self.vertices * scale
        if rotation is not None:
            v = v @ np.asarray(rotation, dtype=float).T
        if translation is not None:
            v = v + np.asarray(translation, dtype=float)
        return TriangleMesh(v, self.triangles, validate=False)

    def sample_surface(self, n: int, rng) -> np.ndarray:
        """Area-weighted uniform samples on the surface."""
        p = self.areas / self.areas.sum()
        idx = rng.choice(len(p), size=n, p=p)
        r1 = np.sqrt(rng.random(n))
        r2 = rng.random(n)
        a, b, c = np.moveaxis(self.corners[idx], 1, 0)
        return (1 - r1)[:, None] * a + (r1 * (1 - r2))[:, None] * b + (r1 * r2)[:, None] * c


def check_watertight(vertices, triangles):
    if len(triangles) == 0:
        raise TopologyError("mesh has no triangles")
    if triangles.min() < 0 or triangles.max() >= len(vertices):
        raise TopologyError("triangle index out of range")
    corners = vertices[triangles]
    a, b, c = np.moveaxis(corners, 1, 0)
    area = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    bad = np.flatnonzero(area <= MIN_AREA)
    if bad.size:
        raise TopologyError(f"degenerate triangle {int(bad[0])} (area {area[bad[0]]:.3g})")
    directed = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    d_keys, d_counts = np.unique(directed, axis=0, return_counts=True)
    if (d_counts > 1).any():
        e = d_keys[d_counts > 1][0]
        raise TopologyError(f"edge {tuple(int(x) for x in e)} used twice in the same direction (inconsistent winding or non-manifold)")
    undirected = np.sort(directed, axis=1)
    u_keys, u_counts = np.unique(undirected, axis=0, return_counts=True)
    if (u_counts != 2).any():
        e = u_keys[u_counts != 2][0]
        raise TopologyError(f"edge {tuple(int(x) for x in e)} is shared by {int(u_counts[u_counts != 2][0])} triangle(s), expected 2")
    vol = np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0
    if vol <= 0:
        raise TopologyError("mesh encloses non-positive volume (inward winding)")


def merge(meshes) -> TriangleMesh:
    """Disjoint union of closed meshes (still closed)."""
    verts, tris, off = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + off)
        off += len(m.vertices)
    return TriangleMesh(np.vstack(verts), np.vstack(tris), validate=False)


def subdivide(mesh: TriangleMesh, levels: int = 1) -> TriangleMesh:
    """Midpoint subdivision; each level splits every triangle into four."""
    v = mesh.vertices
    t = mesh.triangles
    for _ in range(levels):
        edges = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
        uniq, inv = np.unique(edges, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        mids = 0.5 * (v[uniq[:, 0]] + v[uniq[:, 1]])
        m = len(t)
        ab, bc, ca = inv[:m] + len(v), inv[m:2 * m] + len(v), inv[2 * m:] + len(v)
        a, b, c = t[:, 0], t[:, 1], t[:, 2]
        t = np.concatenate(
            [
                np.stack([a, ab, ca], 1),
                np.stack([ab, b, bc], 1),
                np.stack([ca, bc, c], 1),
                np.stack([ab, bc, ca], 1),
            ]
        )
        v = np.vstack([v, mids])
    return TriangleMesh(v, t)


# --- primitive builders --------------------------------------------------


def box(size, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    sx, sy, sz = (float(s) / 2 for s in size)
    v = np.array(
        [[-sx, -sy, -sz], [sx, -sy, -sz], [sx, sy, -sz], [-sx, sy, -sz],
         [-sx, -sy, sz], [sx, -sy, sz], [sx, sy, sz], [-sx, sy, sz]]
    ) + np.asarray(center, dtype=float)
    t = np.array(
        [[0, 2, 1], [0, 3, 2], [4, 5, 6], [4, 6, 7],
         [0, 1, 5], [0, 5, 4], [1, 2, 6], [1, 6, 5],
         [2, 3, 7], [2, 7, 6], [3, 0, 4], [3, 4, 7]]
    )
    return TriangleMesh(v, t)


def cylinder(radius: float, height: float, segments: int = 16, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    ang = 2 * np.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], 1)
    h = height / 2
    bottom = np.column_stack([ring, np.full(segments, -h)])
    top = np.column_stack([ring, np.full(segments, h)])
    v = np.vstack([bottom, top, [[0, 0, -h], [0, 0, h]]]) + np.asarray(center, dtype=float)
    cb, ct = 2 * segments, 2 * segments + 1
    tris = []
    for i in range(segments):
        j = (i + 1) % segments
        tris += [[i, j, segments + j], [i, segments + j, segments + i], [cb, j, i], [ct, segments + i, segments + j]]
    return TriangleMesh(v, np.array(tris))


def icosphere(radius: float = 1.0, levels: int = 2, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    p = (1 + 5 ** 0.5) / 2
    v = np.array(
        [[-1, p, 0], [1, p, 0], [-1, -p, 0], [1, -p, 0], [0, -1, p], [0, 1, p],
         [0, -1, -p], [0, 1, -p], [p, 0, -1], [p, 0, 1], [-p, 0, -1], [-p, 0, 1]], dtype=float
    )
    t = np.array(
        [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11], [1, 5, 9], [5, 11, 4],
         [11, 10, 2], [10, 7, 6], [7, 1, 8], [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8],
         [3, 8, 9], [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    )
    m = subdivide(TriangleMesh(v, t), levels)
    u = m.vertices / np.linalg.norm(m.vertices, axis=1, keepdims=True)
    return TriangleMesh(u * radius + np.asarray(center, dtype=float), m.triangles)


def torus(major: float = 1.0, minor: float = 0.3, nu: int = 32, nv: int = 16) -> TriangleMesh:
    u = 2 * np.pi * np.arange(nu) / nu
    w = 2 * np.pi * np.arange(nv) / nv
    uu, ww = np.meshgrid(u, w, indexing="ij")
    x = (major + minor * np.cos(ww)) * np.cos(uu)
    y = (major + minor * np.cos(ww)) * np.sin(uu)
    z = minor * np.sin(ww)
    v = np.stack([x, y, z], -1).reshape(-1, 3)
    tris = []
    for i in range(nu):
        for j in range(nv):
            a = i * nv + j
            b = ((i + 1) % nu) * nv + j
            c = ((i + 1) % nu) * nv + (j + 1) % nv
            d = i * nv + (j + 1) % nv
            tris += [[a, b, c], [a, c, d]]
    return TriangleMesh(v, np.array(tris))


# --- file I/O -------------------------------------------------------------


def load_obj(path) -> TriangleMesh:
    """ASCII OBJ reader for ``v`` and ``f`` records; polygons are fan-triangulated."""
    verts, tris = [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = []
            for tok in parts[1:]:
                i = int(tok.split("/")[0])
                idx.append(i - 1 if i > 0 else len(verts) + i)
            if len(idx) < 3:
                raise TopologyError(f"{path}:{lineno}: face with fewer than 3 vertices")
            tris += [[idx[0], idx[k], idx[k + 1]] for k in range(1, len(idx) - 1)]
    return TriangleMesh(np.array(verts, dtype=float).reshape(-1, 3), np.array(tris, dtype=np.int64).reshape(-1, 3))


def save_obj(mesh: TriangleMesh, path):
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")


def load_stl(path) -> TriangleMesh:
    """Binary STL reader; vertices are welded on exact coordinate equality."""
    data = Path(path).read_bytes()
    if len(data) < 84:
        raise TopologyError(f"{path}: truncated STL header")
    (count,) = struct.unpack_from("<I", data, 80)
    if len(data) < 84 + 50 * count:
        raise TopologyError(f"{path}: expected {count} facets")
    rec = np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])
    facets = np.frombuffer(data, dtype=rec, count=count, offset=84)
    pts = facets["v"].reshape(-1, 3).astype(np.float64)
    uniq, inv = np.unique(pts, axis=0, return_inverse=True)
    return TriangleMesh(uniq, inv.reshape(-1, 3))


def save_stl(mesh: TriangleMesh, path):
    rec = np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])
    out = np.zeros(len(mesh.triangles), dtype=rec)
    c = mesh.corners
    n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
    out["n"] = n / np.linalg.norm(n, axis=1, keepdims=True)
    out["v"] = c
    with open(path, "wb") as fh:
        fh.write(b"mif binary stl".ljust(80, b" "))
        fh.write(struct.pack("<I", len(out)))
        fh.write(out.tobytes())


def load_mesh(path) -> TriangleMesh:
    suffix = Path(path).suffix.lower()
    if suffix == ".obj":
        return load_obj(path)
    if suffix == ".stl":
        return load_stl(path)
    raise TopologyError(f"unsupported mesh format '{suffix}'")
