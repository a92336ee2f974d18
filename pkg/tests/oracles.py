"""Independent reference implementations the tests compare against.

Each one is a direct transcription or a brute-force search and shares no
code with the package beyond plain data.
"""
from __future__ import annotations

import itertools
import math

import mpmath
import numpy as np
from scipy.sparse import lil_matrix
from scipy.sparse.csgraph import dijkstra

from mif.spatial import GraphNode, SceneGraph


def confidence(g_n, a_n, beta=5.0, gamma=2.0) -> float:
    mpmath.mp.dps = 40
    g_n, a_n = mpmath.mpf(g_n), mpmath.mpf(a_n)
    e = mpmath.exp(-beta * g_n)
    s = 1 / (1 + mpmath.exp(-gamma * a_n * (1 - g_n)))
    return float(min(max(e + (1 - e) * s, 0), 1))


def delta(omega, c_loc, c_glob, f_loc, f_glob, w_pos=1.0, w_sem=0.5) -> float:
    shift = math.sqrt(sum((a - b) ** 2 for a, b in zip(c_loc, c_glob)))
    cos = sum(a * b for a, b in zip(f_loc, f_glob))
    return omega * (w_pos * shift + w_sem * (1.0 - cos))


def _edge(a, label, b):
    return (frozenset((a, b)), label) if label == "next_to" else (a, label, b)


def total_discrepancy(local: SceneGraph, glob: SceneGraph, pairs, un_local, un_global,
                      w_pos=1.0, w_sem=0.5, w_rel=0.8, delta_unmatched=1.0) -> float:
    if not local.nodes:
        return 0.0
    s = 0.0
    for lid, gid in pairs:
        a, b = local.nodes[lid], glob.nodes[gid]
        s += delta(a.reliability, a.centroid, b.centroid, a.feature, b.feature, w_pos, w_sem)
    for lid in un_local:
        s += delta_unmatched * local.nodes[lid].reliability
    omega_view = sum(n.reliability for n in local.nodes.values()) / len(local.nodes)
    s += delta_unmatched * omega_view * len(un_global)
    l2g = dict(pairs)
    name = {lid: ("g", l2g[lid]) if lid in l2g else ("l", lid) for lid in local.nodes}
    e_loc = {_edge(name[a], lab, name[b]) for a, lab, b in local.edges}
    seen = set(l2g.values()) | set(un_global)
    e_glob = {_edge(("g", a), lab, ("g", b)) for a, lab, b in glob.edges if a in seen and b in seen}
    union = e_loc | e_glob
    rel = len(e_loc ^ e_glob) / len(union) if union else 0.0
    return s / len(local.nodes) + w_rel * rel


def utility(p, d, c, omegas, sigma_d=1.0, gamma=2.0) -> float:
    diff = [ci - pi for ci, pi in zip(c, p)]
    dist = math.sqrt(sum(x * x for x in diff))
    v = [x / dist for x in diff]
    align = max(0.0, sum(a * b for a, b in zip(d, v)))
    return math.exp(-dist * dist / (2 * sigma_d * sigma_d)) * align ** gamma * (sum(omegas) / len(omegas))


def kappa(delta_theta, lookahead) -> float:
    return 2.0 * math.sin(delta_theta) / lookahead


def best_assignment(local: SceneGraph, glob: SceneGraph, w_pos=1.0, w_sem=0.5, gate=1.0, sem_gate=0.5):
    """Exhaustive search: most admissible pairs first, then least cost.  Returns (count, cost)."""
    lids, gids = sorted(local.nodes), sorted(glob.nodes)
    ok, cost = {}, {}
    for i in lids:
        for j in gids:
            a, b = local.nodes[i], glob.nodes[j]
            dist = float(np.linalg.norm(a.centroid - b.centroid))
            cos = float(a.feature @ b.feature)
            ok[i, j] = dist <= gate and cos >= sem_gate
            cost[i, j] = w_pos * dist + w_sem * (1 - cos)
    best = [0, 0.0]

    # depth-first over partial injective assignments; inadmissible pairs are never extended
    def walk(k, used, count, total):
        if k == len(lids):
            if count > best[0] or (count == best[0] and total < best[1]):
                best[:] = [count, total]
            return
        walk(k + 1, used, count, total)
        for j in gids:
            if j not in used and ok[lids[k], j]:
                walk(k + 1, used | {j}, count + 1, total + cost[lids[k], j])

    walk(0, frozenset(), 0, 0.0)
    best = tuple(best)
    return best


# --- meshes -----------------------------------------------------------------------

RAY_DIR = np.array([0.5377, 0.3013, 0.7876]) / np.linalg.norm([0.5377, 0.3013, 0.7876])


def _seg_dist(p, a, b):
    ab = b - a
    t = np.clip(np.einsum("ij,ij->i", p - a, ab) / np.einsum("ij,ij->i", ab, ab), 0.0, 1.0)
    return np.linalg.norm(a + t[:, None] * ab - p, axis=1)


def triangle_distances(p, tris):
    """Distance from ``p`` to every triangle: plane distance when the foot is inside, else nearest edge."""
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    n = np.cross(b - a, c - a)
    n = n / np.linalg.norm(n, axis=1, keepdims=True)
    h = np.einsum("ij,ij->i", p - a, n)
    foot = p - h[:, None] * n
    inside = np.ones(len(tris), dtype=bool)
    for u, v in ((a, b), (b, c), (c, a)):
        inside &= np.einsum("ij,ij->i", np.cross(v - u, foot - u), n) >= 0
    pp = np.broadcast_to(p, a.shape)
    edge = np.minimum(np.minimum(_seg_dist(pp, a, b), _seg_dist(pp, b, c)), _seg_dist(pp, c, a))
    return np.where(inside, np.abs(h), edge)


def ray_crossings(p, tris, direction=RAY_DIR):
    """Moller-Trumbore hit count of the ray p + t*direction, t > 0."""
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    e1, e2 = b - a, c - a
    h = np.cross(direction, e2)
    det = np.einsum("ij,ij->i", e1, h)
    good = np.abs(det) > 1e-14
    inv = np.where(good, 1.0 / np.where(good, det, 1.0), 0.0)
    s = p - a
    u = inv * np.einsum("ij,ij->i", s, h)
    q = np.cross(s, e1)
    v = inv * (q @ direction)
    t = inv * np.einsum("ij,ij->i", e2, q)
    hit = good & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 0)
    return int(hit.sum())


def signed_distance(points, mesh):
    tris = mesh.vertices[mesh.triangles]
    out = np.empty(len(points))
    for k, p in enumerate(np.asarray(points, dtype=float)):
        d = float(triangle_distances(p, tris).min())
        out[k] = -d if ray_crossings(p, tris) % 2 else d
    return out


# --- grids ----------------------------------------------------------------------


def grid_shortest(blocked: np.ndarray, start, goal) -> float:
    """8-connected shortest path cost on free cells (diagonals cost sqrt 2).

    A diagonal step is allowed only when both orthogonal cells it passes are free.
    """
    nx, ny = blocked.shape
    idx = lambda i, j: i * ny + j  # noqa: E731
    g = lil_matrix((nx * ny, nx * ny))
    for i in range(nx):
        for j in range(ny):
            if blocked[i, j]:
                continue
            for di, dj in itertools.product((-1, 0, 1), repeat=2):
                if (di, dj) == (0, 0):
                    continue
                a, b = i + di, j + dj
                if not (0 <= a < nx and 0 <= b < ny) or blocked[a, b]:
                    continue
                if di and dj and (blocked[a, j] or blocked[i, b]):
                    continue
                g[idx(i, j), idx(a, b)] = math.sqrt(2.0) if di and dj else 1.0
    d = dijkstra(g.tocsr(), indices=idx(*start))
    return float(d[idx(*goal)])


# --- graph construction helpers -------------------------------------------------


def make_node(nid, xyz, feature, omega=1.0, caption="mug", room="kitchen", size=(0.1, 0.1, 0.1)):
    f = np.asarray(feature, dtype=float)
    return GraphNode(nid, caption, room, np.asarray(xyz, dtype=float), float(omega), f / np.linalg.norm(f),
                     np.asarray(size, dtype=float))


CATEGORIES = ("mug", "book", "bowl", "plant", "laptop", "bottle")


def prototype(cat: str) -> np.ndarray:
    r = np.random.default_rng(CATEGORIES.index(cat) + 100)
    v = r.normal(size=32)
    return v / np.linalg.norm(v)


def random_graph_pair(rng):
    """A stored graph and a live view of a perturbed copy (moves, removals, additions)."""
    from mif.spatial import derive_edges

    def feat(cat):
        return prototype(cat) + 0.1 * rng.normal(size=32)

    glob = {}
    for gid in range(int(rng.integers(1, 7))):
        cat = CATEGORIES[int(rng.integers(len(CATEGORIES)))]
        xyz = (rng.uniform(0, 4), rng.uniform(0, 4), float(rng.choice([0.4, 0.8])))
        glob[gid] = make_node(gid, xyz, feat(cat), rng.uniform(0.5, 1.0), cat)
    loc = []
    for n in glob.values():
        u = rng.random()
        if u < 0.15:
            continue
        c = n.centroid.copy()
        if u < 0.4:
            a = rng.uniform(0, 2 * np.pi)
            c[:2] += rng.uniform(0.2, 2.5) * np.array([np.cos(a), np.sin(a)])
        else:
            c += 0.02 * rng.normal(size=3)
        loc.append((c, feat(n.caption), n.caption))
    for _ in range(int(rng.integers(0, 3))):
        cat = CATEGORIES[int(rng.integers(len(CATEGORIES)))]
        loc.append((np.array([rng.uniform(0, 4), rng.uniform(0, 4), 0.4]), feat(cat), cat))
    order = rng.permutation(len(loc))
    local = {}
    for lid, k in enumerate(order):
        c, f, cat = loc[k]
        local[lid] = make_node(lid, c, f, rng.uniform(0.2, 1.0), cat)
    return SceneGraph(local, derive_edges(local)), SceneGraph(glob, derive_edges(glob))
