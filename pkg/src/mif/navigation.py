"""Grid planning and pure-pursuit tracking with speed scaled by heading error."""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import distance_transform_edt

from .errors import NoPath
from .ips import wrap_angle

SQRT2 = math.sqrt(2.0)
MOVES = ((1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
         (1, 1, SQRT2), (1, -1, SQRT2), (-1, 1, SQRT2), (-1, -1, SQRT2))


@dataclass
class OccupancyGrid:
    """Boolean occupancy; ``cells[ix, iy]`` covers the square at origin + (ix, iy)*resolution."""

    resolution: float
    origin: np.ndarray
    cells: np.ndarray

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        self.origin = np.asarray(self.origin, dtype=float)
        self.cells = np.asarray(self.cells, dtype=bool)
        if self.cells.ndim != 2:
            raise ValueError("cells must be a 2D array")

    @classmethod
    def empty(cls, xmin, ymin, xmax, ymax, resolution=0.1):
        nx = int(math.ceil((xmax - xmin) / resolution))
        ny = int(math.ceil((ymax - ymin) / resolution))
        return cls(resolution, np.array([xmin, ymin]), np.zeros((nx, ny), dtype=bool))

    @property
    def shape(self):
        return self.cells.shape

    def to_cell(self, p):
        ij = np.floor((np.asarray(p, dtype=float)[:2] - self.origin) / self.resolution).astype(int)
        return int(ij[0]), int(ij[1])

    def center(self, ij):
        return self.origin + (np.asarray(ij, dtype=float) + 0.5) * self.resolution

    def inside(self, ij) -> bool:
        return 0 <= ij[0] < self.shape[0] and 0 <= ij[1] < self.shape[1]

    def mark_box(self, lo, hi, value=True):
        """Mark every cell whose square overlaps the axis-aligned box [lo, hi]."""
        i0, j0 = self.to_cell(lo)
        i1, j1 = self.to_cell(hi)
        i0, j0 = max(i0, 0), max(j0, 0)
        i1, j1 = min(i1, self.shape[0] - 1), min(j1, self.shape[1] - 1)
        if i0 <= i1 and j0 <= j1:
            self.cells[i0:i1 + 1, j0:j1 + 1] = value

    def inflated(self, radius: float) -> np.ndarray:
        """Cells whose centre is within ``radius`` of an occupied cell's centre."""
        if not self.cells.any():
            return self.cells.copy()
        dist = distance_transform_edt(~self.cells, sampling=self.resolution)
        return dist <= radius


def _neighbours(blocked, i, j):
    nx, ny = blocked.shape
    for di, dj, c in MOVES:
        a, b = i + di, j + dj
        if not (0 <= a < nx and 0 <= b < ny) or blocked[a, b]:
            continue
        # no corner cutting past a blocked orthogonal cell
        if di and dj and (blocked[i + di, j] or blocked[i, j + dj]):
            continue
        yield a, b, c


def astar(blocked: np.ndarray, start, goal):
    """Shortest 8-connected cell path (unit edges, sqrt(2) diagonals).

    Returns ``(cells, cost)``.  The start cell is treated as free even when
    blocked so a robot standing close to an obstacle can leave.
    """
    start, goal = tuple(start), tuple(goal)
    if blocked[goal]:
        raise NoPath(f"goal cell {goal} is occupied")

    def h(c):
        dx, dy = abs(c[0] - goal[0]), abs(c[1] - goal[1])
        return (SQRT2 - 1.0) * min(dx, dy) + max(dx, dy)

    g = {start: 0.0}
    parent = {start: None}
    heap = [(h(start), 0.0, start)]
    closed = set()
    while heap:
        _, gc, cur = heapq.heappop(heap)
        if cur in closed:
            continue
        if cur == goal:
            cells = []
            while cur is not None:
                cells.append(cur)
                cur = parent[cur]
            return cells[::-1], gc
        closed.add(cur)
        for a, b, c in _neighbours(blocked, *cur):
            nxt = (a, b)
            ng = gc + c
            if ng < g.get(nxt, math.inf) - 1e-12:
                g[nxt] = ng
                parent[nxt] = cur
                heapq.heappush(heap, (ng + h(nxt), ng, nxt))
    raise NoPath(f"goal cell {goal} is not reachable from {start}")


def line_of_sight(grid: OccupancyGrid, blocked: np.ndarray, p, q) -> bool:
    """Segment p-q stays on free cells (sampled at a quarter cell)."""
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    n = max(2, int(math.ceil(np.linalg.norm(q - p) / (grid.resolution / 4))) + 1)
    for t in np.linspace(0.0, 1.0, n):
        ij = grid.to_cell(p + t * (q - p))
        if not grid.inside(ij) or blocked[ij]:
            return False
    return True


def shortcut(grid, blocked, points):
    """Greedy line-of-sight smoothing: jump to the farthest visible waypoint."""
    out = [points[0]]
    i = 0
    while i < len(points) - 1:
        j = len(points) - 1
        while j > i + 1 and not line_of_sight(grid, blocked, points[i], points[j]):
            j -= 1
        out.append(points[j])
        i = j
    return np.array(out)


def plan_path(grid: OccupancyGrid, start, goal, inflation: float) -> np.ndarray:
    """Polyline from ``start`` to ``goal`` around inflated obstacles."""
    start = np.asarray(start, dtype=float)[:2]
    goal = np.asarray(goal, dtype=float)[:2]
    s, g = grid.to_cell(start), grid.to_cell(goal)
    if not grid.inside(s) or not grid.inside(g):
        raise NoPath("start or goal outside the grid")
    blocked = grid.inflated(inflation)
    free_start = blocked.copy()
    free_start[s] = False
    cells, _ = astar(free_start, s, g)
    pts = [start] + [grid.center(c) for c in cells[1:-1]] + [goal]
    if len(pts) == 2 and np.allclose(pts[0], pts[1]):
        return np.array(pts)
    # the start cell may sit inside the inflation band; let shortcuts leave it
    return shortcut(grid, free_start, pts)


def path_length(path) -> float:
    path = np.asarray(path, dtype=float)
    return float(np.linalg.norm(np.diff(path, axis=0), axis=1).sum()) if len(path) > 1 else 0.0


# --- tracking --------------------------------------------------------------


@dataclass(frozen=True)
class TrackingParams:
    L0: float = 0.5
    L_min: float = 0.3
    L_max: float = 1.0
    k_v: float = 0.4
    v_max: float = 0.5
    k_theta: float = 3.5
    delta_arrival: float = 0.3
    turn_rate: float = 1.0      # rad/s, in-place rotation when the speed law gives 0
    v_creep: float = 0.05       # commanded speeds below this become a turn in place

    def __post_init__(self):
        if not 0 < self.L_min <= self.L0 <= self.L_max:
            raise ValueError("need 0 < L_min <= L0 <= L_max")
        if self.v_max <= 0:
            raise ValueError("v_max must be positive")
        if self.k_v < 0 or self.k_theta < 0 or self.delta_arrival <= 0:
            raise ValueError("k_v, k_theta must be non-negative and delta_arrival positive")


def adaptive_velocity(delta_theta: float, params: TrackingParams):
    """Speed falls linearly with heading error; lookahead grows with speed.

    Returns ``(v, L)``.
    """
    v = params.v_max * max(0.0, 1.0 - params.k_theta * abs(delta_theta))
    lookahead = min(max(params.L0 + params.k_v * v, params.L_min), params.L_max)
    return v, lookahead


def curvature(delta_theta: float, lookahead: float) -> float:
    return 2.0 * math.sin(delta_theta) / lookahead


@dataclass
class _Polyline:
    pts: np.ndarray
    cum: np.ndarray = field(init=False)

    def __post_init__(self):
        self.pts = np.asarray(self.pts, dtype=float)[:, :2]
        seg = np.linalg.norm(np.diff(self.pts, axis=0), axis=1) if len(self.pts) > 1 else np.zeros(0)
        self.cum = np.concatenate(([0.0], np.cumsum(seg)))

    def project(self, p):
        """Arc length and distance of the closest path point to ``p``."""
        if len(self.pts) == 1:
            return 0.0, float(np.linalg.norm(p - self.pts[0]))
        a, b = self.pts[:-1], self.pts[1:]
        ab = b - a
        ll = np.einsum("ij,ij->i", ab, ab)
        t = np.clip(np.einsum("ij,ij->i", p - a, ab) / np.where(ll > 0, ll, 1.0), 0.0, 1.0)
        q = a + t[:, None] * ab
        d = np.linalg.norm(q - p, axis=1)
        k = int(np.argmin(d))
        return float(self.cum[k] + t[k] * math.sqrt(ll[k])), float(d[k])

    def at(self, s):
        s = min(max(s, 0.0), self.cum[-1])
        k = int(np.searchsorted(self.cum, s, side="right") - 1)
        k = min(k, len(self.pts) - 2)
        if k < 0:
            return self.pts[0].copy()
        seg = self.cum[k + 1] - self.cum[k]
        t = 0.0 if seg == 0 else (s - self.cum[k]) / seg
        return self.pts[k] + t * (self.pts[k + 1] - self.pts[k])

    @property
    def length(self):
        return float(self.cum[-1])


@dataclass(frozen=True)
class PursuitCommand:
    v: float
    omega: float
    kappa: float
    delta_theta: float
    lookahead: float
    cross_track: float


def _heading_error(pose, line, s_closest, lookahead):
    target = line.at(s_closest + lookahead)
    return wrap_angle(math.atan2(target[1] - pose[1], target[0] - pose[0]) - pose[2])


def pure_pursuit_step(pose, path, params: TrackingParams = TrackingParams(), adaptive: bool = True) -> PursuitCommand:
    """One controller step.  ``adaptive=False`` pins the speed at ``v_max``.

    The lookahead depends on speed and speed on heading error, so the error
    is first taken at the nominal lookahead ``L0``, then re-evaluated at the
    speed-adjusted lookahead that is reported.
    """
    line = path if isinstance(path, _Polyline) else _Polyline(np.asarray(path, dtype=float).reshape(-1, 2))
    if len(line.pts) == 0:
        raise NoPath("empty path")
    p = np.asarray(pose[:2], dtype=float)
    s_c, xtrack = line.project(p)
    dth0 = _heading_error(pose, line, s_c, params.L0)
    if adaptive:
        v, lookahead = adaptive_velocity(dth0, params)
    else:
        v = params.v_max
        lookahead = min(max(params.L0 + params.k_v * v, params.L_min), params.L_max)
    dth = _heading_error(pose, line, s_c, lookahead)
    kappa = curvature(dth, lookahead)
    if v < params.v_creep:
        # near the stop threshold v*kappa would creep toward it without ever turning
        v = 0.0
    if v > 0.0:
        omega = v * kappa
    else:
        # speed law says stop: rotate in place toward the lookahead point
        omega = math.copysign(min(params.turn_rate, abs(dth) / 0.1), dth) if dth else 0.0
    return PursuitCommand(v, omega, kappa, dth, lookahead, xtrack)


def step_unicycle(pose, v: float, omega: float, dt: float):
    """Exact arc integration; straight line when |omega| < 1e-9."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    x, y, th = pose
    if abs(omega) < 1e-9:
        return (x + v * dt * math.cos(th), y + v * dt * math.sin(th), th)
    th2 = th + omega * dt
    r = v / omega
    return (x + r * (math.sin(th2) - math.sin(th)), y - r * (math.cos(th2) - math.cos(th)), wrap_angle(th2))


@dataclass
class TrackResult:
    poses: np.ndarray
    v: np.ndarray
    kappa: np.ndarray
    cross_track: np.ndarray
    arrived: bool

    @property
    def max_cross_track(self) -> float:
        return float(self.cross_track.max()) if len(self.cross_track) else 0.0

    def oscillation_rms(self) -> float:
        """RMS of v*|kappa| per tick, the jitter model's oscillation driver."""
        return float(np.sqrt(np.mean((self.v * self.kappa) ** 2))) if len(self.v) else 0.0


def track_path(path, start_pose, params: TrackingParams = TrackingParams(), dt: float = 0.1,
               adaptive: bool = True, max_steps: int = 5000) -> TrackResult:
    """Closed-loop pure pursuit until within ``delta_arrival`` of the path end."""
    line = _Polyline(np.asarray(path, dtype=float).reshape(-1, 2))
    pose = tuple(float(a) for a in start_pose)
    poses, vs, ks, xt = [pose], [], [], []
    end = line.pts[-1]
    arrived = False
    for _ in range(max_steps):
        if math.hypot(pose[0] - end[0], pose[1] - end[1]) <= params.delta_arrival:
            arrived = True
            break
        cmd = pure_pursuit_step(pose, line, params, adaptive)
        vs.append(cmd.v)
        ks.append(cmd.kappa)
        xt.append(cmd.cross_track)
        pose = step_unicycle(pose, cmd.v, cmd.omega, dt)
        poses.append(pose)
    return TrackResult(np.array(poses), np.array(vs), np.array(ks), np.array(xt), arrived)


def s_curve(radius: float = 2.0, n: int = 200) -> np.ndarray:
    """Left quarter arc then right quarter arc of equal radius, tangent at the joint.

    Starts at the origin heading +x and ends at (2r, 2r) heading +x again.
    """
    a = np.linspace(0.0, np.pi / 2, n)
    first = np.column_stack([radius * np.sin(a), radius * (1 - np.cos(a))])
    # second arc: centre mirrored through the joint, turning right
    jx, jy = first[-1]
    second = np.column_stack([jx + radius * (1 - np.cos(a[1:])), jy + radius * np.sin(a[1:])])
    return np.vstack([first, second])
