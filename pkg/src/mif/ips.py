"""Interaction pose safety.

A stance is accepted only when three independent checks hold at once:
body clearance from the scene mesh stays above ``delta_safe``, the target
lies inside the arm's reach annulus along an unobstructed segment, and the
centre of mass projects strictly inside the feet's support polygon after a
2 cm inward erosion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import DegenerateSupport, NoFeasibleStance
from .geometry.distance import min_clearance, signed_distance

DELTA_SAFE = 0.05
SUPPORT_SHRINK = 0.02
CONTACT_ALLOWANCE = 0.05
SEGMENT_STEP = 0.01


def wrap_angle(theta: float) -> float:
    """Map to (-pi, pi]."""
    a = math.fmod(theta + math.pi, 2 * math.pi)
    if a <= 0:
        a += 2 * math.pi
    return a - math.pi


@dataclass(frozen=True)
class Sphere:
    offset: tuple          # base frame, metres
    radius: float


@dataclass(frozen=True)
class Foot:
    length: float          # along heading
    width: float
    offset: tuple          # (x, y) of the rectangle centre in the base frame

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0:
            raise ValueError("foot rectangle must have positive extent")


DEFAULT_BODY = (Sphere((0.0, 0.0, 0.3), 0.2), Sphere((0.0, 0.0, 0.7), 0.2), Sphere((0.0, 0.0, 1.1), 0.2))
DEFAULT_FEET = (Foot(0.22, 0.1, (0.0, 0.1)), Foot(0.22, 0.1, (0.0, -0.1)))


@dataclass(frozen=True)
class StancePose:
    x: float
    y: float
    theta: float = 0.0
    body: tuple = DEFAULT_BODY
    feet: tuple = DEFAULT_FEET
    com_offset: tuple = (0.0, 0.0, 0.9)

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))
        if not self.body:
            raise ValueError("body needs at least one sphere")

    @property
    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])

    def to_world(self, offset) -> np.ndarray:
        return np.array([self.x, self.y, 0.0]) + self.rotation @ np.asarray(offset, dtype=float)

    def sphere_centers(self) -> np.ndarray:
        return np.array([self.to_world(s.offset) for s in self.body])

    def sphere_radii(self) -> np.ndarray:
        return np.array([s.radius for s in self.body])

    @property
    def com(self) -> np.ndarray:
        return self.to_world(self.com_offset)

    @property
    def body_radius(self) -> float:
        """Planar circumscribed radius of the sphere set."""
        return max(math.hypot(s.offset[0], s.offset[1]) + s.radius for s in self.body)

    def foot_corners(self) -> np.ndarray:
        pts = []
        for f in self.feet:
            hl, hw = f.length / 2, f.width / 2
            for dx, dy in ((-hl, -hw), (hl, -hw), (hl, hw), (-hl, hw)):
                pts.append(self.to_world((f.offset[0] + dx, f.offset[1] + dy, 0.0))[:2])
        return np.array(pts)

    def moved(self, x, y, theta) -> "StancePose":
        return replace(self, x=float(x), y=float(y), theta=float(theta))

    def as_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "theta": self.theta}


@dataclass(frozen=True)
class ReachModel:
    shoulder_offset: tuple = (0.1, 0.0, 1.0)
    r_min: float = 0.25
    r_max: float = 0.85

    def __post_init__(self):
        if not 0 < self.r_min < self.r_max:
            raise ValueError("reach annulus needs 0 < r_min < r_max")


@dataclass(frozen=True)
class IPSDiagnostics:
    i_col: bool
    i_ik: bool
    i_stab: bool
    clearance_m: float
    reach_m: float
    stability_margin_m: float

    @property
    def ok(self) -> bool:
        return self.i_col and self.i_ik and self.i_stab

    def as_dict(self) -> dict:
        return {
            "i_col": int(self.i_col),
            "i_ik": int(self.i_ik),
            "i_stab": int(self.i_stab),
            "clearance_m": self.clearance_m,
            "reach_m": self.reach_m,
            "stability_margin_m": self.stability_margin_m,
        }


def clearance(pose: StancePose, mesh) -> float:
    return min_clearance(pose.sphere_centers(), pose.sphere_radii(), mesh)


def check_collision(pose: StancePose, mesh, delta_safe: float = DELTA_SAFE) -> bool:
    return clearance(pose, mesh) > delta_safe


def _reach(pose, t_obj, reach, mesh):
    shoulder = pose.to_world(reach.shoulder_offset)
    t_obj = np.asarray(t_obj, dtype=float)
    dist = float(np.linalg.norm(t_obj - shoulder))
    if not reach.r_min <= dist <= reach.r_max:
        return False, dist
    n = max(1, int(math.ceil(dist / SEGMENT_STEP)))
    s = np.linspace(0.0, 1.0, n + 1)
    pts = shoulder + s[:, None] * (t_obj - shoulder)
    # the hand may touch the object surface near the grasp point
    pts = pts[(1.0 - s) * dist > CONTACT_ALLOWANCE]
    if len(pts) and np.min(signed_distance(pts, mesh)) <= 0.0:
        return False, dist
    return True, dist


def check_reach(pose: StancePose, t_obj, reach: ReachModel, mesh) -> bool:
    return _reach(pose, t_obj, reach, mesh)[0]


def support_margin(pose: StancePose, com) -> float:
    """Signed inward distance of the CoM projection to the raw support hull."""
    corners = pose.foot_corners()
    try:
        hull = ConvexHull(corners)
    except QhullError as exc:
        raise DegenerateSupport("support polygon has zero area") from exc
    if hull.volume <= 1e-12:
        raise DegenerateSupport("support polygon has zero area")
    # hull.equations rows are (n, c) with n·p + c <= 0 inside, n unit length
    p = np.asarray(com, dtype=float)[:2]
    return float(np.min(-(hull.equations[:, :2] @ p + hull.equations[:, 2])))


def check_stability(pose: StancePose, com=None, shrink: float = SUPPORT_SHRINK) -> bool:
    com = pose.com if com is None else com
    return support_margin(pose, com) > shrink


def ips(pose: StancePose, mesh, t_obj, reach: ReachModel = ReachModel(), delta_safe: float = DELTA_SAFE, com=None):
    """Return ``(S_IPS, diagnostics)``."""
    com = pose.com if com is None else com
    clr = clearance(pose, mesh)
    ok_reach, dist = _reach(pose, t_obj, reach, mesh)
    margin = support_margin(pose, com)
    diag = IPSDiagnostics(
        i_col=clr > delta_safe,
        i_ik=ok_reach,
        i_stab=margin > SUPPORT_SHRINK,
        clearance_m=clr,
        reach_m=dist,
        stability_margin_m=margin - SUPPORT_SHRINK,
    )
    return diag.ok, diag


RING_RADII = (0.1, 0.2, 0.3, 0.4, 0.5)
RING_HEADINGS = 16


def stance_candidates(initial: StancePose, t_obj):
    """The initial pose, then ring positions facing the target, inner rings first."""
    yield initial
    tx, ty = float(t_obj[0]), float(t_obj[1])
    for r in RING_RADII:
        for k in range(RING_HEADINGS):
            phi = 2 * math.pi * k / RING_HEADINGS
            x = initial.x + r * math.cos(phi)
            y = initial.y + r * math.sin(phi)
            yield initial.moved(x, y, math.atan2(ty - y, tx - x))


def micro_adjust_stance(initial: StancePose, mesh, t_obj, reach: ReachModel = ReachModel(),
                        max_candidates: int | None = None, delta_safe: float = DELTA_SAFE):
    """First candidate with S_IPS = 1, or NoFeasibleStance."""
    for i, cand in enumerate(stance_candidates(initial, t_obj)):
        if max_candidates is not None and i >= max_candidates:
            break
        if ips(cand, mesh, t_obj, reach, delta_safe)[0]:
            return cand
    raise NoFeasibleStance(f"no safe stance within {RING_RADII[-1]} m of ({initial.x:.3f}, {initial.y:.3f})")
