"""Ground-truth world state, oracle observations, scripted events, adjudication."""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from ..errors import EventError
from ..geometry.distance import closest_point, min_clearance
from ..geometry.icp import yaw_rotation
from ..geometry.mesh import TriangleMesh, box, merge, subdivide
from ..ips import StancePose, ips, wrap_angle
from .scenario import EventSpec, JitterModel, Scenario, SimParams, asset_mesh

FEATURE_DIM = 32
SUCCESS_RADIUS = 1.0
SCENE_RADIUS = 2.5


def _unit(v):
    return v / np.linalg.norm(v)


def category_prototype(category: str) -> np.ndarray:
    """Stable unit vector per category name (crc32-seeded, platform independent)."""
    rng = np.random.default_rng(zlib.crc32(category.strip().lower().encode()))
    return _unit(rng.normal(size=FEATURE_DIM))


def object_feature(category: str, seed: int, object_id: int) -> np.ndarray:
    rng = np.random.default_rng([seed, object_id, 7])
    return _unit(category_prototype(category) + 0.15 * rng.normal(size=FEATURE_DIM))


@dataclass(frozen=True, eq=False)
class WorldObject:
    id: int
    category: str
    room: str
    position: np.ndarray          # centroid
    yaw: float
    mesh_ref: str
    feature: np.ndarray
    local_mesh: TriangleMesh

    @cached_property
    def mesh(self) -> TriangleMesh:
        return self.local_mesh.transformed(rotation=yaw_rotation(self.yaw), translation=self.position)

    @cached_property
    def size(self) -> np.ndarray:
        lo, hi = self.mesh.bounds
        return hi - lo

    def moved(self, pose) -> "WorldObject":
        return replace(self, position=np.asarray(pose[:3], dtype=float), yaw=float(pose[3]))


@dataclass
class RawDetection:
    """Primitive evidence for one detected object in one view."""

    object_id: int | None         # None for spurious detections
    category: str
    room: str
    positions: np.ndarray
    alpha: np.ndarray
    g: np.ndarray
    features: np.ndarray
    depth: np.ndarray
    size: np.ndarray


@dataclass
class Observation:
    detections: list
    g_base: float

    @property
    def mean_g(self) -> float:
        gs = [d.g for d in self.detections]
        return float(np.concatenate(gs).mean()) if gs else 0.0


def _segment_hits_box(p, q, lo, hi) -> bool:
    # slab test on the segment parameter interval [0, 1]
    d = q - p
    t0, t1 = 0.0, 1.0
    for k in range(3):
        if abs(d[k]) < 1e-15:
            if p[k] < lo[k] or p[k] > hi[k]:
                return False
            continue
        a = (lo[k] - p[k]) / d[k]
        b = (hi[k] - p[k]) / d[k]
        if a > b:
            a, b = b, a
        t0, t1 = max(t0, a), min(t1, b)
        if t0 > t1:
            return False
    return True


def point_in_polygon(p, poly) -> bool:
    """Even-odd ray casting."""
    x, y = float(p[0]), float(p[1])
    inside = False
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if (y1 > y) != (y2 > y) and x < x1 + (y - y1) * (x2 - x1) / (y2 - y1):
            inside = not inside
    return inside


class World:
    """Mutable ground truth for one run.  All noise comes from ``self.rng``."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.params: SimParams = scenario.params.sim
        self.jitter: JitterModel = scenario.params.jitter
        self.rng = np.random.default_rng([scenario.seed, scenario.params.jitter.noise_seed, 11])
        self.objects: dict = {}
        self.known: dict = {}         # every object that ever existed, last known state
        self.removed: set = set()
        self.history: list = []
        self.tick = 0
        self._next_event = 0
        for o in scenario.objects:
            self._add(o.id, o.category, o.room, o.pose, o.mesh)
        self.walls = [(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)) for lo, hi in scenario.walls]

    def _add(self, oid, category, room, pose, mesh_ref):
        obj = WorldObject(
            id=int(oid),
            category=category,
            room=room,
            position=np.asarray(pose[:3], dtype=float),
            yaw=float(pose[3]),
            mesh_ref=mesh_ref,
            feature=object_feature(category, self.scenario.seed, int(oid)),
            local_mesh=asset_mesh(mesh_ref, self.scenario.base_dir),
        )
        self.objects[obj.id] = obj
        self.known[obj.id] = obj
        return obj

    @cached_property
    def wall_meshes(self) -> list:
        return [box(hi - lo, (hi + lo) / 2) for lo, hi in self.walls]

    @property
    def categories(self) -> list:
        return sorted({o.category for o in self.known.values()})

    def bounds(self):
        pts = np.array([p for poly in self.scenario.rooms.values() for p in poly])
        return pts.min(axis=0), pts.max(axis=0)

    # --- visibility --------------------------------------------------------

    def line_of_sight(self, p, q) -> bool:
        return not any(_segment_hits_box(p, q, lo, hi) for lo, hi in self.walls)

    def in_view(self, pose, point, margin_deg: float = 0.0, margin_m: float = 0.0) -> bool:
        sp = self.params
        x, y, th = pose
        dx, dy = point[0] - x, point[1] - y
        dist = math.hypot(dx, dy)
        if dist > sp.fov_range - margin_m or dist < 1e-9:
            return False
        if abs(wrap_angle(math.atan2(dy, dx) - th)) > math.radians(sp.fov_deg - margin_deg):
            return False
        cam = np.array([x, y, sp.camera_height])
        return self.line_of_sight(cam, np.asarray(point, dtype=float))

    def visible_objects(self, pose) -> list:
        return [o for oid, o in sorted(self.objects.items()) if self.in_view(pose, o.position)]

    # --- observation ---------------------------------------------------------

    def g_base(self, v: float, kappa: float) -> float:
        j = self.jitter
        return j.amp0 + j.k_speed * abs(v) + j.k_curv * abs(kappa)

    def _instability(self, g0, n):
        j = self.jitter
        eps = np.maximum(self.rng.normal(0.0, j.noise, n), -0.5)
        bad = self.rng.random(n) < j.corrupt_frac
        eps[bad] = self.rng.uniform(j.corrupt_lo, j.corrupt_hi, int(bad.sum()))
        return g0 * (1.0 + eps)

    def _primitives(self, center, size, feature, g0, cam, n):
        j = self.jitter
        half = n // 2
        u = self.rng.uniform(-0.4, 0.4, (half, 3)) * size
        offsets = np.vstack([u, -u])          # antithetic: exact centroid before noise
        g = self._instability(g0, 2 * half)
        common = g0 * j.common_sigma * self.rng.normal(size=3)
        pos = center + offsets + common + g[:, None] * j.pos_sigma * self.rng.normal(size=(2 * half, 3))
        alpha = self.rng.uniform(0.6, 1.0, 2 * half)
        feats = feature + (0.5 * g)[:, None] * self.rng.normal(size=(2 * half, FEATURE_DIM))
        feats /= np.linalg.norm(feats, axis=1, keepdims=True)
        depth = np.linalg.norm(pos - cam, axis=1)
        return pos, alpha, g, feats, depth

    def observe(self, pose, v: float = 0.0, kappa: float = 0.0, n_prims: int | None = None, phantoms: bool = True) -> Observation:
        """Oracle detections of every object in the view wedge with clear line of sight."""
        n = n_prims or self.params.n_prims
        g0 = self.g_base(v, kappa)
        cam = np.array([pose[0], pose[1], self.params.camera_height])
        dets = []
        for o in self.visible_objects(pose):
            pos, alpha, g, feats, depth = self._primitives(o.position, o.size, o.feature, g0, cam, n)
            dets.append(RawDetection(o.id, o.category, o.room, pos, alpha, g, feats, depth, o.size.copy()))
        if phantoms and self.jitter.phantom_rate > 0 and self.rng.random() < self.jitter.phantom_rate:
            dets.append(self._phantom(pose, g0, cam, n))
        return Observation(dets, g0)

    def _phantom(self, pose, g0, cam, n):
        # a single-tick spurious detection somewhere in the wedge
        x, y, th = pose
        r = self.rng.uniform(1.0, self.params.fov_range - 0.5)
        a = th + self.rng.uniform(-1, 1) * math.radians(self.params.fov_deg)
        cats = self.categories
        cat = cats[int(self.rng.integers(len(cats)))]
        center = np.array([x + r * math.cos(a), y + r * math.sin(a), 0.8])
        size = np.array([0.1, 0.1, 0.1])
        pos, alpha, g, feats, depth = self._primitives(center, size, category_prototype(cat), g0, cam, n)
        room = self.room_of(center)
        return RawDetection(None, cat, room, pos, alpha, g, feats, depth, size)

    def room_of(self, point) -> str:
        """Name of the first room polygon containing ``point`` (xy), or ''."""
        for name, poly in self.scenario.rooms.items():
            if point_in_polygon(point[:2], poly):
                return name
        return ""

    def surface_scan(self, object_id: int, n: int = 300, v: float = 0.0):
        """Dense primitive samples on an object's surface (for registration)."""
        o = self.objects[object_id]
        g0 = self.g_base(v, 0.0)
        pts = o.mesh.sample_surface(n, self.rng)
        g = self._instability(g0, n)
        pts = pts + g[:, None] * self.jitter.pos_sigma * self.rng.normal(size=(n, 3))
        alpha = self.rng.uniform(0.6, 1.0, n)
        return pts, alpha, g

    # --- events ----------------------------------------------------------------

    def apply_event(self, event: EventSpec) -> "World":
        oid = event.object_id
        if event.kind == "relocate":
            if oid not in self.objects:
                raise EventError(f"relocate: object {oid} is not in the world")
            old = self.objects[oid]
            new = old.moved(event.new_pose)
            self.objects[oid] = new
            self.known[oid] = new
            shift = float(np.linalg.norm(new.position - old.position))
            self.history.append({"tick": event.tick, "kind": "relocate", "object_id": oid, "shift_m": shift})
        elif event.kind == "remove":
            if oid not in self.objects:
                raise EventError(f"remove: object {oid} is not in the world")
            del self.objects[oid]
            self.removed.add(oid)
            self.history.append({"tick": event.tick, "kind": "remove", "object_id": oid})
        elif event.kind == "add":
            if oid in self.known:
                raise EventError(f"add: object id {oid} is already in use")
            self._add(oid, event.category, event.room, event.new_pose, event.mesh)
            self.history.append({"tick": event.tick, "kind": "add", "object_id": oid})
        else:
            raise EventError(f"unknown event kind '{event.kind}'")
        return self

    def advance(self, tick: int) -> list:
        """Apply every scripted event due at or before ``tick``, once."""
        applied = []
        events = self.scenario.events
        while self._next_event < len(events) and events[self._next_event].tick <= tick:
            ev = events[self._next_event]
            self._next_event += 1
            self.apply_event(ev)
            applied.append(ev)
        self.tick = tick
        return applied

    # --- ground truth ------------------------------------------------------------

    def target_id(self):
        """Ground-truth id of the queried object, if it ever existed."""
        if self.scenario.target_id is not None:
            return self.scenario.target_id
        q = self.scenario.query
        ids = sorted(
            o.id for o in self.known.values()
            if o.category.lower() == q.object.lower() and o.room == q.region
        )
        # include objects that an add event will introduce later
        for ev in self.scenario.events:
            if ev.kind == "add" and ev.category.lower() == q.object.lower() and ev.room == q.region:
                ids.append(ev.object_id)
        return min(ids) if ids else None

    def scene_mesh(self, center, radius: float = SCENE_RADIUS, exclude=()) -> TriangleMesh | None:
        c = np.asarray(center, dtype=float)[:2]
        parts = [o.mesh for oid, o in sorted(self.objects.items())
                 if oid not in exclude and np.linalg.norm(o.position[:2] - c) <= radius + np.linalg.norm(o.size[:2]) / 2]
        for (lo, hi), m in zip(self.walls, self.wall_meshes):
            near = np.clip(c, lo[:2], hi[:2])
            if np.linalg.norm(near - c) <= radius:
                parts.append(m)
        return merge(parts) if parts else None

    def penetration(self, stance: StancePose, densify: int = 1) -> float:
        """Depth of the deepest body sphere inside any ground-truth mesh (0 if none)."""
        mesh = self.scene_mesh([stance.x, stance.y])
        if mesh is None:
            return 0.0
        dense = subdivide(mesh, densify) if densify else mesh
        return max(0.0, -min_clearance(stance.sphere_centers(), stance.sphere_radii(), dense))


@dataclass
class TaskOutcome:
    kind: str                      # "arrived" | "removed-report" | "failed"
    stance: StancePose | None = None
    reason: str = ""


def adjudicate(world: World, outcome: TaskOutcome):
    """Ground-truth success check.  Returns ``(success, reason, ips_diag | None)``."""
    tid = world.target_id()
    present = tid is not None and tid in world.objects
    if outcome.kind == "removed-report":
        if tid is not None and tid in world.removed and not present:
            return True, "target correctly reported removed", None
        return False, "removed-report but the target is present", None
    if outcome.kind != "arrived" or outcome.stance is None:
        return False, outcome.reason or "task failed", None
    if not present:
        return False, "arrived but the target no longer exists", None
    obj = world.objects[tid]
    st = outcome.stance
    dist = math.hypot(st.x - obj.position[0], st.y - obj.position[1])
    if dist > SUCCESS_RADIUS:
        return False, f"stance {dist:.2f} m from the target (obsolete coordinates)", None
    reach = world.scenario.robot.reach
    shoulder = st.to_world(reach.shoulder_offset)
    t_obj = closest_point(shoulder, obj.mesh)[0]
    ok, diag = ips(st, world.scene_mesh([st.x, st.y]), t_obj, reach, world.scenario.params.delta_safe)
    if not ok:
        return False, "final stance fails ground-truth IPS", diag
    return True, "reached target with a safe stance", diag
