"""The execution loop: ground the query, walk while checking memory, then act safely."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import DegenerateGeometry, NoFeasibleStance, NoPath, TargetNotFound
from ..geometry import (
    box,
    closest_point,
    merge,
    provide_mesh,
    rank_viewpoints,
    sample_viewpoints,
    scaled_robust_icp,
    yaw_rotation,
)
from ..geometry.icp import SimilarityTransform
from ..ips import StancePose, micro_adjust_stance, wrap_angle
from ..navigation import OccupancyGrid, plan_path, pure_pursuit_step, step_unicycle
from ..simworld.world import TaskOutcome, World, adjudicate
from ..spatial import ON, GraphNode, landmark_nodes, match_nodes, query_target, relation, total_discrepancy
from .memory import SCAN_RING, Memory, active_scan, build_memory

MODES = ("static", "initial", "full")
STANDOFF = 0.36             # approach point beyond the support footprint, m
INFLATION_MARGIN = 0.05
RETRY_BUDGET = 5
RETRY_ANGLES = (0.0, math.pi / 4, -math.pi / 4, math.pi / 2, -math.pi / 2)
N_VIEWS = 16
VIEW_RADIUS = 1.0
ICP_SOURCE_POINTS = 400
MESH_SIGMA = 0.003
NEIGHBOUR_RADIUS = 2.5
FLOOR_CLEARANCE = 0.3       # nodes reaching below this height block the floor plan
HEADING_TOL = 0.1
MAX_PATCHES = 8
BELIEF_MARGIN = 0.08        # extra clearance demanded against estimated geometry, m
SIG_DIGITS = 9


def round_sig(x):
    """Floats to ``SIG_DIGITS`` significant digits, recursively through containers."""
    if isinstance(x, bool) or x is None or isinstance(x, (int, str)):
        return x
    if isinstance(x, float):
        return float(f"{x:.{SIG_DIGITS}g}") if math.isfinite(x) else x
    if isinstance(x, (np.floating, np.integer)):
        return round_sig(x.item())
    if isinstance(x, dict):
        return {k: round_sig(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [round_sig(v) for v in x]
    return x


@dataclass
class TaskReport:
    """Everything a run produced.

    ``outcome`` is adjudicated against ground truth; ``claim`` is what the
    agent itself concluded (arrived, removed-report, failed).
    """

    scenario: str
    mode: str
    seed: int
    outcome: str                   # success | failure | removed-report
    success: bool
    reason: str
    claim: str
    ticks: int
    D_trace: list = field(default_factory=list)
    updates_triggered: int = 0
    final_stance: dict | None = None
    ips_diag: dict | None = None
    path_length: float = 0.0
    retries: int = 0
    registration_residual: float | None = None
    penetration_m: float | None = None
    label: str | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["D_trace"] = [[int(t), float(v)] for t, v in self.D_trace]
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "TaskReport":
        doc = dict(doc)
        doc["D_trace"] = [(int(t), float(v)) for t, v in doc.get("D_trace", [])]
        return cls(**doc)


@dataclass
class Belief:
    """Where the agent thinks the target is, plus how it knows."""

    centroid: np.ndarray
    size: np.ndarray
    category: str
    node_id: int | None = None
    object_id: int | None = None     # set when a live detection backs the belief


class _Run:
    def __init__(self, scenario, mode: str):
        if mode not in MODES:
            raise ValueError(f"unknown mode '{mode}', expected one of {MODES}")
        self.scn = scenario
        self.mode = mode
        self.world = World(scenario)
        self.memory: Memory = build_memory(self.world)
        self.world.advance(0)
        r = scenario.robot
        self.stance_proto = StancePose(0.0, 0.0, 0.0, r.body, r.feet, r.com_offset)
        self.reach = r.reach
        self.tracking = scenario.params.tracking
        self.disc = scenario.params.discrepancy
        self.sim = scenario.params.sim
        self.delta_safe = scenario.params.delta_safe
        self.inflation = self.stance_proto.body_radius + self.delta_safe + INFLATION_MARGIN
        self.pose = tuple(float(a) for a in r.start)
        self.tick = 0
        self.trace: list = []
        self.travelled = 0.0
        self.persist = 0
        self.visited: set = set()
        self.last_local = None
        self.retries = 0
        self.residual = None
        self._build_grid()

    # --- plumbing ------------------------------------------------------------

    def _build_grid(self):
        lo, hi = self.world.bounds()
        grid = OccupancyGrid.empty(lo[0] - 0.2, lo[1] - 0.2, hi[0] + 0.2, hi[1] + 0.2, self.sim.grid_resolution)
        for wlo, whi in self.world.walls:
            grid.mark_box(wlo[:2], whi[:2])
        for n in self.memory.graph.nodes.values():
            if n.centroid[2] - n.size[2] / 2 < FLOOR_CLEARANCE:
                half = n.size[:2] / 2
                grid.mark_box(n.centroid[:2] - half, n.centroid[:2] + half)
        self.grid = grid
        self.blocked = grid.inflated(self.inflation)

    def _free_goal(self, p):
        """Nearest unblocked cell centre to ``p``."""
        ij = self.grid.to_cell(p)
        if self.grid.inside(ij) and not self.blocked[ij]:
            return np.asarray(p, dtype=float)[:2]
        free = np.argwhere(~self.blocked)
        if not len(free):
            raise NoPath("no free cell in the map")
        centers = self.grid.origin + (free + 0.5) * self.grid.resolution
        return centers[np.argmin(np.linalg.norm(centers - np.asarray(p)[:2], axis=1))]

    def _tick(self, v, omega, kappa):
        """Advance one control period; returns True when an update should fire."""
        self.tick += 1
        self.world.advance(self.tick)
        new = step_unicycle(self.pose, v, omega, self.sim.dt)
        self.travelled += math.hypot(new[0] - self.pose[0], new[1] - self.pose[1])
        self.pose = new
        if self.mode == "static":
            return False
        obs = self.world.observe(self.pose, v, kappa)
        local = self.memory.local_graph(obs.detections)
        visible = self.memory.in_view(self.world, [self.pose])
        matching = match_nodes(local, self.memory.graph, self.disc, in_view=visible)
        d = total_discrepancy(local, self.memory.graph, matching, self.disc)
        self.trace.append((self.tick, d))
        self.last_local = (local, matching, obs)
        self.persist = self.persist + 1 if d > self.disc.tau else 0
        return (
            self.mode == "full"
            and self.persist >= self.disc.persistence_ticks
            and self.memory.patches < MAX_PATCHES
        )

    def _discrepant_center(self):
        local, matching, _ = self.last_local
        g = self.memory.graph
        pts = [local.nodes[i].centroid for i in matching.unmatched_local]
        pts += [g.nodes[j].centroid for j in matching.unmatched_global]
        pts += [local.nodes[l].centroid for l, gid in matching.pairs
                if np.linalg.norm(local.nodes[l].centroid - g.nodes[gid].centroid) > self.disc.tau]
        if not pts:
            pts = [n.centroid for n in local.nodes.values()] or [np.array([self.pose[0], self.pose[1], 0.0])]
        return np.mean(pts, axis=0)

    def _update(self, center=None):
        """Pause, scan around the discrepancy, patch memory."""
        center = self._discrepant_center() if center is None else center
        active_scan(self.world, self.memory, center)
        self.tick += 1          # the ring sweep is charged as one more control period
        self.world.advance(self.tick)
        self.persist = 0
        for m in landmark_nodes(self.memory.graph, self.scn.query.region, self.scn.query.landmark):
            if np.linalg.norm(self.memory.graph.nodes[m].centroid[:2] - center[:2]) <= SCAN_RING:
                self.visited.add(m)
        self._build_grid()

    # --- grounding ---------------------------------------------------------------

    def _ground(self):
        q = self.scn.query
        g = self.memory.graph
        try:
            n = query_target(g, q)
            return "target", Belief(n.centroid.copy(), n.size.copy(), n.caption, node_id=n.id)
        except TargetNotFound:
            pass
        marks = [m for m in landmark_nodes(g, q.region, q.landmark) if m not in self.visited]
        if not marks:
            return "exhausted", None
        p = np.array(self.pose[:2])
        m = min(marks, key=lambda k: (np.linalg.norm(g.nodes[k].centroid[:2] - p), k))
        n = g.nodes[m]
        return "search", Belief(n.centroid.copy(), n.size.copy(), n.caption, node_id=m)

    def _support_of(self, belief: Belief):
        probe = GraphNode(-1, belief.category, "", belief.centroid, 1.0, np.ones(1), belief.size)
        best = None
        for n in self.memory.graph.nodes.values():
            if n.id == belief.node_id:
                continue
            if relation(probe, n) == ON:
                d = abs(belief.centroid[2] - n.centroid[2])
                if best is None or d < best[0]:
                    best = (d, n)
        return None if best is None else best[1]

    def _approach(self, belief: Belief, turn: float = 0.0, landmark: bool = False):
        """Stand-off point beyond the support footprint, facing the belief."""
        c = belief.centroid
        support = belief if landmark else self._support_of(belief)
        if support is None:
            u = np.array(self.pose[:2]) - c[:2]
            sc, half = c[:2], belief.size[:2] / 2
        else:
            sc = support.centroid[:2]
            half = support.size[:2] / 2
            u = c[:2] - sc
            if landmark or np.linalg.norm(u) < 1e-6:
                u = np.array(self.pose[:2]) - sc
        if np.linalg.norm(u) < 1e-9:
            u = np.array([1.0, 0.0])
        u = u / np.linalg.norm(u)
        cs, sn = math.cos(turn), math.sin(turn)
        u = np.array([cs * u[0] - sn * u[1], sn * u[0] + cs * u[1]])
        # leave the footprint along u starting from the belief point
        rel = c[:2] - sc
        t_exit = min(
            (half[k] - rel[k] * math.copysign(1.0, u[k])) / abs(u[k]) if abs(u[k]) > 1e-9 else math.inf
            for k in range(2)
        )
        t_exit = max(t_exit, 0.0)
        p = c[:2] + u * (t_exit + STANDOFF)
        return p, math.atan2(c[1] - p[1], c[0] - p[0])

    # --- motion --------------------------------------------------------------

    def _navigate(self, goal):
        """Follow a planned path; returns "arrived" or "trigger" or "timeout"."""
        path = plan_path(self.grid, self.pose, self._free_goal(goal), self.inflation)
        end = path[-1]
        while self.tick < self.sim.max_ticks:
            if math.hypot(self.pose[0] - end[0], self.pose[1] - end[1]) <= self.tracking.delta_arrival:
                return "arrived"
            cmd = pure_pursuit_step(self.pose, path, self.tracking)
            if self._tick(cmd.v, cmd.omega, cmd.kappa):
                return "trigger"
        return "timeout"

    def _dwell(self, look_at):
        """Turn toward ``look_at`` and observe for at least the persistence window."""
        n = 0
        while self.tick < self.sim.max_ticks:
            err = wrap_angle(math.atan2(look_at[1] - self.pose[1], look_at[0] - self.pose[0]) - self.pose[2])
            if n >= max(1, self.disc.persistence_ticks) and abs(err) <= HEADING_TOL:
                return "done"
            omega = math.copysign(min(self.tracking.turn_rate, abs(err) / self.sim.dt), err) if err else 0.0
            n += 1
            if self._tick(0.0, omega, 0.0):
                return "trigger"
        return "timeout"

    def _local_match(self, belief: Belief):
        """Closest live detection of the queried category near the belief."""
        if self.mode == "static" or self.last_local is None:
            return None
        _, _, obs = self.last_local
        best = None
        for raw in obs.detections:
            if raw.object_id is None or raw.category.lower() != self.scn.query.object.lower():
                continue
            c = raw.positions.mean(axis=0)
            d = float(np.linalg.norm(c[:2] - belief.centroid[:2]))
            if d <= self.disc.gate_radius and (best is None or d < best[0]):
                best = (d, raw)
        if best is None:
            return None
        raw = best[1]
        return Belief(raw.positions.mean(axis=0), raw.size.copy(), raw.category, object_id=raw.object_id)

    # --- interaction -------------------------------------------------------------

    def _support_points(self, belief: Belief):
        if belief.object_id is not None and belief.object_id in self.world.objects:
            pts, alpha, g = self.world.surface_scan(belief.object_id)
            c = self.memory.store.confidence_of(g, alpha)
            keep = c >= self.memory.conf.tau_conf
            return pts[keep] if keep.sum() >= 8 else pts
        if belief.node_id is not None:
            return self.memory.support(belief.node_id)
        return np.zeros((0, 3))

    def _register(self, belief: Belief, pts):
        """Oracle mesh for the category fitted to the observed support points."""
        assets = {o.category: o.local_mesh for o in self.world.known.values()}
        mesh = provide_mesh(assets, belief.category, sigma=MESH_SIGMA, seed=self.scn.seed)
        rng = np.random.default_rng([self.scn.seed, 5])
        src = mesh.sample_surface(ICP_SOURCE_POINTS, rng)
        center = src.mean(axis=0)
        rms = float(np.sqrt(((src - center) ** 2).sum(axis=1).mean()))
        mesh = mesh.transformed(translation=-center / rms, scale=1.0 / rms)
        src = (src - center) / rms
        mt = pts.mean(axis=0)
        s0 = float(np.sqrt(((pts - mt) ** 2).sum(axis=1).mean()))
        best = None
        for k in range(4):
            r = yaw_rotation(k * math.pi / 2)
            init = SimilarityTransform(r, mt, s0)
            try:
                res = scaled_robust_icp(src, pts, init=init)
            except DegenerateGeometry:
                continue
            if best is None or res.residual < best.residual:
                best = res
        if best is None:
            lo, hi = pts.min(axis=0), pts.max(axis=0)
            return box(np.maximum(hi - lo, 0.02), (hi + lo) / 2), None
        t = best.transform
        return mesh.transformed(rotation=t.rotation, translation=t.translation, scale=t.scale), best.residual

    def _belief_mesh(self, target_mesh, belief: Belief):
        parts = [target_mesh]
        c = belief.centroid[:2]
        for n in self.memory.graph.nodes.values():
            if n.id == belief.node_id:
                continue
            if belief.object_id is not None and np.linalg.norm(n.centroid - belief.centroid) < 0.5 * self.disc.gate_radius \
                    and n.caption == belief.category:
                continue
            if np.linalg.norm(n.centroid[:2] - c) <= NEIGHBOUR_RADIUS:
                parts.append(box(np.maximum(n.size, 0.02), n.centroid))
        for (lo, hi), m in zip(self.world.walls, self.world.wall_meshes):
            if np.linalg.norm(np.clip(c, lo[:2], hi[:2]) - c) <= NEIGHBOUR_RADIUS:
                parts.append(m)
        return merge(parts)

    def _interact(self, belief: Belief):
        """Viewpoint choice, registration and a safe stance, or NoFeasibleStance."""
        g = self.memory.graph
        omega = [n.reliability for n in g.nodes.values()
                 if np.linalg.norm(n.centroid - belief.centroid) <= NEIGHBOUR_RADIUS] or [1.0]
        views = sample_viewpoints(belief.centroid, VIEW_RADIUS, N_VIEWS)
        rank_viewpoints(views, belief.centroid, omega)
        pts = self._support_points(belief)
        if len(pts) < 4:
            raise NoFeasibleStance("no support points for registration")
        target_mesh, self.residual = self._register(belief, pts)
        scene = self._belief_mesh(target_mesh, belief)
        last = None
        for k in range(RETRY_BUDGET):
            p, th = self._approach(belief, RETRY_ANGLES[k % len(RETRY_ANGLES)])
            init = self.stance_proto.moved(p[0], p[1], th)
            shoulder = init.to_world(self.reach.shoulder_offset)
            t_obj = closest_point(shoulder, target_mesh)[0]
            try:
                return micro_adjust_stance(init, scene, t_obj, self.reach, delta_safe=self.delta_safe + BELIEF_MARGIN)
            except NoFeasibleStance as exc:
                self.retries += 1
                last = exc
        raise last

    # --- main loop -------------------------------------------------------------------

    def execute(self) -> TaskReport:
        outcome = self._loop()
        success, reason, diag = adjudicate(self.world, outcome)
        pen = None
        if outcome.stance is not None and success:
            pen = self.world.penetration(outcome.stance)
        if not success:
            verdict = "failure"
        else:
            verdict = "removed-report" if outcome.kind == "removed-report" else "success"
        rep = TaskReport(
            scenario=f"{self.scn.label or 'scenario'}_{self.scn.seed:04d}",
            mode=self.mode,
            seed=self.scn.seed,
            outcome=verdict,
            success=bool(success),
            reason=reason,
            claim=outcome.kind,
            ticks=self.tick,
            D_trace=list(self.trace),
            updates_triggered=self.memory.patches,
            final_stance=None if outcome.stance is None else outcome.stance.as_dict(),
            ips_diag=None if diag is None else diag.as_dict(),
            path_length=self.travelled,
            retries=self.retries,
            registration_residual=self.residual,
            penetration_m=pen,
            label=self.scn.label,
        )
        # reports carry exactly what the metrics files hold
        return TaskReport.from_dict(round_sig(rep.to_dict()))

    def _loop(self) -> TaskOutcome:
        while self.tick < self.sim.max_ticks:
            kind, belief = self._ground()
            if kind == "exhausted" or (kind == "search" and self.mode == "static"):
                if self.mode == "initial":
                    return TaskOutcome("failed", reason="target not in memory and not found nearby")
                return TaskOutcome("removed-report", reason="target not found")
            goal, _ = self._approach(belief, landmark=kind == "search")
            try:
                state = self._navigate(goal)
            except NoPath as exc:
                return TaskOutcome("failed", reason=f"no path: {exc}")
            if state == "trigger":
                self._update()
                continue
            if state == "timeout":
                break
            if self.mode != "static":
                state = self._dwell(belief.centroid)
                if state == "trigger":
                    self._update()
                    continue
                if state == "timeout":
                    break
            live = self._local_match(belief)
            if kind == "search":
                if live is None:
                    self.visited.add(belief.node_id)
                    continue
                belief = live
            elif live is not None:
                belief = live
            elif self.mode == "full" and self.memory.patches < MAX_PATCHES:
                # memory says the target is right here but nothing confirms it
                self._update(belief.centroid)
                continue
            try:
                stance = self._interact(belief)
            except NoFeasibleStance as exc:
                return TaskOutcome("failed", reason=str(exc))
            self.travelled += math.hypot(stance.x - self.pose[0], stance.y - self.pose[1])
            self.pose = (stance.x, stance.y, stance.theta)
            return TaskOutcome("arrived", stance)
        return TaskOutcome("failed", reason="tick budget exhausted")


def run_task(scenario, mode: str = "full", seed: int | None = None) -> TaskReport:
    """Run one task end to end in a fresh world and adjudicate it."""
    if seed is not None:
        scenario = scenario.with_seed(seed)
    return _Run(scenario, mode).execute()
