"""Scenario documents: JSON schema, validation and mesh assets.

A scenario is one JSON object::

    {
      "seed": 7,
      "rooms":   [{"name": "office", "polygon": [[0, 0], [5, 0], [5, 5], [0, 5]]}],
      "walls":   [{"min": [x, y, z], "max": [x, y, z]}],            # optional
      "objects": [{"id": 1, "category": "table", "room": "office",
                   "pose": [x, y, z, yaw], "mesh": "box:1.2,0.7,0.75", "height": 0.75}],
      "events":  [{"tick": 1, "kind": "relocate", "object_id": 3, "new_pose": [x, y, z, yaw]},
                  {"tick": 1, "kind": "remove", "object_id": 4},
                  {"tick": 1, "kind": "add", "object_id": 9, "category": "mug", "room": "office",
                   "new_pose": [...], "mesh": "cylinder:0.04,0.1"}],
      "robot":   {"start": [x, y, theta], "body": [{"offset": [0, 0, 0.3], "radius": 0.2}],
                  "feet": [{"length": 0.22, "width": 0.1, "offset": [0, 0.1]}],
                  "com_offset": [0, 0, 0.9],
                  "reach": {"shoulder_offset": [0.1, 0, 1.0], "r_min": 0.25, "r_max": 0.85}},
      "query":   {"region": "office", "landmark": "table", "object": "mug"},
      "params":  {"confidence": {...}, "discrepancy": {...}, "tracking": {...},
                  "ips": {"delta_safe": 0.05}, "jitter": {...}, "sim": {...}}
    }

``pose`` is the object's centroid plus yaw.  ``mesh`` is either a builtin
(``box:sx,sy,sz`` or ``cylinder:r,h``, centred at the origin) or a path to an
OBJ/STL file relative to the scenario file.  Only ``seed``, ``rooms``,
``objects``, ``robot`` and ``query`` are required.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path


from ..appearance import ConfidenceParams
from ..errors import ScenarioError, TopologyError
from ..geometry.mesh import TriangleMesh, box, cylinder, load_mesh
from ..ips import DEFAULT_BODY, DEFAULT_FEET, Foot, ReachModel, Sphere
from ..navigation import TrackingParams
from ..spatial import DiscrepancyParams, Query

EVENT_KINDS = ("relocate", "remove", "add")


@dataclass(frozen=True)
class JitterModel:
    """Gait-induced instability: g = (amp0 + k_speed*v + k_curv*|kappa|) * (1 + eps).

    ``eps`` is small Gaussian noise except for a ``corrupt_frac`` share of
    primitives that get a large positive factor (motion-blurred evidence).
    """

    amp0: float = 0.01
    k_speed: float = 0.1
    k_curv: float = 0.02
    noise: float = 0.1
    corrupt_frac: float = 0.1
    corrupt_lo: float = 2.0
    corrupt_hi: float = 6.0
    pos_sigma: float = 1.0        # per-primitive position noise per unit g (m per unit g)
    common_sigma: float = 0.3     # shared offset per unit g
    phantom_rate: float = 0.02    # chance per tick of a single-tick spurious detection
    noise_seed: int = 0

    def __post_init__(self):
        for f in fields(self):
            if f.name != "noise_seed" and getattr(self, f.name) < 0:
                raise ValueError(f"jitter {f.name} must be non-negative")


@dataclass(frozen=True)
class SimParams:
    dt: float = 0.25
    max_ticks: int = 600
    fov_deg: float = 45.0         # half-angle
    fov_range: float = 4.0
    view_margin_deg: float = 5.0  # stored nodes count as in view only this far inside the wedge
    view_margin_m: float = 0.3
    camera_height: float = 1.2
    n_prims: int = 24
    grid_resolution: float = 0.1


@dataclass(frozen=True)
class ObjectSpec:
    id: int
    category: str
    room: str
    pose: tuple                   # (x, y, z, yaw); xyz is the centroid
    mesh: str
    height: float | None = None


@dataclass(frozen=True)
class EventSpec:
    tick: int
    kind: str
    object_id: int
    new_pose: tuple | None = None
    category: str | None = None
    room: str | None = None
    mesh: str | None = None


@dataclass(frozen=True)
class RobotSpec:
    start: tuple
    body: tuple = DEFAULT_BODY
    feet: tuple = DEFAULT_FEET
    com_offset: tuple = (0.0, 0.0, 0.9)
    reach: ReachModel = ReachModel()


@dataclass(frozen=True)
class ScenarioParams:
    confidence: ConfidenceParams = ConfidenceParams()
    discrepancy: DiscrepancyParams = DiscrepancyParams()
    tracking: TrackingParams = TrackingParams()
    delta_safe: float = 0.05
    jitter: JitterModel = JitterModel()
    sim: SimParams = SimParams()


@dataclass(frozen=True)
class Scenario:
    seed: int
    rooms: dict                   # name -> (N, 2) polygon as tuple of tuples
    objects: tuple
    robot: RobotSpec
    query: Query
    events: tuple = ()
    walls: tuple = ()             # ((lo xyz), (hi xyz)) boxes
    params: ScenarioParams = ScenarioParams()
    base_dir: str = "."
    label: str | None = None      # optional suite label ("relocation", "unchanged", ...)
    target_id: int | None = None  # optional ground-truth id of the queried object

    def with_seed(self, seed: int) -> "Scenario":
        from dataclasses import replace

        return replace(self, seed=int(seed))


# --- parsing helpers -----------------------------------------------------


def _req(doc, key, where):
    if not isinstance(doc, dict):
        raise ScenarioError("expected an object", where)
    if key not in doc:
        raise ScenarioError(f"missing required field '{key}'", where)
    return doc[key]


def _num(x, where, positive=False, nonneg=False):
    if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
        raise ScenarioError(f"expected a finite number, got {x!r}", where)
    if positive and x <= 0:
        raise ScenarioError(f"must be positive, got {x}", where)
    if nonneg and x < 0:
        raise ScenarioError(f"must be non-negative, got {x}", where)
    return float(x)


def _int(x, where):
    if isinstance(x, bool) or not isinstance(x, int):
        raise ScenarioError(f"expected an integer, got {x!r}", where)
    return int(x)


def _str(x, where):
    if not isinstance(x, str) or not x.strip():
        raise ScenarioError(f"expected a non-empty string, got {x!r}", where)
    return x


def _vec(x, n, where):
    if not isinstance(x, (list, tuple)) or len(x) != n:
        raise ScenarioError(f"expected a list of {n} numbers", where)
    return tuple(_num(v, f"{where}[{i}]") for i, v in enumerate(x))


def _params(cls, doc, where):
    if doc is None:
        return cls()
    if not isinstance(doc, dict):
        raise ScenarioError("expected an object", where)
    names = {f.name for f in fields(cls)}
    for k in doc:
        if k not in names:
            raise ScenarioError(f"unknown parameter '{k}'", f"{where}.{k}")
    try:
        return cls(**doc)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(str(exc), where) from exc


def parse_mesh_ref(ref: str, where: str = "mesh"):
    """Validate a mesh reference without loading files."""
    ref = _str(ref, where)
    if ref.startswith("box:") or ref.startswith("cylinder:"):
        kind, args = ref.split(":", 1)
        try:
            vals = [float(a) for a in args.split(",")]
        except ValueError as exc:
            raise ScenarioError(f"bad builtin mesh arguments '{args}'", where) from exc
        if len(vals) != (3 if kind == "box" else 2) or min(vals) <= 0:
            raise ScenarioError(f"'{ref}' needs {3 if kind == 'box' else 2} positive sizes", where)
        return kind, vals
    return "file", ref


_ASSET_CACHE: dict = {}


def asset_mesh(ref: str, base_dir: str = ".") -> TriangleMesh:
    """Mesh in the object's local frame (builtins are centred on the origin)."""
    kind, arg = parse_mesh_ref(ref)
    key = ref if kind != "file" else str((Path(base_dir) / arg).resolve())
    if key not in _ASSET_CACHE:
        if kind == "box":
            _ASSET_CACHE[key] = box(arg)
        elif kind == "cylinder":
            _ASSET_CACHE[key] = cylinder(arg[0], arg[1], segments=16)
        else:
            path = Path(key)
            if not path.exists():
                raise ScenarioError(f"mesh file '{arg}' not found", "mesh")
            try:
                _ASSET_CACHE[key] = load_mesh(path)
            except TopologyError as exc:
                raise ScenarioError(f"mesh '{arg}': {exc}", "mesh") from exc
    return _ASSET_CACHE[key]


def _object(doc, where) -> ObjectSpec:
    pose = _vec(_req(doc, "pose", where), 4, f"{where}.pose")
    height = doc.get("height")
    return ObjectSpec(
        id=_int(_req(doc, "id", where), f"{where}.id"),
        category=_str(_req(doc, "category", where), f"{where}.category"),
        room=_str(_req(doc, "room", where), f"{where}.room"),
        pose=pose,
        mesh=_str(_req(doc, "mesh", where), f"{where}.mesh"),
        height=None if height is None else _num(height, f"{where}.height", positive=True),
    )


def _event(doc, where) -> EventSpec:
    kind = _str(_req(doc, "kind", where), f"{where}.kind")
    if kind not in EVENT_KINDS:
        raise ScenarioError(f"unknown event kind '{kind}' (expected one of {', '.join(EVENT_KINDS)})", f"{where}.kind")
    tick = _int(_req(doc, "tick", where), f"{where}.tick")
    if tick < 0:
        raise ScenarioError("tick must be non-negative", f"{where}.tick")
    ev = EventSpec(tick=tick, kind=kind, object_id=_int(_req(doc, "object_id", where), f"{where}.object_id"))
    if kind in ("relocate", "add"):
        ev = EventSpec(**{**asdict(ev), "new_pose": _vec(_req(doc, "new_pose", where), 4, f"{where}.new_pose")})
    if kind == "add":
        ev = EventSpec(**{
            **asdict(ev),
            "category": _str(_req(doc, "category", where), f"{where}.category"),
            "room": _str(_req(doc, "room", where), f"{where}.room"),
            "mesh": _str(_req(doc, "mesh", where), f"{where}.mesh"),
        })
    return ev


def _robot(doc, where) -> RobotSpec:
    start = _vec(_req(doc, "start", where), 3, f"{where}.start")
    body = DEFAULT_BODY
    if "body" in doc:
        if not isinstance(doc["body"], list) or not doc["body"]:
            raise ScenarioError("body needs at least one sphere", f"{where}.body")
        body = tuple(
            Sphere(_vec(_req(s, "offset", f"{where}.body[{i}]"), 3, f"{where}.body[{i}].offset"),
                   _num(_req(s, "radius", f"{where}.body[{i}]"), f"{where}.body[{i}].radius", positive=True))
            for i, s in enumerate(doc["body"])
        )
    feet = DEFAULT_FEET
    if "feet" in doc:
        if not isinstance(doc["feet"], list) or len(doc["feet"]) != 2:
            raise ScenarioError("expected exactly two feet", f"{where}.feet")
        feet = tuple(
            Foot(_num(_req(f, "length", f"{where}.feet[{i}]"), f"{where}.feet[{i}].length", positive=True),
                 _num(_req(f, "width", f"{where}.feet[{i}]"), f"{where}.feet[{i}].width", positive=True),
                 _vec(_req(f, "offset", f"{where}.feet[{i}]"), 2, f"{where}.feet[{i}].offset"))
            for i, f in enumerate(doc["feet"])
        )
    com = _vec(doc.get("com_offset", [0.0, 0.0, 0.9]), 3, f"{where}.com_offset")
    reach = ReachModel()
    if "reach" in doc:
        r = doc["reach"]
        try:
            reach = ReachModel(
                shoulder_offset=_vec(r.get("shoulder_offset", list(reach.shoulder_offset)), 3, f"{where}.reach.shoulder_offset"),
                r_min=_num(r.get("r_min", reach.r_min), f"{where}.reach.r_min"),
                r_max=_num(r.get("r_max", reach.r_max), f"{where}.reach.r_max"),
            )
        except ValueError as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(str(exc), f"{where}.reach") from exc
    return RobotSpec(start, body, feet, com, reach)


def scenario_from_dict(doc: dict, base_dir: str = ".") -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a JSON object")
    seed = _int(_req(doc, "seed", ""), "seed")
    rooms_doc = _req(doc, "rooms", "")
    if not isinstance(rooms_doc, list) or not rooms_doc:
        raise ScenarioError("expected a non-empty list", "rooms")
    rooms = {}
    for i, r in enumerate(rooms_doc):
        name = _str(_req(r, "name", f"rooms[{i}]"), f"rooms[{i}].name")
        poly = _req(r, "polygon", f"rooms[{i}]")
        if not isinstance(poly, list) or len(poly) < 3:
            raise ScenarioError("polygon needs at least 3 vertices", f"rooms[{i}].polygon")
        if name in rooms:
            raise ScenarioError(f"duplicate room name '{name}'", f"rooms[{i}].name")
        rooms[name] = tuple(_vec(p, 2, f"rooms[{i}].polygon[{k}]") for k, p in enumerate(poly))

    walls = []
    for i, w in enumerate(doc.get("walls", [])):
        lo = _vec(_req(w, "min", f"walls[{i}]"), 3, f"walls[{i}].min")
        hi = _vec(_req(w, "max", f"walls[{i}]"), 3, f"walls[{i}].max")
        if any(h <= l for l, h in zip(lo, hi)):
            raise ScenarioError("wall box needs max > min on every axis", f"walls[{i}]")
        walls.append((lo, hi))

    objs_doc = _req(doc, "objects", "")
    if not isinstance(objs_doc, list):
        raise ScenarioError("expected a list", "objects")
    objects, seen = [], {}
    for i, o in enumerate(objs_doc):
        spec = _object(o, f"objects[{i}]")
        if spec.id in seen:
            raise ScenarioError(f"duplicate object id {spec.id} (first at objects[{seen[spec.id]}])", f"objects[{i}].id")
        if spec.room not in rooms:
            raise ScenarioError(f"unknown room '{spec.room}'", f"objects[{i}].room")
        parse_mesh_ref(spec.mesh, f"objects[{i}].mesh")
        seen[spec.id] = i
        objects.append(spec)

    events = []
    for i, e in enumerate(doc.get("events", [])):
        ev = _event(e, f"events[{i}]")
        if ev.kind == "add":
            parse_mesh_ref(ev.mesh, f"events[{i}].mesh")
            if ev.room not in rooms:
                raise ScenarioError(f"unknown room '{ev.room}'", f"events[{i}].room")
        events.append(ev)
    events.sort(key=lambda e: e.tick)

    robot = _robot(_req(doc, "robot", ""), "robot")
    q = _req(doc, "query", "")
    query = Query(
        region=_str(_req(q, "region", "query"), "query.region"),
        landmark=str(q.get("landmark", "") or ""),
        object=_str(_req(q, "object", "query"), "query.object"),
    )
    if query.region not in rooms:
        raise ScenarioError(f"unknown room '{query.region}'", "query.region")

    p = doc.get("params", {}) or {}
    if not isinstance(p, dict):
        raise ScenarioError("expected an object", "params")
    for k in p:
        if k not in ("confidence", "discrepancy", "tracking", "ips", "jitter", "sim"):
            raise ScenarioError(f"unknown parameter group '{k}'", f"params.{k}")
    ips_doc = p.get("ips", {}) or {}
    delta_safe = _num(ips_doc.get("delta_safe", 0.05), "params.ips.delta_safe", nonneg=True)
    params = ScenarioParams(
        confidence=_params(ConfidenceParams, p.get("confidence"), "params.confidence"),
        discrepancy=_params(DiscrepancyParams, p.get("discrepancy"), "params.discrepancy"),
        tracking=_params(TrackingParams, p.get("tracking"), "params.tracking"),
        delta_safe=delta_safe,
        jitter=_params(JitterModel, p.get("jitter"), "params.jitter"),
        sim=_params(SimParams, p.get("sim"), "params.sim"),
    )
    target = doc.get("target_id")
    return Scenario(
        seed=seed,
        rooms=rooms,
        objects=tuple(objects),
        robot=robot,
        query=query,
        events=tuple(events),
        walls=tuple(walls),
        params=params,
        base_dir=str(base_dir),
        label=doc.get("label"),
        target_id=None if target is None else _int(target, "target_id"),
    )


def load_scenario(source) -> Scenario:
    """Load from a path, a JSON string or an already-parsed dict."""
    if isinstance(source, dict):
        return scenario_from_dict(source)
    path = Path(source) if not (isinstance(source, str) and source.lstrip().startswith("{")) else None
    if path is not None:
        if not path.exists():
            raise ScenarioError(f"scenario file '{source}' not found")
        text, base = path.read_text(), path.parent
    else:
        text, base = source, Path(".")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(exc.msg, f"line {exc.lineno} column {exc.colno}") from exc
    return scenario_from_dict(doc, str(base))


def scenario_to_dict(s: Scenario) -> dict:
    """Inverse of :func:`scenario_from_dict` (defaults written out)."""

    def plain(x):
        if isinstance(x, tuple):
            return [plain(v) for v in x]
        return x

    doc = {
        "seed": s.seed,
        "rooms": [{"name": n, "polygon": plain(p)} for n, p in s.rooms.items()],
        "walls": [{"min": list(lo), "max": list(hi)} for lo, hi in s.walls],
        "objects": [
            {k: v for k, v in {"id": o.id, "category": o.category, "room": o.room, "pose": list(o.pose),
                               "mesh": o.mesh, "height": o.height}.items() if v is not None}
            for o in s.objects
        ],
        "events": [
            {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(e).items() if v is not None}
            for e in s.events
        ],
        "robot": {
            "start": list(s.robot.start),
            "body": [{"offset": list(b.offset), "radius": b.radius} for b in s.robot.body],
            "feet": [{"length": f.length, "width": f.width, "offset": list(f.offset)} for f in s.robot.feet],
            "com_offset": list(s.robot.com_offset),
            "reach": {"shoulder_offset": list(s.robot.reach.shoulder_offset),
                      "r_min": s.robot.reach.r_min, "r_max": s.robot.reach.r_max},
        },
        "query": {"region": s.query.region, "landmark": s.query.landmark, "object": s.query.object},
        "params": {
            "confidence": asdict(s.params.confidence),
            "discrepancy": asdict(s.params.discrepancy),
            "tracking": asdict(s.params.tracking),
            "ips": {"delta_safe": s.params.delta_safe},
            "jitter": asdict(s.params.jitter),
            "sim": asdict(s.params.sim),
        },
    }
    if s.label is not None:
        doc["label"] = s.label
    if s.target_id is not None:
        doc["target_id"] = s.target_id
    return doc


def dumps_scenario(s: Scenario) -> str:
    return json.dumps(scenario_to_dict(s), indent=1, sort_keys=False)
