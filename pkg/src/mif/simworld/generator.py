"""Seeded two-room scenarios and labelled suites for the experiments."""
from __future__ import annotations

import json
import math
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..errors import EmptySuite, ScenarioError
from .scenario import load_scenario, scenario_from_dict

LABELS = ("relocation", "removal", "addition", "unchanged")
ROOMS = {"kitchen": ((0.0, 0.0), (5.0, 0.0), (5.0, 5.0), (0.0, 5.0)),
         "study": ((5.0, 0.0), (10.0, 0.0), (10.0, 5.0), (5.0, 5.0))}
DOOR = (1.9, 3.1)
WALL_T = 0.1
WALL_H = 2.0
TABLE = (1.2, 0.7, 0.75)
WALL_CLEARANCE = 0.7
TABLE_GAP = 0.8
EDGE_OFFSET = (0.12, 0.18)     # target distance from the table edge
MIN_SHIFT = 1.5
# pairs near the next_to radius would flicker between views
AMBIGUOUS = (0.8, 1.2)

SMALL = {
    "mug": "cylinder:0.04,0.1",
    "bottle": "cylinder:0.035,0.25",
    "book": "box:0.2,0.15,0.04",
    "bowl": "cylinder:0.07,0.06",
    "laptop": "box:0.33,0.23,0.02",
    "plant": "cylinder:0.08,0.3",
}


def _height(mesh_ref: str) -> float:
    kind, args = mesh_ref.split(":")
    vals = [float(a) for a in args.split(",")]
    return vals[1] if kind == "cylinder" else vals[2]


def _half_xy(mesh_ref: str, yaw: float):
    kind, args = mesh_ref.split(":")
    vals = [float(a) for a in args.split(",")]
    if kind == "cylinder":
        return vals[0], vals[0]
    hx, hy = vals[0] / 2, vals[1] / 2
    return (hy, hx) if abs(math.sin(yaw)) > 0.5 else (hx, hy)


def walls():
    boxes = [
        ((-WALL_T, -WALL_T, 0.0), (10.0 + WALL_T, 0.0, WALL_H)),
        ((-WALL_T, 5.0, 0.0), (10.0 + WALL_T, 5.0 + WALL_T, WALL_H)),
        ((-WALL_T, 0.0, 0.0), (0.0, 5.0, WALL_H)),
        ((10.0, 0.0, 0.0), (10.0 + WALL_T, 5.0, WALL_H)),
        ((5.0 - WALL_T / 2, 0.0, 0.0), (5.0 + WALL_T / 2, DOOR[0], WALL_H)),
        ((5.0 - WALL_T / 2, DOOR[1], 0.0), (5.0 + WALL_T / 2, 5.0, WALL_H)),
    ]
    return [{"min": list(lo), "max": list(hi)} for lo, hi in boxes]


def _room_box(room):
    poly = np.array(ROOMS[room])
    return poly.min(axis=0), poly.max(axis=0)


def _place_tables(rng, room, n):
    lo, hi = _room_box(room)
    for _ in range(500):
        tables = []
        for _ in range(n):
            yaw = float(rng.choice([0.0, math.pi / 2]))
            hx, hy = (TABLE[1] / 2, TABLE[0] / 2) if yaw else (TABLE[0] / 2, TABLE[1] / 2)
            x = rng.uniform(lo[0] + WALL_CLEARANCE + hx, hi[0] - WALL_CLEARANCE - hx)
            y = rng.uniform(lo[1] + WALL_CLEARANCE + hy, hi[1] - WALL_CLEARANCE - hy)
            ok = all(
                max(abs(x - t[0]) - hx - t[3], abs(y - t[1]) - hy - t[4]) >= TABLE_GAP for t in tables
            )
            if not ok:
                break
            tables.append((x, y, yaw, hx, hy))
        if len(tables) == n:
            return tables
    raise ScenarioError(f"could not place {n} tables in {room}")


def _spot_on(rng, table, mesh_ref, yaw, edge=None):
    """A pose on a table top; ``edge`` pins the distance to the nearest long edge."""
    x, y, _, hx, hy = table
    ox, oy = _half_xy(mesh_ref, yaw)
    z = TABLE[2] + _height(mesh_ref) / 2
    if edge is not None:
        # along the long side, at the given inset from one of its edges
        if hx >= hy:
            px = rng.uniform(x - hx + 0.15, x + hx - 0.15)
            py = y + rng.choice([-1, 1]) * (hy - edge)
        else:
            py = rng.uniform(y - hy + 0.15, y + hy - 0.15)
            px = x + rng.choice([-1, 1]) * (hx - edge)
        return (float(px), float(py), z, yaw)
    px = rng.uniform(x - hx + ox + 0.1, x + hx - ox - 0.1)
    py = rng.uniform(y - hy + oy + 0.1, y + hy - oy - 0.1)
    return (float(px), float(py), z, yaw)


def _ok(pose, others, min_sep=0.3):
    for q in others:
        d = math.hypot(pose[0] - q[0], pose[1] - q[1])
        if d < min_sep or AMBIGUOUS[0] <= d <= AMBIGUOUS[1]:
            return False
    return True


def generate_scenario(seed: int, label: str, jitter: dict | None = None) -> dict:
    """Scenario document for one seed and change label.

    The queried category appears exactly once in the target room (never,
    before the event, for ``addition``).  Events fire at tick 1, after the
    stored map was built.
    """
    if label not in LABELS:
        raise ValueError(f"label must be one of {LABELS}")
    rng = np.random.default_rng([int(seed), LABELS.index(label), 2024])
    for _ in range(200):
        doc = _attempt(rng, int(seed), label)
        if doc is not None:
            if jitter:
                doc["params"]["jitter"].update(jitter)
            return doc
    raise ScenarioError(f"seed {seed}: layout sampling failed for '{label}'")


def _attempt(rng, seed, label):
    target_room = str(rng.choice(sorted(ROOMS)))
    other_room = next(r for r in sorted(ROOMS) if r != target_room)
    cats = sorted(SMALL)
    target_cat = str(rng.choice(cats))
    objects, next_id = [], 0
    table_sets = {
        target_room: _place_tables(rng, target_room, int(rng.integers(2, 4))),
        other_room: _place_tables(rng, other_room, int(rng.integers(1, 3))),
    }
    placed = []          # xy of every small object, for spacing
    for room, tables in table_sets.items():
        for t in tables:
            mesh = "box:" + ",".join(f"{v:g}" for v in TABLE)
            objects.append({"id": next_id, "category": "table", "room": room,
                            "pose": [t[0], t[1], TABLE[2] / 2, t[2]], "mesh": mesh})
            next_id += 1
    t_tables = table_sets[target_room]
    home = int(rng.integers(len(t_tables)))
    target_pose = _spot_on(rng, t_tables[home], SMALL[target_cat], 0.0, edge=rng.uniform(*EDGE_OFFSET))
    target_id = None
    if label != "addition":
        target_id = next_id
        objects.append({"id": next_id, "category": target_cat, "room": target_room,
                        "pose": list(target_pose), "mesh": SMALL[target_cat]})
        next_id += 1
    placed.append(target_pose)
    # clutter: other categories only in the target room
    for room, tables in table_sets.items():
        for t in tables:
            for _ in range(int(rng.integers(0, 2)) + (1 if room == target_room else 0)):
                choices = [c for c in cats if c != target_cat] if room == target_room else cats
                cat = str(rng.choice(choices))
                yaw = float(rng.choice([0.0, math.pi / 2]))
                pose = None
                for _ in range(30):
                    cand = _spot_on(rng, t, SMALL[cat], yaw)
                    if _ok(cand, placed):
                        pose = cand
                        break
                if pose is None:
                    continue
                placed.append(pose)
                objects.append({"id": next_id, "category": cat, "room": room, "pose": list(pose), "mesh": SMALL[cat]})
                next_id += 1
    events = []
    if label == "relocation":
        others = [k for k in range(len(t_tables)) if k != home]
        rng.shuffle(others)
        new = None
        for k in others:
            for _ in range(30):
                cand = _spot_on(rng, t_tables[k], SMALL[target_cat], 0.0, edge=rng.uniform(*EDGE_OFFSET))
                far = math.hypot(cand[0] - target_pose[0], cand[1] - target_pose[1]) > MIN_SHIFT
                if far and _ok(cand, placed[1:]):
                    new = cand
                    break
            if new:
                break
        if new is None:
            return None
        events.append({"tick": 1, "kind": "relocate", "object_id": target_id, "new_pose": list(new)})
    elif label == "removal":
        events.append({"tick": 1, "kind": "remove", "object_id": target_id})
    elif label == "addition":
        target_id = next_id
        events.append({"tick": 1, "kind": "add", "object_id": target_id, "new_pose": list(target_pose),
                       "category": target_cat, "room": target_room, "mesh": SMALL[target_cat]})
    start = _start(rng, other_room if rng.random() < 0.5 else target_room, table_sets)
    if start is None:
        return None
    return {
        "seed": seed,
        "label": label,
        "target_id": target_id,
        "rooms": [{"name": n, "polygon": [list(p) for p in poly]} for n, poly in ROOMS.items()],
        "walls": walls(),
        "objects": objects,
        "events": events,
        "robot": {"start": start},
        "query": {"region": target_room, "landmark": "table", "object": target_cat},
        "params": {"jitter": {}},
    }


def _start(rng, room, table_sets):
    lo, hi = _room_box(room)
    tables = [t for ts in table_sets.values() for t in ts]
    for _ in range(100):
        x, y = rng.uniform(lo[0] + 0.6, hi[0] - 0.6), rng.uniform(lo[1] + 0.6, hi[1] - 0.6)
        if all(max(abs(x - t[0]) - t[3], abs(y - t[1]) - t[4]) > 0.6 for t in tables):
            return [float(x), float(y), float(rng.uniform(-math.pi, math.pi))]
    return None


UNCHANGED_STRESS = {"noise": 0.3, "corrupt_frac": 0.2}


def write_suite(directory, counts: dict, seed0: int = 0, stress_unchanged: bool = False) -> Path:
    """Write scenario files and ``manifest.json`` listing each file's label."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for label in LABELS:
        for k in range(counts.get(label, 0)):
            seed = seed0 + k
            jitter = UNCHANGED_STRESS if stress_unchanged and label == "unchanged" else None
            doc = generate_scenario(seed, label, jitter)
            name = f"{label}_{seed:04d}.json"
            (out / name).write_text(json.dumps(doc, indent=1))
            entries.append({"file": name, "label": label})
    (out / "manifest.json").write_text(json.dumps({"scenarios": entries}, indent=1))
    return out


def load_suite(directory) -> list:
    """Scenarios in manifest order, each carrying its label."""
    d = Path(directory)
    man = d / "manifest.json"
    if not man.exists():
        raise ScenarioError(f"no manifest.json in '{directory}'")
    try:
        entries = json.loads(man.read_text()).get("scenarios", [])
    except json.JSONDecodeError as exc:
        raise ScenarioError(exc.msg, f"manifest.json line {exc.lineno} column {exc.colno}") from exc
    if not entries:
        raise EmptySuite(f"suite '{directory}' lists no scenarios")
    out = []
    for i, e in enumerate(entries):
        if e.get("label") not in LABELS:
            raise ScenarioError(f"unknown label {e.get('label')!r}", f"manifest.scenarios[{i}].label")
        s = load_scenario(d / e["file"])
        out.append(replace(s, label=e["label"]))
    return out


def suite_from_docs(docs) -> list:
    scns = [scenario_from_dict(d) for d in docs]
    if not scns:
        raise EmptySuite("empty suite")
    return scns
