from __future__ import annotations

import copy
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mif.errors import EmptySuite, EventError, ScenarioError
from mif.ips import StancePose
from mif.simworld import (
    TaskOutcome,
    World,
    adjudicate,
    dumps_scenario,
    generate_scenario,
    load_scenario,
    load_suite,
    write_suite,
)
from mif.simworld.scenario import EventSpec


def minimal():
    """One room, one table with a mug, robot facing the table."""
    return {
        "seed": 3,
        "rooms": [{"name": "kitchen", "polygon": [[0, 0], [6, 0], [6, 4], [0, 4]]}],
        "objects": [
            {"id": 0, "category": "table", "room": "kitchen", "pose": [3, 2, 0.375, 0], "mesh": "box:1.2,0.7,0.75"},
            {"id": 1, "category": "mug", "room": "kitchen", "pose": [2.7, 2, 0.8, 0], "mesh": "cylinder:0.04,0.1"},
        ],
        "robot": {"start": [1.0, 2.0, 0.0]},
        "query": {"region": "kitchen", "landmark": "table", "object": "mug"},
    }


# --- loading ---------------------------------------------------------------------


def test_minimal_scenario_loads():
    s = load_scenario(minimal())
    assert s.seed == 3 and len(s.objects) == 2 and s.query.object == "mug"
    assert s.params.discrepancy.tau == 0.45
    assert load_scenario(json.dumps(minimal())).objects == s.objects


def test_example_files_load(relocation_path, unchanged_path):
    assert load_scenario(relocation_path).label == "relocation"
    assert load_scenario(unchanged_path).events == ()


def test_round_trip_through_text():
    s = load_scenario(minimal())
    again = load_scenario(dumps_scenario(s))
    assert again.objects == s.objects and again.robot == s.robot and again.params == s.params


def test_duplicate_id_names_the_field():
    doc = minimal()
    doc["objects"][1]["id"] = 0
    with pytest.raises(ScenarioError) as e:
        load_scenario(doc)
    assert e.value.where == "objects[1].id"


@pytest.mark.parametrize("mutate, where", [
    (lambda d: d.pop("robot"), ""),
    (lambda d: d["objects"][0].update(room="attic"), "objects[0].room"),
    (lambda d: d["objects"][0].update(pose=[1, 2]), "objects[0].pose"),
    (lambda d: d["objects"][1].update(mesh="box:1,2"), "objects[1].mesh"),
    (lambda d: d.update(params={"discrepancy": {"tau": -1}}), "params.discrepancy"),
    (lambda d: d.update(params={"discrepancy": {"bogus": 1}}), "params.discrepancy.bogus"),
    (lambda d: d.update(events=[{"tick": 1, "kind": "teleport", "object_id": 1}]), "events[0].kind"),
    (lambda d: d["query"].update(region="garage"), "query.region"),
])
def test_invalid_documents(mutate, where):
    doc = minimal()
    mutate(doc)
    with pytest.raises(ScenarioError) as e:
        load_scenario(doc)
    assert (e.value.where or "") == where


def test_syntax_error_reports_line():
    with pytest.raises(ScenarioError) as e:
        load_scenario('{"seed": 1,\n "rooms": [}')
    assert e.value.where.startswith("line 2")


def test_missing_file(tmp_path):
    with pytest.raises(ScenarioError):
        load_scenario(tmp_path / "nope.json")


def test_observations_are_seeded():
    s = load_scenario(minimal())
    a = World(s).observe((1.0, 2.0, 0.0), 0.3, 0.5)
    b = World(s).observe((1.0, 2.0, 0.0), 0.3, 0.5)
    assert [d.object_id for d in a.detections] == [d.object_id for d in b.detections]
    for x, y in zip(a.detections, b.detections):
        assert np.array_equal(x.positions, y.positions) and np.array_equal(x.g, y.g)
    c = World(s.with_seed(4)).observe((1.0, 2.0, 0.0), 0.3, 0.5)
    assert not np.array_equal(a.detections[0].positions, c.detections[0].positions)


# --- observation ---------------------------------------------------------------


def test_facing_table_sees_both_objects():
    w = World(load_scenario(minimal()))
    obs = w.observe((1.0, 2.0, 0.0), phantoms=False)
    assert sorted(d.object_id for d in obs.detections) == [0, 1]
    assert all(len(d.positions) == w.params.n_prims for d in obs.detections)


def test_facing_away_sees_nothing():
    w = World(load_scenario(minimal()))
    assert w.observe((1.0, 2.0, math.pi), phantoms=False).detections == []


def test_wall_blocks_view():
    doc = minimal()
    doc["walls"] = [{"min": [1.8, 0, 0], "max": [1.9, 4, 2]}]
    w = World(load_scenario(doc))
    assert w.observe((1.0, 2.0, 0.0), phantoms=False).detections == []


def test_standing_still_gives_base_instability():
    w = World(load_scenario(minimal()))
    assert w.g_base(0.0, 0.0) == pytest.approx(0.01)
    assert w.g_base(0.5, 2.0) == pytest.approx(0.01 + 0.05 + 0.04)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 3), st.floats(0, 3))
def test_instability_grows_with_speed_and_turning(v1, v2, k1, k2):
    w = World(load_scenario(minimal()))
    assert w.g_base(max(v1, v2), max(k1, k2)) >= w.g_base(min(v1, v2), min(k1, k2))


# --- events ------------------------------------------------------------------


def test_events_fire_once_in_order():
    doc = minimal()
    doc["events"] = [
        {"tick": 5, "kind": "remove", "object_id": 1},
        {"tick": 2, "kind": "add", "object_id": 9, "new_pose": [4, 1, 0.2, 0], "category": "plant",
         "room": "kitchen", "mesh": "cylinder:0.1,0.4"},
    ]
    w = World(load_scenario(doc))
    assert w.advance(1) == []
    assert [e.kind for e in w.advance(3)] == ["add"]
    assert 9 in w.objects
    assert [e.kind for e in w.advance(10)] == ["remove"]
    assert 1 not in w.objects and 1 in w.removed
    assert w.advance(20) == []


def test_bad_events_raise():
    w = World(load_scenario(minimal()))
    with pytest.raises(EventError):
        w.apply_event(EventSpec(1, "remove", 42))
    with pytest.raises(EventError):
        w.apply_event(EventSpec(1, "add", 1, (1, 1, 0.2, 0), "mug", "kitchen", "cylinder:0.04,0.1"))


# --- adjudication -------------------------------------------------------------------


def test_safe_stance_near_target_succeeds():
    w = World(load_scenario(minimal()))
    ok, reason, diag = adjudicate(w, TaskOutcome("arrived", StancePose(2.1, 2.0, 0.0)))
    assert ok, reason
    assert diag.i_col and diag.i_ik and diag.i_stab


def test_stale_coordinates_fail():
    doc = minimal()
    doc["events"] = [{"tick": 1, "kind": "relocate", "object_id": 1, "new_pose": [5.5, 0.5, 0.05, 0]}]
    w = World(load_scenario(doc))
    w.advance(1)
    ok, reason, _ = adjudicate(w, TaskOutcome("arrived", StancePose(2.1, 2.0, 0.0)))
    assert not ok and "from the target" in reason


def test_removed_report_judged_against_truth():
    doc = minimal()
    doc["events"] = [{"tick": 1, "kind": "remove", "object_id": 1}]
    w = World(load_scenario(doc))
    assert not adjudicate(w, TaskOutcome("removed-report"))[0]
    w.advance(1)
    assert adjudicate(w, TaskOutcome("removed-report"))[0]


def test_colliding_stance_fails():
    w = World(load_scenario(minimal()))
    ok, reason, diag = adjudicate(w, TaskOutcome("arrived", StancePose(2.3, 2.0, 0.0)))
    assert not ok and not diag.i_col


def test_penetration_measure():
    w = World(load_scenario(minimal()))
    assert w.penetration(StancePose(1.5, 2.0, 0.0)) == 0.0
    assert w.penetration(StancePose(2.5, 2.0, 0.0)) == pytest.approx(0.3, abs=1e-9)


# --- generator & suites ------------------------------------------------------------


@settings(max_examples=20)
@given(st.integers(0, 10_000))
def test_generated_relocations_move_far(seed):
    doc = generate_scenario(seed, "relocation")
    s = load_scenario(doc)
    w = World(s)
    w.advance(s.events[0].tick)
    assert w.history[0]["shift_m"] > 1.5


def test_generator_is_deterministic():
    assert generate_scenario(7, "addition") == generate_scenario(7, "addition")
    assert generate_scenario(7, "addition") != generate_scenario(8, "addition")
    with pytest.raises(ValueError):
        generate_scenario(0, "teleport")


def test_generated_labels_have_matching_events():
    kinds = {"relocation": ["relocate"], "removal": ["remove"], "addition": ["add"], "unchanged": []}
    for label, expect in kinds.items():
        s = load_scenario(generate_scenario(1, label))
        assert [e.kind for e in s.events] == expect


def test_suite_round_trip(tmp_path):
    write_suite(tmp_path, {"relocation": 2, "unchanged": 1}, seed0=10, stress_unchanged=True)
    suite = load_suite(tmp_path)
    assert [s.label for s in suite] == ["relocation", "relocation", "unchanged"]
    assert suite[2].params.jitter.noise == 0.3


def test_suite_errors(tmp_path):
    with pytest.raises(ScenarioError):
        load_suite(tmp_path)
    (tmp_path / "manifest.json").write_text(json.dumps({"scenarios": []}))
    with pytest.raises(EmptySuite):
        load_suite(tmp_path)
    (tmp_path / "manifest.json").write_text(json.dumps({"scenarios": [{"file": "x.json", "label": "odd"}]}))
    with pytest.raises(ScenarioError):
        load_suite(tmp_path)


def test_documents_are_not_mutated():
    doc = minimal()
    before = copy.deepcopy(doc)
    load_scenario(doc)
    assert doc == before
