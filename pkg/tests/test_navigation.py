from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from mif.errors import NoPath
from mif.navigation import (
    OccupancyGrid,
    TrackingParams,
    adaptive_velocity,
    astar,
    curvature,
    path_length,
    plan_path,
    pure_pursuit_step,
    s_curve,
    step_unicycle,
    track_path,
)

# --- planning -------------------------------------------------------------------


def test_open_floor_gives_straight_segment():
    grid = OccupancyGrid.empty(0, 0, 5, 5, 0.1)
    path = plan_path(grid, (0.5, 0.5), (4.5, 3.5), 0.3)
    assert len(path) == 2
    assert path_length(path) == pytest.approx(5.0)


def test_path_passes_through_the_gap():
    grid = OccupancyGrid.empty(0, 0, 6, 4, 0.1)
    grid.mark_box((2.9, 0.0), (3.1, 1.6))
    grid.mark_box((2.9, 2.4), (3.1, 4.0))
    path = plan_path(grid, (1.0, 0.5), (5.0, 0.5), 0.25)
    blocked = grid.inflated(0.25)
    # densely sample the polyline: it never enters the inflated band
    for a, b in zip(path[:-1], path[1:]):
        for t in np.linspace(0, 1, 50):
            assert not blocked[grid.to_cell(a + t * (b - a))]
    # where the polyline crosses the wall line x = 3
    ys = [a[1] + (3.0 - a[0]) / (b[0] - a[0]) * (b[1] - a[1]) for a, b in zip(path[:-1], path[1:])
          if (a[0] - 3.0) * (b[0] - 3.0) <= 0 and a[0] != b[0]]
    assert len(ys) == 1 and 1.6 < ys[0] < 2.4


def test_walled_off_goal_has_no_path():
    grid = OccupancyGrid.empty(0, 0, 4, 4, 0.1)
    grid.mark_box((2.0, 0.0), (2.1, 4.0))
    with pytest.raises(NoPath):
        plan_path(grid, (0.5, 0.5), (3.5, 3.5), 0.1)
    with pytest.raises(NoPath):
        plan_path(grid, (0.5, 0.5), (9.0, 9.0), 0.1)


def test_inflation_radius():
    grid = OccupancyGrid.empty(0, 0, 2, 2, 0.1)
    grid.mark_box((1.0, 1.0), (1.05, 1.05))
    infl = grid.inflated(0.2)
    assert infl[10, 10] and infl[12, 10] and not infl[13, 10]


@given(st.integers(0, 2**31))
def test_astar_is_optimal(seed):
    r = np.random.default_rng(seed)
    blocked = r.random((12, 12)) < 0.25
    blocked[0, 0] = blocked[11, 11] = False
    expect = oracles.grid_shortest(blocked, (0, 0), (11, 11))
    if math.isinf(expect):
        with pytest.raises(NoPath):
            astar(blocked, (0, 0), (11, 11))
        return
    cells, cost = astar(blocked, (0, 0), (11, 11))
    assert cost == pytest.approx(expect, abs=1e-9)
    for a, b in zip(cells[:-1], cells[1:]):
        assert max(abs(a[0] - b[0]), abs(a[1] - b[1])) == 1 and not blocked[b]


# --- control law -------------------------------------------------------------------


def test_curvature_examples():
    assert curvature(0.0, 0.5) == 0.0
    assert curvature(math.pi / 2, 0.5) == pytest.approx(4.0)
    assert curvature(-math.pi / 6, 1.0) == pytest.approx(-1.0)


@given(st.floats(-math.pi, math.pi), st.floats(0.3, 1.0))
def test_curvature_matches_transcription(dth, lookahead):
    assert curvature(dth, lookahead) == pytest.approx(oracles.kappa(dth, lookahead), abs=1e-12)


def test_velocity_examples():
    p = TrackingParams()
    v, lookahead = adaptive_velocity(0.0, p)
    assert v == pytest.approx(0.5) and lookahead == pytest.approx(0.7)
    v, lookahead = adaptive_velocity(0.5, p)
    assert v == 0.0 and lookahead == pytest.approx(0.5)
    v, _ = adaptive_velocity(0.1, p)
    assert v == pytest.approx(0.5 * 0.65)


@given(st.floats(0, math.pi), st.floats(0, math.pi))
def test_speed_falls_with_heading_error(a, b):
    lo, hi = sorted((a, b))
    p = TrackingParams()
    v_lo, l_lo = adaptive_velocity(lo, p)
    v_hi, l_hi = adaptive_velocity(hi, p)
    assert v_hi <= v_lo and p.L_min <= l_hi <= l_lo <= p.L_max


def test_bad_params_rejected():
    with pytest.raises(ValueError):
        TrackingParams(L_min=0.8, L0=0.5)
    with pytest.raises(ValueError):
        TrackingParams(v_max=0.0)


def test_on_path_step_goes_straight():
    cmd = pure_pursuit_step((0.0, 0.0, 0.0), np.array([[0.0, 0.0], [5.0, 0.0]]))
    assert cmd.v == pytest.approx(0.5) and cmd.omega == pytest.approx(0.0) and cmd.cross_track == 0.0


def test_large_error_turns_in_place():
    cmd = pure_pursuit_step((0.0, 0.0, math.pi), np.array([[0.0, 0.0], [5.0, 0.0]]))
    assert cmd.v == 0.0 and abs(cmd.omega) > 0


def test_unicycle_examples():
    assert step_unicycle((0, 0, 0), 1.0, 0.0, 2.0) == pytest.approx((2.0, 0.0, 0.0))
    x, y, th = step_unicycle((0, 0, 0), 1.0, 1.0, math.pi / 2)
    assert (x, y, th) == pytest.approx((1.0, 1.0, math.pi / 2))
    assert step_unicycle((1, 1, 0), 0.0, 1.0, 1.0) == pytest.approx((1.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        step_unicycle((0, 0, 0), 1.0, 0.0, 0.0)


# --- closed loop -----------------------------------------------------------------


def test_s_curve_geometry():
    p = s_curve(2.0)
    assert np.allclose(p[0], [0, 0]) and np.allclose(p[-1], [4, 4])
    assert path_length(p) == pytest.approx(2 * math.pi, rel=1e-4)


def test_s_curve_tracking_error_is_small():
    res = track_path(s_curve(), (0.0, 0.0, 0.0))
    assert res.arrived
    assert res.max_cross_track < 0.15


def test_adaptive_speed_damps_oscillation():
    a = track_path(s_curve(), (0.0, 0.0, 0.0), adaptive=True)
    b = track_path(s_curve(), (0.0, 0.0, 0.0), adaptive=False)
    assert b.arrived and a.arrived
    assert a.oscillation_rms() <= 0.7 * b.oscillation_rms()


def test_recovers_from_offset_start():
    res = track_path(s_curve(), (0.0, -0.4, 0.5))
    assert res.arrived
    assert res.cross_track[-20:].max() < 0.15
