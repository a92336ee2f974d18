from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from oracles import make_node, prototype, random_graph_pair
from mif.errors import InvalidRegion, NormalizationError, TargetNotFound
from mif.spatial import (
    NEXT_TO,
    ON,
    Detection,
    DiscrepancyParams,
    Matching,
    Query,
    Region,
    SceneGraph,
    affected_region,
    build_local_graph,
    derive_edges,
    match_nodes,
    node_discrepancy,
    node_terms,
    patch_graph,
    query_target,
    relational_term,
    total_discrepancy,
)

P = DiscrepancyParams()


def det(cat, xyz, size=(0.1, 0.1, 0.1), conf=(1.0,)):
    feat = prototype(cat if cat in oracles.CATEGORIES else "book")
    return Detection(cat, "kitchen", np.asarray(xyz, dtype=float), feat, np.asarray(conf), np.asarray(size))


def graph(nodes, edges=()):
    return SceneGraph({n.id: n for n in nodes}, set(edges))


def pair_graphs(shift=0.0, omega=1.0):
    """Table with a mug on it and a book next to it; the live mug may be shifted."""
    g = [make_node(0, (1, 1, 0.375), prototype("book"), 0.9, "table", size=(1.2, 0.7, 0.75)),
         make_node(1, (1, 1, 0.8), prototype("mug"), 0.9, "mug"),
         make_node(2, (3.5, 1, 0.4), prototype("plant"), 0.9, "plant")]
    glob = graph(g, derive_edges({n.id: n for n in g}))
    loc_nodes = [make_node(10 + n.id, n.centroid + (shift * (n.id == 1), 0, 0), n.feature, omega, n.caption,
                           size=n.size) for n in g]
    loc = graph(loc_nodes, derive_edges({n.id: n for n in loc_nodes}))
    return loc, glob


# --- construction -------------------------------------------------------------------


def test_no_detections_gives_empty_graph():
    g = build_local_graph([])
    assert len(g.nodes) == 0 and len(g.edges) == 0


def test_stacked_objects_get_on_edge():
    g = build_local_graph([det("table", (0, 0, 0.375), (1.2, 0.7, 0.75)), det("mug", (0, 0, 0.8), (0.08, 0.08, 0.1))])
    assert (1, ON, 0) in g.edges


def test_floor_neighbours_get_next_to_edge():
    g = build_local_graph([det("plant", (0, 0, 0.15)), det("bowl", (0.5, 0, 0.15))])
    assert (0, NEXT_TO, 1) in g.edges


def test_far_apart_objects_are_unrelated():
    g = build_local_graph([det("plant", (0, 0, 0.15)), det("bowl", (1.5, 0, 0.15))])
    assert not g.edges


def test_reliability_is_mean_confidence():
    g = build_local_graph([det("mug", (0, 0, 0), conf=(0.2, 0.8))])
    assert g.nodes[0].reliability == pytest.approx(0.5)


def test_graph_invariants_and_round_trip():
    loc, glob = pair_graphs()
    assert SceneGraph.loads(glob.dumps()).equals(glob)
    with pytest.raises(ValueError):
        SceneGraph({0: glob.nodes[0]}, {(0, ON, 5)})
    # symmetric relations are stored once
    a, b = make_node(0, (0, 0, 0), prototype("mug")), make_node(1, (0.3, 0, 0), prototype("mug"))
    assert len(SceneGraph({0: a, 1: b}, {(0, NEXT_TO, 1), (1, NEXT_TO, 0)}).edges) == 1


def test_discrepancy_defaults():
    assert (P.w_pos, P.w_sem, P.w_rel, P.tau) == (1.0, 0.5, 0.8, 0.45)
    with pytest.raises(ValueError):
        DiscrepancyParams(tau=0.0)
    with pytest.raises(ValueError):
        DiscrepancyParams(w_rel=-1.0)


# --- matching -------------------------------------------------------------------


def test_identical_graphs_match_perfectly():
    loc, glob = pair_graphs()
    m = match_nodes(loc, glob)
    assert len(m.pairs) == 3 and not m.unmatched_local and not m.unmatched_global


def test_node_beyond_gate_is_unmatched_local():
    loc, glob = pair_graphs()
    extra = make_node(99, (8, 8, 0.4), prototype("bowl"), 0.9, "bowl")
    loc = graph(list(loc.nodes.values()) + [extra], loc.edges)
    assert 99 in match_nodes(loc, glob).unmatched_local


def test_crossed_positions_pick_cheaper_assignment():
    f = prototype("mug")
    glob = graph([make_node(0, (0, 0, 0), f), make_node(1, (0.6, 0, 0), f)])
    loc = graph([make_node(5, (0.55, 0, 0), f), make_node(6, (0.1, 0, 0), f)])
    m = match_nodes(loc, glob)
    costs = []
    for perm in itertools.permutations([0, 1]):
        costs.append(sum(np.linalg.norm(loc.nodes[l].centroid - glob.nodes[g].centroid) for l, g in zip([5, 6], perm)))
    assert m.pairs == ((5, 1), (6, 0))
    assert m.cost == pytest.approx(min(costs))


def test_semantically_different_neighbour_is_not_matched():
    glob = graph([make_node(0, (0, 0, 0), prototype("book"), caption="book")])
    loc = graph([make_node(0, (0.1, 0, 0), prototype("laptop"), caption="laptop")])
    assert float(prototype("book") @ prototype("laptop")) < P.sem_gate
    m = match_nodes(loc, glob)
    assert not m.pairs and m.unmatched_local == (0,) and m.unmatched_global == (0,)


def test_in_view_limits_reported_missing_nodes():
    loc, glob = pair_graphs()
    loc = graph([loc.nodes[10]])
    m = match_nodes(loc, glob, in_view={1})
    assert m.unmatched_global == (1,)


@given(st.integers(0, 2**32 - 1))
def test_matching_is_optimal_against_exhaustive_search(seed):
    loc, glob = random_graph_pair(np.random.default_rng(seed))
    m = match_nodes(loc, glob)
    count, cost = oracles.best_assignment(loc, glob)
    assert len(m.pairs) == count
    assert m.cost == pytest.approx(cost, abs=1e-9)


# --- discrepancy -----------------------------------------------------------------


def test_node_discrepancy_examples():
    f = prototype("mug")
    a = make_node(0, (0, 0, 0), f)
    assert node_discrepancy(a, make_node(1, (0, 0, 0), f)) == 0.0
    assert node_discrepancy(a, make_node(1, (0.5, 0, 0), f)) == pytest.approx(0.5)
    # cos = 0.8 between e0 and 0.8 e0 + 0.6 e1
    e0, e1 = np.eye(32)[0], np.eye(32)[1]
    loc = make_node(0, (0, 0, 0), e0, omega=0.5)
    glob = make_node(1, (0.2, 0, 0), 0.8 * e0 + 0.6 * e1)
    assert node_discrepancy(loc, glob) == pytest.approx(0.15, abs=1e-12)


def test_node_discrepancy_needs_unit_features():
    from mif.spatial import GraphNode

    a = make_node(0, (0, 0, 0), prototype("mug"))
    bad = GraphNode(1, "mug", "kitchen", np.zeros(3), 1.0, 2 * prototype("mug"))
    with pytest.raises(NormalizationError):
        node_discrepancy(a, bad)


@given(st.floats(0.0, 0.5), st.floats(0, 3), st.integers(0, 2**31))
def test_node_discrepancy_linear_in_reliability(omega, shift, seed):
    r = np.random.default_rng(seed)
    fa, fb = r.normal(size=32), r.normal(size=32)
    g = make_node(1, (shift, 0, 0), fb)
    one = node_discrepancy(make_node(0, (0, 0, 0), fa, omega), g)
    two = node_discrepancy(make_node(0, (0, 0, 0), fa, 2 * omega), g)
    assert one >= 0.0
    assert two == pytest.approx(2 * one, abs=1e-12)


def test_total_discrepancy_examples():
    loc, glob = pair_graphs()
    assert total_discrepancy(loc, glob, match_nodes(loc, glob)) == pytest.approx(0.0, abs=1e-12)
    f = prototype("mug")
    single_l = graph([make_node(0, (0.5, 0, 0), f)])
    single_g = graph([make_node(7, (0, 0, 0), f)])
    assert total_discrepancy(single_l, single_g, match_nodes(single_l, single_g)) == pytest.approx(0.5)
    assert total_discrepancy(graph([]), single_g, Matching((), (), (7,))) == 0.0


def test_disjoint_edge_sets_give_full_relational_term():
    f = prototype("mug")
    nodes = [make_node(i, (0.3 * i, 0, 0), f) for i in range(3)]
    loc = graph(nodes, {(0, NEXT_TO, 1)})
    glob = graph(nodes, {(1, NEXT_TO, 2)})
    d = total_discrepancy(loc, glob, match_nodes(loc, glob))
    assert d == pytest.approx(0.8, abs=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_total_discrepancy_matches_transcription(seed):
    loc, glob = random_graph_pair(np.random.default_rng(seed))
    m = match_nodes(loc, glob)
    ours = total_discrepancy(loc, glob, m)
    ref = oracles.total_discrepancy(loc, glob, m.pairs, m.unmatched_local, m.unmatched_global)
    assert ours == pytest.approx(ref, abs=1e-9)
    assert 0.0 <= relational_term(loc, glob, m) <= P.w_rel + 1e-12


@given(st.integers(0, 2**32 - 1))
def test_zero_discrepancy_iff_consistent(seed):
    loc, glob = random_graph_pair(np.random.default_rng(seed))
    m = match_nodes(loc, glob)
    d = total_discrepancy(loc, glob, m)
    if not loc.nodes:
        # nothing observed, nothing to disagree with
        assert d == 0.0
        return
    terms = node_terms(loc, glob, m, P)
    consistent = (all(v == 0 for v in terms.values()) and not m.unmatched_local and not m.unmatched_global
                  and relational_term(loc, glob, m) == 0)
    assert (d == 0) == consistent
    same = graph(list(glob.nodes.values()), glob.edges)
    assert total_discrepancy(same, glob, match_nodes(same, glob)) == pytest.approx(0.0, abs=1e-12)


@given(st.integers(0, 2**32 - 1), st.floats(0.0, 0.1), st.floats(0.0, 2.0))
def test_low_reliability_views_stay_below_threshold(seed, omega, delta_u):
    params = DiscrepancyParams(delta_unmatched=delta_u)
    loc, glob = random_graph_pair(np.random.default_rng(seed))
    loc = graph([make_node(n.id, n.centroid, n.feature, omega, n.caption) for n in loc.nodes.values()], loc.edges)
    m = match_nodes(loc, glob, params)
    terms = node_terms(loc, glob, m, params)
    assert all(v <= 0.2 + 1e-12 for v in terms.values())
    if not m.unmatched_global and loc.nodes:
        assert sum(terms.values()) / len(loc.nodes) <= 0.2 + 1e-12 < params.tau


# --- affected region & patching ------------------------------------------------------


def test_identical_graphs_have_empty_region():
    loc, glob = pair_graphs()
    region = affected_region(loc, glob, match_nodes(loc, glob))
    assert not region


def test_relocated_node_region():
    params = DiscrepancyParams(gate_radius=3.0)
    loc, glob = pair_graphs(shift=2.0)
    m = match_nodes(loc, glob, params)
    region = affected_region(loc, glob, m, params)
    assert region.updates == ((11, 1),)
    assert not region.removals and not region.inserts
    assert glob.incident({1}) <= region.edges


def test_removed_node_region_and_patch():
    loc, glob = pair_graphs()
    loc = graph([loc.nodes[10], loc.nodes[12]])
    m = match_nodes(loc, glob)
    region = affected_region(loc, glob, m)
    assert region.removals == (1,)
    out = patch_graph(glob, region, loc)
    assert len(out.nodes) == len(glob.nodes) - 1
    assert 1 not in out.nodes and not out.incident({1})


def test_relocated_node_patch_keeps_everything_else():
    params = DiscrepancyParams(gate_radius=3.0)
    loc, glob = pair_graphs(shift=2.0)
    region = affected_region(loc, glob, match_nodes(loc, glob, params), params)
    out = patch_graph(glob, region, loc)
    assert np.array_equal(out.nodes[1].centroid, loc.nodes[11].centroid)
    for gid in (0, 2):
        assert out.nodes[gid].same_as(glob.nodes[gid])


def test_empty_region_is_identity():
    loc, glob = pair_graphs()
    assert patch_graph(glob, Region(), loc).equals(glob)


def test_unknown_ids_raise():
    loc, glob = pair_graphs()
    with pytest.raises(InvalidRegion):
        patch_graph(glob, Region(updates=((10, 42),)), loc)
    with pytest.raises(InvalidRegion):
        patch_graph(glob, Region(inserts=((77, 5),)), loc)


def test_relation_change_between_static_nodes_is_relinked():
    f = prototype("mug")
    nodes = [make_node(0, (0, 0, 0), f), make_node(1, (0.5, 0, 0), f)]
    glob = graph(nodes)
    loc = graph(nodes, {(0, NEXT_TO, 1)})
    region = affected_region(loc, glob, match_nodes(loc, glob))
    assert region.relinks == (("add", (0, NEXT_TO, 1)),)
    assert (0, NEXT_TO, 1) in patch_graph(glob, region, loc).edges


def check_patch(loc, glob, params=P):
    m = match_nodes(loc, glob, params)
    region = affected_region(loc, glob, m, params)
    once = patch_graph(glob, region, loc)
    twice = patch_graph(once, region, loc)
    assert twice.equals(once)
    touched = region.global_ids
    for gid, n in glob.nodes.items():
        if gid not in touched:
            assert once.nodes[gid].same_as(n)
    relinked = {e for _, e in region.relinks}
    for e in glob.edges:
        if e[0] not in touched and e[2] not in touched and e not in relinked:
            assert e in once.edges
    return region


@given(st.integers(0, 2**32 - 1))
def test_patch_is_idempotent_and_local(seed):
    loc, glob = random_graph_pair(np.random.default_rng(seed))
    check_patch(loc, glob)


# --- grounding -----------------------------------------------------------------------


def _kitchen():
    table = make_node(0, (1, 1, 0.375), prototype("book"), 0.9, "table", size=(1.2, 0.7, 0.75))
    mug = make_node(1, (1.2, 1, 0.8), prototype("mug"), 0.9, "mug")
    return table, mug


def test_query_unique_match():
    table, mug = _kitchen()
    g = graph([table, mug], {(1, ON, 0)})
    assert query_target(g, Query("kitchen", "table", "mug")).id == 1


def test_query_tie_goes_to_lower_id():
    table, mug = _kitchen()
    twin = make_node(5, (0.8, 1, 0.8), prototype("mug"), 0.9, "mug")
    g = graph([table, twin, mug], {(1, ON, 0), (5, ON, 0)})
    assert query_target(g, Query("kitchen", "table", "mug")).id == 1


def test_query_wrong_room_not_found():
    table, mug = _kitchen()
    g = graph([table, mug], {(1, ON, 0)})
    with pytest.raises(TargetNotFound):
        query_target(g, Query("study", "table", "mug"))
    with pytest.raises(TargetNotFound):
        query_target(g, Query("kitchen", "table", "plant"))


def test_query_without_landmark_uses_room_only():
    _, mug = _kitchen()
    assert query_target(graph([mug]), Query("kitchen", "", "mug")).id == 1
