"""Hierarchical scene-graph memory and map/reality discrepancy scoring."""
from __future__ import annotations

import difflib
import json
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping

import numpy as np
from scipy.optimize import linear_sum_assignment

from .appearance import node_reliability
from .errors import InvalidRegion, NormalizationError, TargetNotFound

ON, NEXT_TO = "on", "next_to"
SYMMETRIC_LABELS = frozenset({NEXT_TO})


@dataclass(frozen=True)
class DiscrepancyParams:
    w_pos: float = 1.0
    w_sem: float = 0.5
    w_rel: float = 0.8
    tau: float = 0.45
    gate_radius: float = 1.0
    sem_gate: float = 0.5         # pairs whose feature cosine falls below this are forbidden
    delta_unmatched: float = 1.0
    persistence_ticks: int = 3

    def __post_init__(self):
        if min(self.w_pos, self.w_sem, self.w_rel) < 0:
            raise ValueError("weights must be non-negative")
        if self.tau <= 0:
            raise ValueError("tau must be positive")


@dataclass(frozen=True)
class EdgeRules:
    """Geometric relation predicates standing in for a captioning model."""

    next_to_radius: float = 1.0
    on_gap: float = 0.1          # |bottom(upper) - top(lower)| tolerance, m
    on_margin: float = 0.05      # footprint slack, m
    min_stack: float = 0.05      # upper centroid must clear lower centroid by this


@dataclass(frozen=True)
class GraphNode:
    id: int
    caption: str
    room: str
    centroid: np.ndarray
    reliability: float
    feature: np.ndarray
    size: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if not 0.0 <= self.reliability <= 1.0:
            raise ValueError(f"node {self.id}: reliability {self.reliability} outside [0, 1]")

    def same_as(self, other: "GraphNode") -> bool:
        return (
            self.id == other.id
            and self.caption == other.caption
            and self.room == other.room
            and self.reliability == other.reliability
            and np.array_equal(self.centroid, other.centroid)
            and np.array_equal(self.feature, other.feature)
            and np.array_equal(self.size, other.size)
        )


def canonical_edge(src, label, dst):
    if label in SYMMETRIC_LABELS and _order_key(dst) < _order_key(src):
        src, dst = dst, src
    return (src, label, dst)


def _order_key(x):
    return (str(type(x)), x)


@dataclass
class SceneGraph:
    nodes: dict = field(default_factory=dict)
    edges: set = field(default_factory=set)
    rooms: set = field(default_factory=set)

    def __post_init__(self):
        self.edges = {canonical_edge(*e) for e in self.edges}
        for s, _, d in self.edges:
            if s not in self.nodes or d not in self.nodes:
                raise ValueError(f"edge ({s}, {d}) references a missing node")
        self.rooms = set(self.rooms) | {n.room for n in self.nodes.values()}

    def __len__(self):
        return len(self.nodes)

    def copy(self) -> "SceneGraph":
        return SceneGraph(dict(self.nodes), set(self.edges), set(self.rooms))

    def incident(self, ids) -> set:
        ids = set(ids)
        return {e for e in self.edges if e[0] in ids or e[2] in ids}

    def neighbours(self, node_id) -> set:
        out = set()
        for s, _, d in self.edges:
            if s == node_id:
                out.add(d)
            elif d == node_id:
                out.add(s)
        return out

    def equals(self, other: "SceneGraph") -> bool:
        if self.nodes.keys() != other.nodes.keys() or self.edges != other.edges or self.rooms != other.rooms:
            return False
        return all(self.nodes[k].same_as(other.nodes[k]) for k in self.nodes)

    # --- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        nodes = []
        for nid in sorted(self.nodes):
            n = self.nodes[nid]
            nodes.append(
                {
                    "id": int(n.id),
                    "caption": n.caption,
                    "room": n.room,
                    "centroid": [float(x) for x in n.centroid],
                    "omega": float(n.reliability),
                    "latent32": [float(x) for x in n.feature],
                    "size": [float(x) for x in n.size],
                }
            )
        edges = [{"src": int(s), "label": lab, "dst": int(d)} for s, lab, d in sorted(self.edges)]
        return {"rooms": sorted(self.rooms), "nodes": nodes, "edges": edges}

    @classmethod
    def from_dict(cls, doc: Mapping) -> "SceneGraph":
        nodes = {}
        for rec in doc.get("nodes", []):
            n = GraphNode(
                id=int(rec["id"]),
                caption=rec["caption"],
                room=rec["room"],
                centroid=np.asarray(rec["centroid"], dtype=float),
                reliability=float(rec["omega"]),
                feature=np.asarray(rec["latent32"], dtype=float),
                size=np.asarray(rec.get("size", [0.0, 0.0, 0.0]), dtype=float),
            )
            if n.id in nodes:
                raise ValueError(f"duplicate node id {n.id}")
            nodes[n.id] = n
        edges = {(int(e["src"]), e["label"], int(e["dst"])) for e in doc.get("edges", [])}
        return cls(nodes, edges, set(doc.get("rooms", [])))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def loads(cls, text: str) -> "SceneGraph":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Detection:
    """Oracle detection: what a captioner plus back-projection would report."""

    category: str
    room: str
    centroid: np.ndarray
    feature: np.ndarray
    confidences: np.ndarray
    size: np.ndarray = field(default_factory=lambda: np.zeros(3))
    object_id: int | None = None


def relation(upper: GraphNode, lower: GraphNode, rules: EdgeRules = EdgeRules()):
    """Relation label from ``upper`` to ``lower`` or ``None``."""
    d = upper.centroid - lower.centroid
    horiz = float(np.hypot(d[0], d[1]))
    if d[2] > rules.min_stack:
        bottom = upper.centroid[2] - upper.size[2] / 2
        top = lower.centroid[2] + lower.size[2] / 2
        inside = abs(d[0]) <= lower.size[0] / 2 + rules.on_margin and abs(d[1]) <= lower.size[1] / 2 + rules.on_margin
        if inside and abs(bottom - top) <= rules.on_gap:
            return ON
    if horiz < rules.next_to_radius:
        return NEXT_TO
    return None


def derive_edges(nodes: Mapping, rules: EdgeRules = EdgeRules()) -> set:
    ids = sorted(nodes)
    edges = set()
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            na, nb = nodes[a], nodes[b]
            if na.centroid[2] >= nb.centroid[2]:
                lab = relation(na, nb, rules)
                pair = (a, b)
            else:
                lab = relation(nb, na, rules)
                pair = (b, a)
            if lab is not None:
                edges.add(canonical_edge(pair[0], lab, pair[1]))
    return edges


def build_local_graph(detections: Iterable[Detection], rules: EdgeRules = EdgeRules(), first_id: int = 0) -> SceneGraph:
    nodes = {}
    for k, det in enumerate(detections):
        nid = first_id + k
        feat = np.asarray(det.feature, dtype=float)
        nodes[nid] = GraphNode(
            id=nid,
            caption=det.category,
            room=det.room,
            centroid=np.asarray(det.centroid, dtype=float),
            reliability=node_reliability(det.confidences),
            feature=feat / np.linalg.norm(feat),
            size=np.asarray(det.size, dtype=float),
        )
    return SceneGraph(nodes, derive_edges(nodes, rules))


# --- matching & discrepancy ---------------------------------------------


@dataclass(frozen=True)
class Matching:
    pairs: tuple                  # ((local_id, global_id), ...)
    unmatched_local: tuple
    unmatched_global: tuple       # only those considered observable
    cost: float = 0.0

    def local_to_global(self) -> dict:
        return dict(self.pairs)


def _cos(a, b) -> float:
    return float(np.dot(a, b))


def _check_unit(f, who):
    n = float(np.linalg.norm(f))
    if abs(n - 1.0) > 1e-9:
        raise NormalizationError(f"{who} feature has norm {n}")


def pair_cost(a: GraphNode, b: GraphNode, params: DiscrepancyParams) -> float:
    return params.w_pos * float(np.linalg.norm(a.centroid - b.centroid)) + params.w_sem * (1.0 - _cos(a.feature, b.feature))


def match_nodes(local: SceneGraph, global_: SceneGraph, params: DiscrepancyParams = DiscrepancyParams(), in_view=None) -> Matching:
    """Gated minimum-cost one-to-one assignment.

    Pairs further apart than ``gate_radius`` or with feature cosine below
    ``sem_gate`` are forbidden.  Among the
    assignments with the most admissible pairs the cheapest one is chosen.
    ``in_view`` restricts which unmatched global nodes are reported (those the
    current observation should have seen); ``None`` reports all of them.
    """
    lids = sorted(local.nodes)
    gids = sorted(global_.nodes)
    pairs = []
    total = 0.0
    if lids and gids:
        lc = np.array([local.nodes[i].centroid for i in lids])
        gc = np.array([global_.nodes[j].centroid for j in gids])
        lf = np.array([local.nodes[i].feature for i in lids])
        gf = np.array([global_.nodes[j].feature for j in gids])
        dist = np.linalg.norm(lc[:, None, :] - gc[None, :, :], axis=2)
        cos = lf @ gf.T
        cost = params.w_pos * dist + params.w_sem * (1.0 - cos)
        allowed = (dist <= params.gate_radius) & (cos >= params.sem_gate)
        if allowed.any():
            # one forbidden pair outweighs every admissible pair combined, so
            # cardinality is maximised before cost
            big = 1.0 + cost[allowed].sum()
            padded = np.where(allowed, cost, big)
            rows, cols = linear_sum_assignment(padded)
            for r, c in zip(rows, cols):
                if allowed[r, c]:
                    pairs.append((lids[r], gids[c]))
                    total += float(cost[r, c])
    matched_l = {p[0] for p in pairs}
    matched_g = {p[1] for p in pairs}
    un_l = tuple(i for i in lids if i not in matched_l)
    un_g = tuple(j for j in gids if j not in matched_g and (in_view is None or j in in_view))
    return Matching(tuple(sorted(pairs)), un_l, un_g, total)


def node_discrepancy(local_node: GraphNode, global_node: GraphNode, params: DiscrepancyParams = DiscrepancyParams()) -> float:
    _check_unit(local_node.feature, f"local node {local_node.id}")
    _check_unit(global_node.feature, f"global node {global_node.id}")
    shift = float(np.linalg.norm(local_node.centroid - global_node.centroid))
    # rounding can push the cosine of equal unit vectors past 1
    drift = max(0.0, 1.0 - _cos(local_node.feature, global_node.feature))
    return local_node.reliability * (params.w_pos * shift + params.w_sem * drift)


def view_reliability(local: SceneGraph) -> float:
    if not local.nodes:
        return 0.0
    return float(np.mean([n.reliability for n in local.nodes.values()]))


def node_terms(local: SceneGraph, global_: SceneGraph, matching: Matching, params: DiscrepancyParams) -> dict:
    """Per-node contributions keyed by ``("pair"|"local"|"global", id)``."""
    out = {}
    for lid, gid in matching.pairs:
        out[("pair", lid)] = node_discrepancy(local.nodes[lid], global_.nodes[gid], params)
    for lid in matching.unmatched_local:
        out[("local", lid)] = params.delta_unmatched * local.nodes[lid].reliability
    # a missing node is only as trustworthy as the view that failed to see it
    omega_view = view_reliability(local)
    for gid in matching.unmatched_global:
        out[("global", gid)] = params.delta_unmatched * omega_view
    return out


def resolved_edges(local: SceneGraph, global_: SceneGraph, matching: Matching):
    """Edge sets in a shared namespace.

    Local endpoints resolve to their matched global id; unmatched local nodes
    keep a local-only identity.  Global edges are restricted to the observed
    part of the stored graph (matched or reported-unmatched nodes).
    """
    l2g = matching.local_to_global()

    def res_l(i):
        return ("g", l2g[i]) if i in l2g else ("l", i)

    e_loc = {canonical_edge(res_l(s), lab, res_l(d)) for s, lab, d in local.edges}
    observed = set(l2g.values()) | set(matching.unmatched_global)
    e_glob = {
        canonical_edge(("g", s), lab, ("g", d))
        for s, lab, d in global_.edges
        if s in observed and d in observed
    }
    return e_loc, e_glob


def relational_term(local, global_, matching, params: DiscrepancyParams = DiscrepancyParams()) -> float:
    e_loc, e_glob = resolved_edges(local, global_, matching)
    union = e_loc | e_glob
    if not union:
        return 0.0
    return params.w_rel * len(e_loc ^ e_glob) / len(union)


def total_discrepancy(local: SceneGraph, global_: SceneGraph, matching: Matching, params: DiscrepancyParams = DiscrepancyParams()) -> float:
    if not local.nodes:
        return 0.0
    node_sum = sum(node_terms(local, global_, matching, params).values())
    return node_sum / len(local.nodes) + relational_term(local, global_, matching, params)


# --- affected region & patching -----------------------------------------


@dataclass(frozen=True)
class Region:
    updates: tuple = ()      # ((local_id, global_id), ...) matched pairs with delta > tau
    removals: tuple = ()     # global ids no longer supported by evidence
    inserts: tuple = ()      # ((local_id, new_global_id), ...)
    id_map: tuple = ()       # every local -> global correspondence, for edge translation
    edges: frozenset = frozenset()
    relinks: tuple = ()      # (("add"|"drop", edge), ...) between matched nodes left in place

    def __bool__(self):
        return bool(self.updates or self.removals or self.inserts or self.relinks)

    @property
    def global_ids(self) -> set:
        return {g for _, g in self.updates} | set(self.removals) | {g for _, g in self.inserts}

    @property
    def local_ids(self) -> set:
        return {l for l, _ in self.updates} | {l for l, _ in self.inserts}


def affected_region(local: SceneGraph, global_: SceneGraph, matching: Matching, params: DiscrepancyParams = DiscrepancyParams()) -> Region:
    updates = tuple(
        (lid, gid)
        for lid, gid in matching.pairs
        if node_discrepancy(local.nodes[lid], global_.nodes[gid], params) > params.tau
    )
    removals = tuple(sorted(matching.unmatched_global))
    next_id = max(global_.nodes, default=-1) + 1
    inserts = tuple((lid, next_id + k) for k, lid in enumerate(sorted(matching.unmatched_local)))
    id_map = tuple(sorted(matching.pairs + inserts))
    g_ids = {g for _, g in updates} | set(removals)
    l_ids = {l for l, _ in updates} | {l for l, _ in inserts}
    edges = frozenset(global_.incident(g_ids)) | frozenset(("local",) + e for e in local.incident(l_ids))
    # relations that changed while both endpoints stayed put
    l2g = {l: g for l, g in matching.pairs if g not in g_ids}
    kept = set(l2g.values())
    e_loc = {canonical_edge(l2g[a], lab, l2g[b]) for a, lab, b in local.edges if a in l2g and b in l2g}
    e_glob = {e for e in global_.edges if e[0] in kept and e[2] in kept}
    relinks = tuple(sorted((("add", e) for e in e_loc - e_glob), key=_edge_key)) + tuple(
        sorted((("drop", e) for e in e_glob - e_loc), key=_edge_key)
    )
    return Region(updates, removals, inserts, id_map, edges | {e for _, e in relinks}, relinks)


def _edge_key(item):
    _, (a, lab, b) = item
    return (_order_key(a), lab, _order_key(b))


def patch_graph(global_: SceneGraph, region: Region, local_evidence: SceneGraph) -> SceneGraph:
    """Replace the region of ``global_`` with ``local_evidence``.

    Nodes and edges outside the region come through untouched.  Applying the
    same patch twice gives the same graph as applying it once.
    """
    for lid, gid in region.updates:
        if gid not in global_.nodes:
            raise InvalidRegion(f"global node {gid} not in graph")
        if lid not in local_evidence.nodes:
            raise InvalidRegion(f"local node {lid} not in evidence")
    for lid, _ in region.inserts:
        if lid not in local_evidence.nodes:
            raise InvalidRegion(f"local node {lid} not in evidence")

    nodes = dict(global_.nodes)
    for lid, gid in region.updates + region.inserts:
        nodes[gid] = replace(local_evidence.nodes[lid], id=gid)
    for gid in region.removals:
        nodes.pop(gid, None)

    touched = region.global_ids
    edges = {e for e in global_.edges if e[0] not in touched and e[2] not in touched}
    l2g = dict(region.id_map)
    for s, lab, d in local_evidence.incident(region.local_ids):
        if s in l2g and d in l2g and l2g[s] in nodes and l2g[d] in nodes:
            edges.add(canonical_edge(l2g[s], lab, l2g[d]))
    for op, e in region.relinks:
        if op == "drop":
            edges.discard(e)
        elif e[0] in nodes and e[2] in nodes:
            edges.add(e)
    rooms = set(global_.rooms) | {nodes[g].room for g in touched if g in nodes}
    return SceneGraph(nodes, edges, rooms)


# --- grounding -----------------------------------------------------------


@dataclass(frozen=True)
class Query:
    region: str
    landmark: str
    object: str


def _caption_score(caption: str, term: str) -> float:
    a, b = caption.strip().lower(), term.strip().lower()
    if a == b:
        return 1.0
    return difflib.SequenceMatcher(None, a, b).ratio()


def landmark_nodes(graph: SceneGraph, region: str, landmark: str, min_score: float = 0.8) -> list:
    room = region.strip().lower()
    return sorted(
        n.id
        for n in graph.nodes.values()
        if n.room.lower() == room and landmark and _caption_score(n.caption, landmark) >= min_score
    )


def query_target(graph: SceneGraph, query: Query, embed: Callable | None = None, min_score: float = 0.8) -> GraphNode:
    """Room, then landmark adjacency, then best object match; lowest id wins ties."""
    room = query.region.strip().lower()
    cands = [n for n in graph.nodes.values() if n.room.lower() == room]
    if query.landmark:
        marks = set(landmark_nodes(graph, query.region, query.landmark, min_score))
        near = set()
        for m in marks:
            near |= graph.neighbours(m)
        cands = [n for n in cands if n.id in near and n.id not in marks]
    probe = None if embed is None else np.asarray(embed(query.object), dtype=float)
    best, best_key = None, None
    for n in cands:
        s = _caption_score(n.caption, query.object)
        if s < min_score:
            continue
        sim = 0.0 if probe is None else float(np.dot(n.feature, probe))
        key = (-s, -sim, n.id)
        if best_key is None or key < best_key:
            best, best_key = n, key
    if best is None:
        raise TargetNotFound(f"no '{query.object}' near '{query.landmark}' in '{query.region}'")
    return best
