"""Robot-side memory: primitive store plus scene graph, and how evidence enters it."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..appearance import AppearanceField, ConfidenceParams, composite, weighted_centroid
from ..errors import DegenerateWeight
from ..spatial import (
    DiscrepancyParams,
    SceneGraph,
    affected_region,
    build_local_graph,
    match_nodes,
    patch_graph,
)
from ..simworld.world import RawDetection, World

MAPPING_SPEEDS = (0.15, 0.3, 0.45)
MAPPING_RANGE = 1.5
SCAN_RING = 1.5
SCAN_POSES = 8
SCAN_MIN_VIEWS = 2


def perceive(raw: RawDetection, store: AppearanceField, params: ConfidenceParams):
    """Turn one detection's primitives into graph evidence.

    Returns ``(Detection, confidences)``.  The centroid and feature use only
    primitives at or above ``tau_conf``; reliability is the mean confidence
    over all of them, so a shaky view yields a low-reliability node.
    """
    from ..spatial import Detection

    c = store.confidence_of(raw.g, raw.alpha)
    keep = c >= params.tau_conf
    if not keep.any():
        keep = np.ones_like(keep)
    try:
        centroid = weighted_centroid(raw.positions[keep], c[keep], raw.alpha[keep])
    except DegenerateWeight:
        centroid = weighted_centroid(raw.positions[keep], np.ones(int(keep.sum())), raw.alpha[keep])
    order = np.argsort(raw.depth[keep], kind="stable")
    feat, _ = composite(c[keep][order], raw.alpha[keep][order], raw.features[keep][order])
    norm = np.linalg.norm(feat)
    if norm < 1e-12:
        feat = raw.features.mean(axis=0)
        norm = np.linalg.norm(feat)
    det = Detection(
        category=raw.category,
        room=raw.room,
        centroid=centroid,
        feature=feat / norm,
        confidences=c,
        size=raw.size,
        object_id=raw.object_id,
    )
    return det, c


def merge_raw(raws: list) -> RawDetection:
    first = raws[0]
    return RawDetection(
        object_id=first.object_id,
        category=first.category,
        room=first.room,
        positions=np.vstack([r.positions for r in raws]),
        alpha=np.concatenate([r.alpha for r in raws]),
        g=np.concatenate([r.g for r in raws]),
        features=np.vstack([r.features for r in raws]),
        depth=np.concatenate([r.depth for r in raws]),
        size=first.size,
    )


@dataclass
class Memory:
    graph: SceneGraph
    store: AppearanceField
    initial: SceneGraph
    conf: ConfidenceParams
    disc: DiscrepancyParams
    touched: set = field(default_factory=set)
    patches: int = 0

    def local_graph(self, raws):
        dets = [perceive(r, self.store, self.conf)[0] for r in raws]
        return build_local_graph(dets)

    def in_view(self, world: World, poses, min_views: int = 1) -> set:
        """Stored nodes that at least ``min_views`` of ``poses`` should have seen."""
        sp = world.params
        return {
            gid for gid, n in self.graph.nodes.items()
            if sum(world.in_view(p, n.centroid, sp.view_margin_deg, sp.view_margin_m) for p in poses) >= min_views
        }

    def support(self, node_id):
        """Stored primitives of a node that pass the confidence gate."""
        pos, alpha, g = self.store.support(node_id)
        if len(g) == 0:
            return pos
        c = self.store.confidence_of(g, alpha)
        keep = c >= self.conf.tau_conf
        return pos[keep] if keep.sum() >= 4 else pos


def build_memory(world: World) -> Memory:
    """Mapping pass over the pre-event world at mixed walking speeds.

    Every object is seen from three virtual poses, one per speed, so the
    store's global means of g and alpha reflect ordinary walking and live
    observations are judged against them.
    """
    scn = world.scenario
    store = AppearanceField(scn.params.confidence)
    per_object = []
    for oid in sorted(world.objects):
        o = world.objects[oid]
        raws = []
        for k, v in enumerate(MAPPING_SPEEDS):
            a = 2 * math.pi * (k / len(MAPPING_SPEEDS)) + 0.7 * oid
            cam = o.position + np.array([MAPPING_RANGE * math.cos(a), MAPPING_RANGE * math.sin(a), 0.0])
            cam[2] = world.params.camera_height
            pos, alpha, g, feats, depth = world._primitives(
                o.position, o.size, o.feature, world.g_base(v, 0.0), cam, world.params.n_prims
            )
            raws.append(RawDetection(o.id, o.category, o.room, pos, alpha, g, feats, depth, o.size.copy()))
        merged = merge_raw(raws)
        per_object.append(merged)
    # all primitives enter the store before any confidence is evaluated
    for node_id, raw in enumerate(per_object):
        store.fuse(raw.positions, raw.alpha, raw.g, np.full(len(raw.g), node_id))
    dets = [perceive(raw, store, scn.params.confidence)[0] for raw in per_object]
    graph = build_local_graph(dets)
    return Memory(graph, store, graph.copy(), scn.params.confidence, scn.params.discrepancy)


def ring_poses(center, radius: float = SCAN_RING, n: int = SCAN_POSES):
    c = np.asarray(center, dtype=float)
    out = []
    for k in range(n):
        a = 2 * math.pi * k / n
        x, y = c[0] + radius * math.cos(a), c[1] + radius * math.sin(a)
        out.append((x, y, math.atan2(c[1] - y, c[0] - x)))
    return out


def active_scan(world: World, memory: Memory, center):
    """Observe from a ring of stationary poses and patch the discrepant region.

    Detections must recur in at least two ring views; single-view
    detections (spurious ones included) are not used as evidence.
    Returns ``(region, evidence)``: the applied region and the scan graph.
    """
    poses = ring_poses(center)
    groups: dict = {}
    for p in poses:
        for raw in world.observe(p, 0.0, 0.0).detections:
            key = raw.object_id if raw.object_id is not None else ("phantom", id(raw))
            groups.setdefault(key, []).append(raw)
    merged = [merge_raw(v) for k, v in sorted(groups.items(), key=lambda kv: str(kv[0])) if len(v) >= SCAN_MIN_VIEWS]
    evidence_dets = [perceive(r, memory.store, memory.conf)[0] for r in merged]
    evidence = build_local_graph(evidence_dets)
    visible = memory.in_view(world, poses, SCAN_MIN_VIEWS)
    matching = match_nodes(evidence, memory.graph, memory.disc, in_view=visible)
    region = affected_region(evidence, memory.graph, matching, memory.disc)
    memory.graph = patch_graph(memory.graph, region, evidence)
    memory.patches += 1
    memory.touched |= region.global_ids
    # primitive support follows the graph: replaced nodes get the scan evidence
    memory.store.drop_objects({g for _, g in region.updates} | set(region.removals))
    for lid, gid in region.updates + region.inserts:
        raw = merged[lid]
        memory.store.fuse(raw.positions, raw.alpha, raw.g, np.full(len(raw.g), gid))
    return region, evidence
