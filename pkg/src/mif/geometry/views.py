"""Candidate viewpoints around a target and their task-local utility."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from ..errors import AssetNotFound, DegenerateView, EmptyInput
from .mesh import TriangleMesh, subdivide

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


@dataclass(frozen=True)
class Viewpoint:
    position: np.ndarray
    axis: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.axis, dtype=float)
        if abs(np.linalg.norm(a) - 1.0) > 1e-9:
            raise ValueError("optical axis must be a unit vector")


def sample_viewpoints(centroid, radius: float, n: int) -> list:
    """Fibonacci lattice on the upper hemisphere, axes aimed at ``centroid``.

    Heights follow z_i = 1 - i/n, so the first view sits straight above.
    """
    if radius <= 0 or n < 1:
        raise ValueError("radius must be positive and n at least 1")
    c = np.asarray(centroid, dtype=float)
    views = []
    for i in range(n):
        z = 1.0 - i / n
        rho = np.sqrt(max(0.0, 1.0 - z * z))
        phi = i * GOLDEN_ANGLE
        u = np.array([rho * np.cos(phi), rho * np.sin(phi), z])
        views.append(Viewpoint(c + radius * u, -u / np.linalg.norm(u)))
    return views


def viewpoint_utility(view: Viewpoint, centroid, neighborhood_omega, sigma_d: float = 1.0, gamma_view: float = 2.0) -> float:
    """Distance falloff times clamped alignment power times mean reliability."""
    omega = np.asarray(neighborhood_omega, dtype=float)
    if omega.size == 0:
        raise EmptyInput("no reliability values around the target")
    offset = np.asarray(centroid, dtype=float) - np.asarray(view.position, dtype=float)
    dist = float(np.linalg.norm(offset))
    if dist == 0.0:
        raise DegenerateView("viewpoint coincides with the target centroid")
    align = max(0.0, float(np.asarray(view.axis, dtype=float) @ (offset / dist)))
    return float(np.exp(-dist * dist / (2.0 * sigma_d * sigma_d)) * align ** gamma_view * omega.mean())


def rank_viewpoints(views, centroid, neighborhood_omega, sigma_d: float = 1.0, gamma_view: float = 2.0):
    """Views sorted by utility, best first; stable on ties."""
    q = np.array([viewpoint_utility(v, centroid, neighborhood_omega, sigma_d, gamma_view) for v in views])
    order = np.argsort(-q, kind="stable")
    return [views[i] for i in order], q[order]


def provide_mesh(assets: Mapping, object_id, sigma: float = 0.0, remesh: bool = False, seed: int = 0) -> TriangleMesh:
    """Ground-truth asset with seeded vertex jitter, truncated at 4 sigma.

    Jitter vectors longer than 4 sigma are redrawn.  ``remesh`` subdivides
    once before jittering so the perturbation lives on a denser surface.
    """
    if object_id not in assets:
        raise AssetNotFound(f"no mesh asset for object {object_id!r}")
    mesh = assets[object_id]
    if remesh:
        mesh = subdivide(mesh, 1)
    if sigma <= 0.0:
        return mesh
    rng = np.random.default_rng(seed)
    jitter = rng.normal(scale=sigma, size=mesh.vertices.shape)
    bad = np.linalg.norm(jitter, axis=1) > 4.0 * sigma
    while bad.any():
        jitter[bad] = rng.normal(scale=sigma, size=(int(bad.sum()), 3))
        bad = np.linalg.norm(jitter, axis=1) > 4.0 * sigma
    return TriangleMesh(mesh.vertices + jitter, mesh.triangles)
