"""Scale-aware robust ICP.

Each iteration pairs every source point with its nearest target point, then
solves the weighted similarity (s, R, t) in closed form.  Huber weights make
this iteratively reweighted least squares; the weighted quadratic majorizes
the Huber loss at the current residuals, so the robust objective never goes
up between iterations.

Registration runs in two stages.  The first uses all source points.  Then
source points whose nearest target does not point back at them (no
reciprocal partner) are dropped once, and the second stage refines on the
remaining subset.  Dropping points whose partner region is missing or
replaced in the target removes the bias they exert on the fit even when
their residuals stay below the Huber knee.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ..errors import DegenerateGeometry

REL_TOL = 1e-8
MIN_SCALE = 1e-6


@dataclass(frozen=True)
class SimilarityTransform:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    scale: float = 1.0

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ValueError("rotation must be 3x3 and translation a 3-vector")
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-9) or np.linalg.det(r) <= 0:
            raise ValueError("rotation is not a proper orthonormal matrix")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "scale", float(self.scale))

    def apply(self, points):
        return self.scale * np.asarray(points, dtype=float) @ self.rotation.T + self.translation

    def inverse(self) -> "SimilarityTransform":
        rt = self.rotation.T
        return SimilarityTransform(rt, -(rt @ self.translation) / self.scale, 1.0 / self.scale)

    def compose(self, other: "SimilarityTransform") -> "SimilarityTransform":
        """``self ∘ other``: apply ``other`` first."""
        return SimilarityTransform(
            self.rotation @ other.rotation,
            self.scale * self.rotation @ other.translation + self.translation,
            self.scale * other.scale,
        )

    @property
    def angle(self) -> float:
        return rotation_angle(self.rotation)


def rotation_angle(r) -> float:
    c = (np.trace(r) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def yaw_rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _project_rotation(r):
    # re-orthonormalize so SimilarityTransform validation never trips on roundoff
    u, _, vt = np.linalg.svd(r)
    d = np.ones(3)
    d[2] = np.sign(np.linalg.det(u @ vt))
    return (u * d) @ vt


def weighted_similarity(src, dst, w):
    """Closed-form weighted (s, R, t) minimizing Σ w‖s R x + t − y‖² (Umeyama)."""
    w = np.asarray(w, dtype=float)
    w = w / w.sum()
    mu_s = w @ src
    mu_d = w @ dst
    xs = src - mu_s
    xd = dst - mu_d
    cov = (xd * w[:, None]).T @ xs
    u, sig, vt = np.linalg.svd(cov)
    d = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        d[2] = -1.0
    r = (u * d) @ vt
    var_s = w @ np.einsum("ij,ij->i", xs, xs)
    s = float(sig @ d / var_s)
    return r, mu_d - s * r @ mu_s, s


def huber(d, delta):
    return np.where(d <= delta, 0.5 * d * d, delta * (d - 0.5 * delta))


def huber_weight(d, delta):
    return np.where(d <= delta, 1.0, delta / np.maximum(d, 1e-300))


@dataclass
class ICPResult:
    transform: SimilarityTransform
    residual: float
    history: list
    converged: bool
    iterations: int
    inliers: np.ndarray

    @property
    def flagged(self) -> bool:
        return not self.converged


def _check_spread(points, what):
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 4:
        raise DegenerateGeometry(f"{what} needs at least 4 points in 3D")
    sv = np.linalg.svd(pts - pts.mean(axis=0), compute_uv=False)
    if sv[0] <= 0 or sv[2] <= 1e-9 * sv[0]:
        raise DegenerateGeometry(f"{what} points are coplanar or collinear")
    return pts


def centroid_init(source, target) -> SimilarityTransform:
    """Identity rotation with centroids and RMS radii aligned."""
    ms, mt = source.mean(axis=0), target.mean(axis=0)
    rs = np.sqrt(((source - ms) ** 2).sum(axis=1).mean())
    rt = np.sqrt(((target - mt) ** 2).sum(axis=1).mean())
    s = rt / rs
    return SimilarityTransform(np.eye(3), mt - s * ms, s)


def _objective(src, tree, r, t, s, delta, loss):
    d, idx = tree.query(s * src @ r.T + t)
    if loss == "huber":
        return float(huber(d, delta).sum()), huber_weight(d, delta), idx
    return float(0.5 * (d * d).sum()), np.ones_like(d), idx


def _stage(src, dst, tree, r, t, s, delta, loss, max_iters, history):
    res, w, idx = _objective(src, tree, r, t, s, delta, loss)
    history.append(res)
    for it in range(1, max_iters + 1):
        r_new, t_new, s_new = weighted_similarity(src, dst[idx], w)
        if not (np.isfinite(s_new) and s_new > MIN_SCALE and np.all(np.isfinite(t_new))):
            return r, t, s, False, it
        r, t, s = _project_rotation(r_new), t_new, s_new
        prev = res
        res, w, idx = _objective(src, tree, r, t, s, delta, loss)
        history.append(res)
        if abs(prev - res) <= REL_TOL * max(prev, 1e-300):
            return r, t, s, True, it
    return r, t, s, False, max_iters


def scaled_robust_icp(
    source,
    target,
    init: SimilarityTransform | None = None,
    huber_delta: float = 0.05,
    max_iters: int = 200,
    loss: str = "huber",
    refine: bool = True,
) -> ICPResult:
    """Register ``source`` onto ``target`` with a similarity transform.

    ``init=None`` starts from centroid and RMS-scale alignment.  ``loss`` is
    ``"huber"`` or ``"squared"``.  ``refine=False`` skips the reciprocal
    second stage.  A run that exhausts ``max_iters`` or hits a collapsing
    scale returns the last valid iterate with ``converged=False``.
    """
    if loss not in ("huber", "squared"):
        raise ValueError(f"unknown loss '{loss}'")
    src = _check_spread(source, "source")
    dst = _check_spread(target, "target")
    init = centroid_init(src, dst) if init is None else init
    tree = cKDTree(dst)
    history: list = []
    r, t, s = init.rotation, init.translation, init.scale
    r, t, s, converged, iters = _stage(src, dst, tree, r, t, s, huber_delta, loss, max_iters, history)
    keep = np.ones(len(src), dtype=bool)
    if refine:
        moved = s * src @ r.T + t
        _, idx = tree.query(moved)
        _, back = cKDTree(moved).query(dst[idx])
        keep = back == np.arange(len(src))
        if keep.sum() >= 4:
            # objective drops when terms are removed, so history stays monotone
            r, t, s, converged, more = _stage(src[keep], dst, tree, r, t, s, huber_delta, loss, max_iters, history)
            iters += more
        else:
            keep[:] = True
    return ICPResult(SimilarityTransform(r, t, s), history[-1], history, converged, iters, keep)
