"""Confidence-gated primitive store.

Each primitive carries an instability statistic ``g`` (how much its estimate
kept moving while being observed) and an opacity.  Both are normalised by the
store-wide means and folded into a confidence ``C`` in [0, 1]; low-confidence
primitives are then kept out of feature compositing and centroid evidence.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DegenerateOpacity,
    DegenerateWeight,
    DimensionMismatch,
    EmptyInput,
    InsufficientData,
)

LATENT_DIM = 32


@dataclass(frozen=True)
class ConfidenceParams:
    beta: float = 5.0
    gamma_conf: float = 2.0
    tau_conf: float = 0.6

    def __post_init__(self):
        if self.beta <= 0 or self.gamma_conf <= 0:
            raise ValueError("beta and gamma_conf must be positive")
        if not 0.0 <= self.tau_conf <= 1.0:
            raise ValueError("tau_conf must lie in [0, 1]")


@dataclass(frozen=True)
class GaussianPrimitive:
    id: int
    position: np.ndarray
    opacity: float
    feature: np.ndarray
    instability: float = 0.0
    confidence: float = float("nan")
    object_id: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.opacity <= 1.0:
            raise ValueError(f"opacity {self.opacity} outside [0, 1]")
        if self.instability < 0:
            raise ValueError("instability must be non-negative")
        norm = float(np.linalg.norm(self.feature))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"feature norm {norm} is not 1")


def _sigmoid(x):
    # split form avoids overflow warnings for large |x|
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def confidence(g, alpha, params: ConfidenceParams = ConfidenceParams(), g_mean=None, alpha_mean=None):
    """Vectorised confidence gate.

    ``g`` and ``alpha`` are normalised by ``g_mean``/``alpha_mean``, which
    default to the means of the arrays themselves.  A store passes its
    global means so that a batch observed while walking fast is judged
    against the whole map rather than against itself.
    """
    g = np.asarray(g, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if g.size == 0:
        raise EmptyInput("no primitives")
    if np.any(g < 0):
        raise ValueError("instability must be non-negative")
    g_mean = float(np.mean(g)) if g_mean is None else float(g_mean)
    alpha_mean = float(np.mean(alpha)) if alpha_mean is None else float(alpha_mean)
    if g_mean <= 0.0:
        return np.ones_like(g)
    if alpha_mean <= 0.0:
        raise DegenerateOpacity("mean opacity is zero")
    g_n = g / g_mean
    a_n = alpha / alpha_mean
    stable = np.exp(-params.beta * g_n)
    c = stable + (1.0 - stable) * _sigmoid(params.gamma_conf * a_n * (1.0 - g_n))
    return np.clip(c, 0.0, 1.0)


def estimate_confidence(primitives: Sequence[GaussianPrimitive], params: ConfidenceParams = ConfidenceParams()):
    """Return copies of ``primitives`` with ``confidence`` filled in."""
    if len(primitives) == 0:
        raise EmptyInput("no primitives")
    g = np.array([p.instability for p in primitives])
    alpha = np.array([p.opacity for p in primitives])
    c = confidence(g, alpha, params)
    return [replace(p, confidence=float(ci)) for p, ci in zip(primitives, c)]


def gate(c, tau_conf: float):
    """Zero out confidences below ``tau_conf``."""
    c = np.asarray(c, dtype=float)
    return np.where(c >= tau_conf, c, 0.0)


def composite(c, alpha, features):
    """Front-to-back compositing weighted by confidence.

    Returns ``(feature, accumulated_weight)``.  Rows of ``features`` must be
    ordered nearest first.
    """
    c = np.asarray(c, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    features = np.atleast_2d(np.asarray(features, dtype=float))
    if c.size == 0:
        return np.zeros(features.shape[-1]), 0.0
    a = c * alpha
    trans = np.concatenate(([1.0], np.cumprod(1.0 - a)[:-1]))
    w = a * trans
    return w @ features, float(w.sum())


def composite_features(ray_samples: Iterable[tuple], dim: int = LATENT_DIM):
    """Composite an ordered list of ``(C, alpha, feature)`` samples.

    An empty ray carries no evidence and yields a zero vector of length ``dim``.
    """
    samples = list(ray_samples)
    if not samples:
        return np.zeros(dim)
    c = [s[0] for s in samples]
    alpha = [s[1] for s in samples]
    feats = np.stack([np.asarray(s[2], dtype=float) for s in samples])
    return composite(c, alpha, feats)[0]


def transmittance(c, alpha):
    a = np.asarray(c, dtype=float) * np.asarray(alpha, dtype=float)
    return np.concatenate(([1.0], np.cumprod(1.0 - a)[:-1]))


def weighted_centroid(points, c, alpha):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    w = np.asarray(c, dtype=float) * np.asarray(alpha, dtype=float)
    if len(w) != len(points):
        raise DimensionMismatch("points and weights differ in length")
    total = w.sum()
    if not total > 0.0:
        raise DegenerateWeight("total confidence-weighted opacity is zero")
    return (w @ points) / total


def node_reliability(c) -> float:
    c = np.asarray(c, dtype=float)
    if c.size == 0:
        raise EmptyInput("node has no supporting primitives")
    return float(np.mean(c))


@dataclass(frozen=True)
class FeatureCodec:
    """Linear feature codec: ``encode(x) = E (x - mean)``, ``decode(z) = D z + mean``."""

    encode_matrix: np.ndarray
    decode_matrix: np.ndarray
    mean: np.ndarray

    @property
    def raw_dim(self) -> int:
        return self.mean.shape[0]

    @property
    def latent_dim(self) -> int:
        return self.encode_matrix.shape[0]

    def encode(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.raw_dim:
            raise DimensionMismatch(f"expected {self.raw_dim}-dim features, got {x.shape[-1]}")
        return (x - self.mean) @ self.encode_matrix.T

    def decode(self, z):
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.latent_dim:
            raise DimensionMismatch(f"expected {self.latent_dim}-dim latents, got {z.shape[-1]}")
        return z @ self.decode_matrix.T + self.mean


def fit_feature_codec(training_features, k: int = LATENT_DIM) -> FeatureCodec:
    """Centered truncated SVD onto the top-``k`` principal directions."""
    x = np.asarray(training_features, dtype=float)
    n, d = x.shape
    if n < k:
        raise InsufficientData(f"need at least {k} samples, got {n}")
    if d < k:
        raise InsufficientData(f"feature dimension {d} is below latent size {k}")
    mean = x.mean(axis=0)
    _, _, vt = np.linalg.svd(x - mean, full_matrices=False)
    basis = vt[:k]
    return FeatureCodec(encode_matrix=basis, decode_matrix=basis.T.copy(), mean=mean)


def unit(v, eps: float = 1e-12):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.maximum(n, eps)


# --- serialization -------------------------------------------------------

PRIMITIVE_FIELDS = ("id", "position", "alpha", "g", "C", "latent32", "object_id")


def _num(x):
    return float(format(float(x), ".9g"))


def _vec(v):
    return [_num(x) for x in np.asarray(v, dtype=float).ravel()]


def dumps_primitives(primitives: Sequence[GaussianPrimitive], codec: FeatureCodec | None = None) -> str:
    """One JSON object per line with a fixed key order.

    With a codec the feature is stored as its latent code under ``latent32``;
    without one the raw feature is stored under ``feature``.
    """
    lines = []
    for p in primitives:
        rec = {
            "id": int(p.id),
            "position": _vec(p.position),
            "alpha": _num(p.opacity),
            "g": _num(p.instability),
            "C": None if np.isnan(p.confidence) else _num(p.confidence),
        }
        if codec is not None:
            rec["latent32"] = _vec(codec.encode(p.feature))
        else:
            rec["feature"] = _vec(p.feature)
        rec["object_id"] = p.object_id
        lines.append(json.dumps(rec, separators=(",", ":")))
    return "\n".join(lines) + ("\n" if lines else "")


def loads_primitives(text: str, codec: FeatureCodec | None = None):
    out = []
    for line in text.splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        if "latent32" in rec:
            if codec is None:
                raise ValueError("latent records need a codec to decode")
            feat = unit(codec.decode(rec["latent32"]))
        else:
            feat = np.asarray(rec["feature"], dtype=float)
            feat = unit(feat)
        out.append(
            GaussianPrimitive(
                id=rec["id"],
                position=np.asarray(rec["position"], dtype=float),
                opacity=rec["alpha"],
                feature=feat,
                instability=rec["g"],
                confidence=float("nan") if rec["C"] is None else rec["C"],
                object_id=rec["object_id"],
            )
        )
    return out


@dataclass
class AppearanceField:
    """Array-backed primitive store with running global statistics.

    Global means of ``g`` and ``alpha`` are taken over every primitive ever
    fused, which is what incoming batches are normalised against.
    """

    params: ConfidenceParams = field(default_factory=ConfidenceParams)
    positions: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    alpha: np.ndarray = field(default_factory=lambda: np.zeros(0))
    g: np.ndarray = field(default_factory=lambda: np.zeros(0))
    object_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    _g_sum: float = 0.0
    _a_sum: float = 0.0
    _count: int = 0

    def __len__(self):
        return len(self.g)

    @property
    def g_mean(self) -> float:
        return self._g_sum / self._count if self._count else 0.0

    @property
    def alpha_mean(self) -> float:
        return self._a_sum / self._count if self._count else 0.0

    def confidence_of(self, g, alpha):
        """Confidence of a batch judged against the store's global means."""
        if self._count == 0:
            return confidence(g, alpha, self.params)
        return confidence(g, alpha, self.params, g_mean=self.g_mean, alpha_mean=self.alpha_mean)

    def fuse(self, positions, alpha, g, object_ids):
        positions = np.asarray(positions, dtype=float).reshape(-1, 3)
        self.positions = np.vstack([self.positions, positions])
        self.alpha = np.concatenate([self.alpha, alpha])
        self.g = np.concatenate([self.g, g])
        self.object_ids = np.concatenate([self.object_ids, np.asarray(object_ids, dtype=int)])
        self._g_sum += float(np.sum(g))
        self._a_sum += float(np.sum(alpha))
        self._count += len(g)

    def drop_objects(self, ids):
        """Remove local support for ``ids``; global statistics are kept."""
        keep = ~np.isin(self.object_ids, list(ids))
        self.positions = self.positions[keep]
        self.alpha = self.alpha[keep]
        self.g = self.g[keep]
        self.object_ids = self.object_ids[keep]

    def support(self, object_id):
        mask = self.object_ids == object_id
        return self.positions[mask], self.alpha[mask], self.g[mask]
