"""
Confidence-gated appearance memory
==================================

Primitives observed while the robot walks fast or turns carry a higher
instability statistic g.  The confidence gate judges each one against the
store's running means, so blurred evidence barely moves composited features
or centroids.
"""

import numpy as np

from mif.appearance import (
    AppearanceField,
    GaussianPrimitive,
    composite,
    dumps_primitives,
    estimate_confidence,
    fit_feature_codec,
    unit,
    weighted_centroid,
)

rng = np.random.default_rng(0)

# a calm batch and a blurred batch of the same mug
calm = rng.uniform(0.01, 0.03, 20)
blur = rng.uniform(0.2, 0.4, 20)
g = np.concatenate([calm, blur])
alpha = rng.uniform(0.6, 1.0, 40)
prims = [GaussianPrimitive(i, np.zeros(3), alpha[i], np.array([1.0, 0.0]), g[i]) for i in range(40)]
c = np.array([p.confidence for p in estimate_confidence(prims)])
print(f"mean confidence, calm batch    {c[:20].mean():.3f}")
print(f"mean confidence, blurred batch {c[20:].mean():.3f}")

###############################################################################
# Blurred primitives are displaced.  The confidence-weighted centroid stays
# near the true position (the origin) while the plain mean drifts.

pos = np.vstack([rng.normal(0, 0.01, (20, 3)), rng.normal(0.3, 0.05, (20, 3))])
print("plain mean           ", np.round(pos.mean(axis=0), 3))
print("confidence centroid  ", np.round(weighted_centroid(pos, c, alpha), 3))

###############################################################################
# Front-to-back compositing along one ray: a low-confidence sample in front
# lets the sample behind it show through.

feats = np.eye(2)
for c_front in (1.0, 0.1):
    f, w = composite([c_front, 1.0], [0.9, 0.9], feats)
    print(f"front confidence {c_front}: feature {np.round(f, 3)}, weight {w:.3f}")

###############################################################################
# The store keeps global means, so a later batch is judged against history
# rather than against itself.

store = AppearanceField()
store.fuse(pos[:20], alpha[:20], calm, np.zeros(20, dtype=int))
print(f"store g mean after calm mapping {store.g_mean:.3f}")
print("confidence of one blurred primitive:", np.round(store.confidence_of([0.3], [0.8]), 4))

###############################################################################
# Semantic features compress to 32 dimensions with a centred truncated SVD.

x = unit(rng.normal(size=(500, 32)) @ rng.normal(size=(32, 512)))
codec = fit_feature_codec(x, 32)
err = np.linalg.norm(codec.decode(codec.encode(x)) - x) / np.linalg.norm(x)
recs = [GaussianPrimitive(i, rng.normal(size=3), 0.9, x[i], 0.02, 0.9) for i in range(500)]
full, small = len(dumps_primitives(recs)), len(dumps_primitives(recs, codec))
print(f"reconstruction error {err:.1e}; payload {small} vs {full} bytes ({100 * (1 - small / full):.1f}% smaller)")
