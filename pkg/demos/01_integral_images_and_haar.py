"""
Integral images and Haar features
=================================

A summed-area table turns any rectangle sum into four lookups. Haar
features are differences of adjacent rectangle sums, so they cost the
same at every position and scale.
"""
import numpy as np

from facekit import haar, synth
from facekit.imgio import GrayImage

rng = np.random.default_rng(0)

# a small random image and its integral table (one extra row and column of zeros)
px = rng.integers(0, 256, (6, 8), dtype=np.uint8)
ii = haar.build_integral(GrayImage(px))
print("table shape", ii.table.shape)

# any rectangle sum, checked against plain numpy
x, y, w, h = 2, 1, 4, 3
print("rect_sum", haar.rect_sum(ii, x, y, w, h), "numpy", int(px[y:y + h, x:x + w].sum()))

# the full feature pool for a 24x24 window
pool = haar.enumerate_features(24)
kinds = {}
for f in pool:
    kinds[f.kind] = kinds.get(f.kind, 0) + 1
print("features in a 24x24 window:", len(pool))
for kind, n in sorted(kinds.items()):
    print(f"  {kind:20s} {n}")

# feature responses on a synthetic face window versus noise; values are
# variance normalized, so a global contrast change leaves them unchanged
face = synth.face_windows(1, rng)[0]
noise = synth.noise_windows(1, rng)[0]
some = pool[::20000]
vals = haar.window_features(np.stack([face, noise]), some)
for f, (a, b) in zip(some, vals.T):
    print(f"  {f.kind:20s} at ({f.x:2d},{f.y:2d}) face {a:8.3f}  noise {b:8.3f}")

# a feature scaled to a 48 pixel window reads the upsampled image the same way
big = GrayImage(np.kron(face, np.ones((2, 2), dtype=np.uint8)))
iib = haar.build_integral(big)
f = pool[1234]
inv = float(haar.window_inv_sigma(iib, 0, 0, 48))
print("base value", haar.window_features(face[None], [f])[0, 0],
      "at scale 2", haar.eval_feature(f, iib, 0, 0, 2.0, inv, 24))
