"""
Histogram features of a face crop
=================================

The recognizer does not look at pixels directly. A face crop becomes
normalized histograms of the whole crop and of its two halves, optionally
with two-bin histograms of the Otsu-binarized crop appended.
"""
import numpy as np

from facekit import synth
from facekit.detector import Rect
from facekit.features import FeatureConfig, build_feature_vector, gray_histogram, histograms, split_halves
from facekit.imgio import GrayImage, binarize, otsu_threshold, resize_bilinear

rng = np.random.default_rng(3)
profiles = synth.identity_profiles(3)

# one 64x64 face per identity, rendered straight into a crop
crops = [GrayImage(np.clip(np.rint(synth.render_face(64, p, rng, 8.0)), 0, 255).astype(np.uint8))
         for p in profiles]

# the whole histogram is the bin-wise sum of the halves, for any split
img = crops[0]
left, right = split_halves(img, "vertical")
print("left", left.width, "x", left.height, " right", right.width, "x", right.height)
print("whole == left + right:", gray_histogram(img) == gray_histogram(left) + gray_histogram(right))

# Otsu picks one threshold for the whole crop; both halves reuse it
t = otsu_threshold(img)
bits = binarize(img, t)
print("otsu threshold", t, " foreground fraction", round(float(bits.pixels.mean()), 3))

# the default vector: three 256-bin blocks, each summing to one
cfg = FeatureConfig()
print("layout", cfg.layout(), "length", cfg.length())
for k, c in enumerate(crops):
    fv = build_feature_vector(c, cfg)
    mean_level = float(np.dot(np.arange(256), fv.values[:256]))
    print(f"identity {k + 1}: mean gray level {mean_level:6.1f}, "
          f"block sums {[round(float(fv.values[i:i + 256].sum()), 12) for i in (0, 256, 512)]}")

# with binary blocks and a horizontal split
cfg = FeatureConfig(use_binary=True, axis="horizontal")
h = histograms(crops[1], cfg)
print("top-binary", h["top-binary"].bins.tolist(), " bottom-binary", h["bottom-binary"].bins.tolist())

# crops from a detector come in any size; they are resized to the canonical 64x64 first
sc = synth.face_scene(profiles[2], rng)
f: Rect = sc.face
crop = GrayImage(sc.image.pixels[f.y:f.y + f.h, f.x:f.x + f.w])
print("scene face", f, "->", resize_bilinear(crop, 64, 64).pixels.shape)
