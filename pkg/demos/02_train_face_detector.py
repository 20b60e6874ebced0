"""
Training a boosted cascade and scanning scenes
==============================================

Windows cut from synthetic scenes train a cascade of boosted stumps. Each
stage keeps nearly all faces and drops about half of what is left of the
background, so the false positive rate multiplies down stage by stage.

Usage: python demos/02_train_face_detector.py [OUTDIR]
Annotated scenes are written to OUTDIR (default: a temporary directory).
"""
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from facekit import boost, detector, synth
from facekit.imgio import RasterImage, write_image

out = Path(sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="facekit-"))
out.mkdir(parents=True, exist_ok=True)
rng = np.random.default_rng(7)

# training data: jittered face crops and background crops, all 24x24
pos, neg = synth.scene_windows(400, 6000, rng)
print(f"{len(pos)} positive and {len(neg)} negative windows")

targets = boost.CascadeTrainTargets(d_min=0.995, f_max=0.5, f_overall=1e-3, max_stages=10)
t0 = time.perf_counter()
cascade, report = boost.train_cascade(pos, neg, targets, max_features=2500, seed=0)
print(f"trained in {time.perf_counter() - t0:.1f}s")
print("stage  weaks  stage FPR  stage DR")
for i, s in enumerate(report.stages):
    print(f"{i:5d}  {s.n_weaks:5d}  {s.false_positive_rate:9.3f}  {s.detection_rate:8.3f}")
if report.negatives_exhausted:
    print("(every training negative was rejected, so training stopped early)")


# draw a one pixel box into an RGB copy of a gray image
def draw(img, rects, colour):
    rgb = np.repeat(img.pixels[:, :, None], 3, axis=2).copy()
    for r in rects:
        rgb[r.y, r.x:r.x + r.w] = colour
        rgb[r.y + r.h - 1, r.x:r.x + r.w] = colour
        rgb[r.y:r.y + r.h, r.x] = colour
        rgb[r.y:r.y + r.h, r.x + r.w - 1] = colour
    return RasterImage(rgb)


# scan fresh scenes; the largest grouped detection is taken as the face
hits = 0
for k in range(8):
    sc = synth.face_scene(synth.random_face_params(rng), rng)
    found = detector.detect(sc.image, cascade)
    best = detector.largest_detection(found)
    iou = best.rect.iou(sc.face) if best else 0.0
    hits += iou >= 0.5
    print(f"scene {k}: {len(found)} detections, best IoU with truth {iou:.2f}")
    write_image(out / f"scene{k}.ppm", draw(sc.image, [d.rect for d in found], (255, 0, 0)))
print(f"{hits}/8 faces localized; images in {out}")
