"""
Enrollment, recognition and unknown rejection
=============================================

Three synthetic people, twenty noisy scenes each. A face cascade locates
each face, histogram features describe it, and a small network learns the
identities. Faces the network is unsure about come back as unknown.

Usage: python demos/04_enroll_and_recognize.py [OUTDIR]
"""
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from facekit import boost, mlp, pipeline, synth
from facekit.imgio import GrayImage

out = Path(sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="facekit-"))
out.mkdir(parents=True, exist_ok=True)

# a face detector first (see 02_train_face_detector.py)
pos, neg = synth.scene_windows(400, 6000, np.random.default_rng(7))
targets = boost.CascadeTrainTargets(d_min=0.995, f_max=0.5, f_overall=1e-3, max_stages=10)
cascade, _ = boost.train_cascade(pos, neg, targets, max_features=2500, seed=0)

# 15 training and 5 test scenes per identity
data = synth.identity_corpus(3, 20, seed=0)
train = [(lab, sc.image) for i, (lab, sc) in enumerate(data) if i % 20 < 15]
test = [(lab, sc.image) for i, (lab, sc) in enumerate(data) if i % 20 >= 15]

config = pipeline.ModelConfig(face_cascade=cascade)
model, report = pipeline.enroll(train, config, mlp.TrainConfig())
print(f"labels {model.labels}; restart {report.restart} chosen, "
      f"best epoch {report.best_epoch}, stopped by {report.stop_reason}")
for name, st in report.regression.items():
    print(f"  {name:5s} MSE {report.final_mse[name]:.5f}  R {st.r:.4f}")
(out / "curves.csv").write_text(report.curves_csv())

ev = pipeline.evaluate(model, test)
print(f"test accuracy {ev.accuracy:.3f}")
print("confusion (rows true, last column unknown):")
print(ev.confusion)

# the model file holds the cascade, feature layout, scaling and weights
path = out / "model.json"
pipeline.save_model(model, path)
again = pipeline.load_model(path)
probe = test[0][1]
print("before save", pipeline.recognize(model, probe))
print("after load ", pipeline.recognize(again, probe))

# strangers: person2's geometry with other skin tones. The output threshold
# only rejects faces the network is unsure about; a sigmoid output can still
# be confident far from the training data, so some strangers get a label
rng = np.random.default_rng(5)
for skin in (90, 145, 185, 230):
    stranger = synth.face_scene(replace(synth.identity_profiles(3)[1], skin=skin), rng).image
    row = []
    for thr in (0.5, 0.95):
        r = pipeline.recognize(replace(model, accept_threshold=thr), stranger)
        row.append(f"threshold {thr}: {r.label or 'unknown'} ({r.confidence:.3f})")
    print(f"stranger skin {skin}: " + ";  ".join(row))
blank = GrayImage(np.full((80, 80), 128, np.uint8))
print("blank image ->", pipeline.recognize(model, blank))
