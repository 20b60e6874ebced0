"""
The command line, end to end
============================

Writes a small synthetic dataset as PGM files, then drives the ``facekit``
command through every step: train a detector, enroll, evaluate, recognize,
detect and export features. Each command is echoed before it runs.

Usage: python demos/06_command_line.py [WORKDIR]
"""
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from facekit import synth
from facekit.imgio import GrayImage, write_image

work = Path(sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="facekit-cli-"))
rng = np.random.default_rng(0)

# detector training data: 24x24 face crops, crops that miss the face, and a
# few large background images that the command cuts into 24x24 tiles
for name in ("pos", "neg"):
    (work / name).mkdir(parents=True, exist_ok=True)
pos, neg = synth.scene_windows(400, 4000, rng)
for i, w in enumerate(pos):
    write_image(work / "pos" / f"{i:04d}.pgm", GrayImage(w))
for i, w in enumerate(neg):
    write_image(work / "neg" / f"{i:04d}.pgm", GrayImage(w))
for i in range(10):
    bg = np.clip(np.rint(synth.filtered_noise((96, 96), rng)), 0, 255).astype(np.uint8)
    write_image(work / "neg" / f"bg{i:02d}.pgm", GrayImage(bg))

# a labelled corpus, one directory per person, and a held-out set
for i, (label, sc) in enumerate(synth.identity_corpus(3, 20, seed=1)):
    part = "train" if i % 20 < 15 else "test"
    (work / part / label).mkdir(parents=True, exist_ok=True)
    write_image(work / part / label / f"{i:03d}.pgm", sc.image)


def facekit(*args):
    cmd = [sys.executable, "-m", "facekit", *map(str, args)]
    print("$ facekit", " ".join(map(str, args)))
    done = subprocess.run(cmd, capture_output=True, text=True)
    text = done.stdout if len(done.stdout) < 1500 else done.stdout[:1500] + "...\n"
    print(text + done.stderr, end="")
    print(f"[exit {done.returncode}]\n")
    return done


facekit("train-detector", "--positives", work / "pos", "--negatives", work / "neg",
        "--max-features", 2500, "--out", work / "face.json")
facekit("enroll", "--corpus", work / "train", "--detector", work / "face.json",
        "--model-out", work / "model.json", "--curves-out", work / "curves.csv")
facekit("eval", "--model", work / "model.json", "--corpus", work / "test", "--report-out", work / "report.json")

probe = sorted((work / "test" / "person2").iterdir())[0]
facekit("recognize", "--model", work / "model.json", probe)
# detect lists every grouped detection with its neighbor count; recognition
# uses the largest one
facekit("detect", "--model", work / "model.json", probe)
facekit("features", "--model", work / "model.json", "--size", "64x64", "--binary", "--out", work / "csv", probe)
print("feature CSVs:", sorted(p.name for p in (work / "csv").iterdir()))

# an image without a face is a domain error: exit status 1
write_image(work / "blank.pgm", GrayImage(np.zeros((60, 60), np.uint8)))
facekit("recognize", "--model", work / "model.json", work / "blank.pgm")
facekit("gradcheck", "--seed", 3)
