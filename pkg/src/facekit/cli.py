"""Batch command line: detection, histogram export, detector training, enrollment,
recognition, evaluation and a gradient check.

Data goes to stdout or to the files named by flags; diagnostics go to stderr.
Exit status is 0 on success, 1 on a domain error (unreadable image, no face,
bad model) and 2 on a usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import boost, detector, features, mlp, pipeline
from .imgio import GrayImage, NetpbmError, read_image, resize_bilinear, to_grayscale

log = logging.getLogger("facekit")

IMAGE_SUFFIXES = {".pgm", ".ppm", ".pnm"}
DEFAULT_SEED = 42


class DomainError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument helpers


def _int_list(text: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("sizes must be positive integers")
    return vals


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _size(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError("width and height must be >= 1")
    return w, h


def _load_gray(path) -> GrayImage:
    try:
        return to_grayscale(read_image(path))
    except NetpbmError as exc:
        raise DomainError(f"{path}: {exc}") from None
    except OSError as exc:
        raise DomainError(f"{path}: {exc.strerror or exc}") from None


def _image_files(directory: Path) -> list[Path]:
    return sorted(p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


def _load_corpus(directory) -> list[tuple[str, GrayImage]]:
    """One subdirectory per identity, images inside; sorted by identity then file name."""
    root = Path(directory)
    if not root.is_dir():
        raise DomainError(f"corpus directory {root} does not exist")
    corpus = []
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        for f in _image_files(sub):
            corpus.append((sub.name, _load_gray(f)))
    if not corpus:
        raise DomainError(f"no images found under {root}")
    return corpus


def _load_detection_model(path):
    """A recognizer model file or a bare cascade file, as (face cascade, part cascades)."""
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DomainError(f"{path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise DomainError(f"{path}: not valid JSON ({exc})") from None
    if isinstance(d, dict) and "format_version" in d:
        m = pipeline.model_from_dict(d)
        return m.face_cascade, m.part_cascades
    try:
        return boost.Cascade.from_dict(d), {}
    except (KeyError, TypeError, ValueError) as exc:
        raise DomainError(f"{path}: neither a model nor a cascade file ({exc})") from None


def _load_cascade(path) -> boost.Cascade:
    face, _ = _load_detection_model(path)
    if face is None:
        raise DomainError(f"{path}: model has no face cascade")
    return face


def _map(fn, items, threads):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _scan_params(args) -> detector.ScanParams:
    return detector.ScanParams(scale_factor=args.scale_factor, min_neighbors=args.min_neighbors)


# ---------------------------------------------------------------------------
# subcommands


def cmd_detect(args, out) -> int:
    face, parts = _load_detection_model(args.model)
    if face is None:
        raise DomainError("model has no face cascade to detect with")
    params = _scan_params(args)
    images = [_load_gray(p) for p in args.images]

    def run(img):
        lines = []
        for d in detector.detect(img, face, params):
            r = d.rect
            lines.append(f"face {r.x} {r.y} {r.w} {r.h} {d.neighbors}")
            found = detector.detect_parts(img, r, parts, params)
            for name in sorted(found):
                for pd in found[name]:
                    q = pd.rect
                    lines.append(f"{name} {q.x} {q.y} {q.w} {q.h} {pd.neighbors}")
        return lines

    results = _map(run, images, args.threads)
    for path, lines in zip(args.images, results):
        if len(args.images) > 1:
            out.write(f"# {path}\n")
        for line in lines:
            out.write(line + "\n")
    return 0


def cmd_features(args, out) -> int:
    img = _load_gray(args.image)
    config = features.FeatureConfig(use_whole=True, use_halves=not args.no_halves,
                                    use_binary=args.binary, axis=args.axis, threshold=args.threshold)
    if args.model:
        face = pipeline.locate_face(img, _load_cascade(args.model), detector.ScanParams())
        if face is None:
            raise DomainError(f"{args.image}: no face detected")
        img = GrayImage(img.pixels[face.y:face.y + face.h, face.x:face.x + face.w])
    if args.size:
        img = resize_bilinear(img, *args.size)
    hists = features.histograms(img, config)
    names = config.layout()
    if args.out:
        dest = Path(args.out)
        dest.mkdir(parents=True, exist_ok=True)
        stem = Path(args.image).stem
        for name in names:
            (dest / f"{stem}_{name}.csv").write_text(hists[name].to_csv(), encoding="utf-8")
            log.info("wrote %s", dest / f"{stem}_{name}.csv")
    else:
        for name in names:
            out.write(f"# {name}\n")
            out.write(hists[name].to_csv())
    return 0


def _windows_from_dir(directory, base: int, tile: bool) -> np.ndarray:
    root = Path(directory)
    if not root.is_dir():
        raise DomainError(f"directory {root} does not exist")
    wins = []
    for f in _image_files(root):
        img = _load_gray(f)
        if tile and (img.width > base or img.height > base):
            # large negative images are cut into non-overlapping base windows
            px = img.pixels
            for y in range(0, img.height - base + 1, base):
                for x in range(0, img.width - base + 1, base):
                    wins.append(px[y:y + base, x:x + base])
        else:
            if img.width != base or img.height != base:
                img = resize_bilinear(img, base, base)
            wins.append(img.pixels)
    if not wins:
        raise DomainError(f"no usable images in {root}")
    return np.stack(wins)


def cmd_train_detector(args, out) -> int:
    base = args.base
    pos = _windows_from_dir(args.positives, base, tile=False)
    neg = _windows_from_dir(args.negatives, base, tile=True)
    log.info("training on %d positive and %d negative windows", len(pos), len(neg))
    targets = boost.CascadeTrainTargets(d_min=args.dmin, f_max=args.fmax, f_overall=args.ftarget,
                                        max_stages=args.stages, max_weaks_per_stage=args.max_weaks)
    cascade, report = boost.train_cascade(pos, neg, targets, max_features=args.max_features,
                                          seed=args.seed)
    Path(args.out).write_text(json.dumps(cascade.to_dict(), separators=(",", ":")) + "\n",
                              encoding="utf-8")
    out.write("stage,weaks,false_positive_rate,detection_rate,positives,negatives,met_target\n")
    for i, s in enumerate(report.stages):
        out.write(f"{i},{s.n_weaks},{s.false_positive_rate!r},{s.detection_rate!r},"
                  f"{s.n_positives},{s.n_negatives},{int(s.met_target)}\n")
    if report.negatives_exhausted:
        log.info("all training negatives rejected after %d stages", len(report.stages))
    return 0


def cmd_enroll(args, out) -> int:
    corpus = _load_corpus(args.corpus)
    face = _load_cascade(args.detector) if args.detector else None
    fc = features.FeatureConfig(use_whole=True, use_halves=not args.no_halves,
                                use_binary=args.binary, axis=args.axis)
    mc = pipeline.ModelConfig(face_cascade=face, canonical_size=args.size, feature_config=fc,
                              accept_threshold=args.accept_threshold)
    tc = mlp.TrainConfig(learning_rate=args.lr, max_epochs=args.epochs,
                         patience=math.inf if args.patience == 0 else args.patience,
                         restarts=args.restarts, hidden_sizes=args.hidden, seed=args.seed)
    model, report = pipeline.enroll(corpus, mc, tc, threads=args.threads)
    for i in report.skipped:
        log.warning("no face detected in image %d (%s), skipped", i, corpus[i][0])
    pipeline.save_model(model, args.model_out)
    if args.curves_out:
        Path(args.curves_out).write_text(report.curves_csv(), encoding="utf-8")
    if args.regression_out:
        Path(args.regression_out).write_text(report.regression_csv(), encoding="utf-8")
    out.write(f"images {len(corpus)}\n")
    out.write(f"skipped {len(report.skipped)}\n")
    out.write(f"restart {report.restart}\n")
    out.write(f"best_epoch {report.best_epoch}\n")
    out.write(f"stop_reason {report.stop_reason}\n")
    for name, v in report.final_mse.items():
        out.write(f"mse_{name} {v!r}\n")
    return 0


def cmd_recognize(args, out) -> int:
    model = pipeline.load_model(args.model)
    params = _scan_params(args)
    status = 0
    results = _map(lambda p: pipeline.recognize(model, _load_gray(p), params), args.images, args.threads)
    for path, r in zip(args.images, results):
        prefix = f"{path} " if len(args.images) > 1 else ""
        out.write(f"{prefix}{r.label if not r.unknown else 'unknown'} {r.confidence!r}\n")
        if r.face is None:
            log.error("%s: no face detected", path)
            status = 1
    return status


def cmd_eval(args, out) -> int:
    model = pipeline.load_model(args.model)
    corpus = _load_corpus(args.corpus)
    report = pipeline.evaluate(model, corpus, _scan_params(args))
    out.write(f"accuracy {report.accuracy!r}\n")
    out.write(f"total {report.total}\n")
    out.write(f"unknown {report.unknown_count}\n")
    out.write("true," + ",".join([*report.labels, "unknown"]) + "\n")
    for lab, row in zip(report.labels, report.confusion.tolist()):
        out.write(lab + "," + ",".join(str(v) for v in row) + "\n")
    if args.report_out:
        Path(args.report_out).write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    return 0


def cmd_gradcheck(args, out) -> int:
    rng = mlp.SplitMix64(args.seed)
    net = mlp.init_network(args.layers, rng=rng)
    x = np.array([2.0 * rng.uniform() - 1.0 for _ in range(args.layers[0])])
    t = np.array([rng.uniform() for _ in range(args.layers[-1])])
    err = mlp.gradient_check(net, x, t)
    out.write(f"max_relative_error {err!r}\n")
    return 0 if err < 1e-5 else 1


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="facekit", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def scan_flags(sp):
        sp.add_argument("--scale-factor", type=float, default=1.25)
        sp.add_argument("--min-neighbors", type=int, default=3)
        sp.add_argument("--threads", type=_positive_int, default=1)

    sp = sub.add_parser("detect", help="list face (and part) rectangles")
    sp.add_argument("--model", required=True, help="model or cascade JSON")
    scan_flags(sp)
    sp.add_argument("images", nargs="+", metavar="IMG")
    sp.set_defaults(func=cmd_detect)

    sp = sub.add_parser("features", help="write histogram CSVs for one image")
    sp.add_argument("--binary", action="store_true")
    sp.add_argument("--axis", choices=("vertical", "horizontal"), default="vertical")
    sp.add_argument("--no-halves", action="store_true")
    sp.add_argument("--threshold", type=int, default=None, help="binarization level (default: Otsu)")
    sp.add_argument("--model", help="crop the largest face found by this model or cascade first")
    sp.add_argument("--size", type=_size, default=None, help="resize to WxH before histogramming")
    sp.add_argument("--out", help="directory for CSV files (default: stdout)")
    sp.add_argument("image", metavar="IMG")
    sp.set_defaults(func=cmd_features)

    sp = sub.add_parser("train-detector", help="train a Haar cascade")
    sp.add_argument("--positives", required=True)
    sp.add_argument("--negatives", required=True)
    sp.add_argument("--stages", type=_positive_int, default=10)
    sp.add_argument("--fmax", type=float, default=0.5)
    sp.add_argument("--dmin", type=float, default=0.995)
    sp.add_argument("--ftarget", type=float, default=0.001)
    sp.add_argument("--max-weaks", type=_positive_int, default=50)
    sp.add_argument("--max-features", type=int, default=4000)
    sp.add_argument("--base", type=_positive_int, default=24)
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_train_detector)

    sp = sub.add_parser("enroll", help="train a recognizer on a labelled corpus")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--model-out", required=True)
    sp.add_argument("--detector", help="face cascade or model JSON; default uses the whole image")
    sp.add_argument("--hidden", type=_int_list, default=(16,))
    sp.add_argument("--lr", type=float, default=0.1)
    sp.add_argument("--epochs", type=_positive_int, default=1000)
    sp.add_argument("--patience", type=int, default=6, help="0 disables early stopping")
    sp.add_argument("--restarts", type=_positive_int, default=5)
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sp.add_argument("--threads", type=_positive_int, default=1)
    sp.add_argument("--size", type=_size, default=(64, 64), help="canonical crop WxH")
    sp.add_argument("--binary", action="store_true")
    sp.add_argument("--axis", choices=("vertical", "horizontal"), default="vertical")
    sp.add_argument("--no-halves", action="store_true")
    sp.add_argument("--accept-threshold", type=float, default=0.5)
    sp.add_argument("--curves-out")
    sp.add_argument("--regression-out")
    sp.set_defaults(func=cmd_enroll)

    sp = sub.add_parser("recognize", help="identify the face in each image")
    sp.add_argument("--model", required=True)
    scan_flags(sp)
    sp.add_argument("images", nargs="+", metavar="IMG")
    sp.set_defaults(func=cmd_recognize)

    sp = sub.add_parser("eval", help="accuracy and confusion matrix on a labelled corpus")
    sp.add_argument("--model", required=True)
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--report-out")
    scan_flags(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("gradcheck", help="compare backprop with finite differences")
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sp.add_argument("--layers", type=_int_list, default=(4, 5, 3))
    sp.set_defaults(func=cmd_gradcheck)
    return p


def run(argv=None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args, out)
    except (DomainError, pipeline.EnrollmentError, pipeline.ModelFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
