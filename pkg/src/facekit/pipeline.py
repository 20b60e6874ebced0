"""Enrollment, recognition, evaluation and model persistence.

A model bundles the face cascade, optional part cascades, the histogram
feature layout and the trained network. Images pass through the same path at
enrollment and recognition time: detect the largest face, crop it, resize to
the canonical size, build the feature vector.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import mlp
from .boost import Cascade
from .detector import Rect, ScanParams, detect, largest_detection
from .features import FeatureConfig, build_feature_vector
from .imgio import GrayImage, RasterImage, resize_bilinear, to_grayscale

FORMAT_VERSION = 1

__all__ = [
    "FORMAT_VERSION",
    "ModelConfig",
    "RecognizerModel",
    "Recognition",
    "EvalReport",
    "EnrollmentError",
    "ModelFileError",
    "ModelVersionError",
    "ModelSchemaError",
    "ModelDimensionError",
    "locate_face",
    "face_features",
    "enroll",
    "recognize",
    "evaluate",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
]


class EnrollmentError(ValueError):
    pass


class ModelFileError(ValueError):
    """Base class for unreadable model files."""


class ModelVersionError(ModelFileError):
    pass


class ModelSchemaError(ModelFileError):
    pass


class ModelDimensionError(ModelFileError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    # None crops the whole image instead of running a detector
    face_cascade: Cascade | None = None
    part_cascades: dict = field(default_factory=dict)
    canonical_size: tuple[int, int] = (64, 64)  # (width, height)
    feature_config: FeatureConfig = FeatureConfig()
    accept_threshold: float = 0.5
    scan_params: ScanParams = ScanParams()


@dataclass(frozen=True, eq=False)
class RecognizerModel:
    face_cascade: Cascade | None
    part_cascades: dict
    canonical_size: tuple[int, int]
    feature_config: FeatureConfig
    network: mlp.Network
    labels: tuple[str, ...]
    accept_threshold: float = 0.5
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "canonical_size", tuple(int(v) for v in self.canonical_size))
        _check_model(self, ModelDimensionError)


def _check_model(m: RecognizerModel, dim_error=ValueError):
    if not m.labels:
        raise ModelSchemaError("model has no labels")
    if len(set(m.labels)) != len(m.labels):
        raise ModelSchemaError("model labels must be unique")
    if not 0.0 <= m.accept_threshold < 1.0:
        raise ModelSchemaError("accept_threshold must lie in [0, 1)")
    w, h = m.canonical_size
    if w < 2 or h < 2:
        raise ModelSchemaError("canonical size must be at least 2x2")
    if m.network.n_inputs != m.feature_config.length():
        raise dim_error(f"network takes {m.network.n_inputs} inputs but the feature "
                        f"config yields {m.feature_config.length()}")
    if m.network.n_outputs != len(m.labels):
        raise dim_error(f"network has {m.network.n_outputs} outputs for {len(m.labels)} labels")


@dataclass(frozen=True)
class Recognition:
    label: str | None  # None means unknown
    confidence: float
    face: Rect | None = None

    @property
    def unknown(self) -> bool:
        return self.label is None


@dataclass
class EvalReport:
    labels: tuple[str, ...]
    # rows: true label, columns: predicted label then "unknown"
    confusion: np.ndarray
    predictions: list[Recognition]

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.confusion[:, :-1])) / self.total if self.total else 0.0

    @property
    def unknown_count(self) -> int:
        return int(self.confusion[:, -1].sum())

    def precision(self) -> dict[str, float]:
        cols = self.confusion[:, :-1].sum(axis=0)
        return {lab: (float(self.confusion[i, i]) / cols[i] if cols[i] else 0.0)
                for i, lab in enumerate(self.labels)}

    def recall(self) -> dict[str, float]:
        rows = self.confusion.sum(axis=1)
        return {lab: (float(self.confusion[i, i]) / rows[i] if rows[i] else 0.0)
                for i, lab in enumerate(self.labels)}

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "total": self.total,
            "unknown": self.unknown_count,
            "labels": list(self.labels),
            "precision": self.precision(),
            "recall": self.recall(),
            "confusion": self.confusion.tolist(),
            "confusion_columns": [*self.labels, "unknown"],
        }


# ---------------------------------------------------------------------------
# shared image path


def _gray(img) -> GrayImage:
    if isinstance(img, (GrayImage, RasterImage)):
        return to_grayscale(img)
    return GrayImage(np.asarray(img))


def locate_face(img: GrayImage, face_cascade: Cascade | None,
                params: ScanParams | None = None) -> Rect | None:
    """Largest detected face, the whole image without a cascade, None if nothing is found."""
    if face_cascade is None:
        return Rect(0, 0, img.width, img.height)
    best = largest_detection(detect(img, face_cascade, params))
    return best.rect if best is not None else None


def face_features(img: GrayImage, face: Rect, canonical_size, config: FeatureConfig) -> np.ndarray:
    crop = GrayImage(img.pixels[face.y:face.y + face.h, face.x:face.x + face.w])
    w, h = canonical_size
    return build_feature_vector(resize_bilinear(crop, w, h), config).values


def _featurize(img, face_cascade, canonical_size, config, params):
    gray = _gray(img)
    face = locate_face(gray, face_cascade, params)
    if face is None:
        return None, None
    return face, face_features(gray, face, canonical_size, config)


# ---------------------------------------------------------------------------
# enrollment and recognition


def enroll(corpus, model_config: ModelConfig | None = None,
           train_config: mlp.TrainConfig | None = None, threads: int = 1):
    """Train a recognizer from ``(label, image)`` pairs.

    Labels are ordered by sorted name. Images without a detected face are
    skipped and listed by corpus index in ``report.skipped``.
    """
    mc = model_config or ModelConfig()
    tc = train_config or mlp.TrainConfig()
    corpus = list(corpus)
    labels = tuple(sorted({lab for lab, _ in corpus}))
    if len(labels) < 2:
        raise EnrollmentError("enrollment needs at least 2 identities")
    for lab in labels:
        n = sum(1 for l, _ in corpus if l == lab)
        if n < 3:
            raise EnrollmentError(f"identity {lab!r} has {n} images, at least 3 are required")

    index = {lab: i for i, lab in enumerate(labels)}
    xs, ys, skipped, used = [], [], [], set()
    for i, (lab, img) in enumerate(corpus):
        _, vec = _featurize(img, mc.face_cascade, mc.canonical_size, mc.feature_config, mc.scan_params)
        if vec is None:
            skipped.append(i)
            continue
        t = np.zeros(len(labels))
        t[index[lab]] = 1.0
        xs.append(vec)
        ys.append(t)
        used.add(lab)

    for lab in labels:
        if lab not in used:
            raise EnrollmentError(f"no face was detected in any image of identity {lab!r}")

    net, report = mlp.train(np.array(xs), np.array(ys), tc, threads=threads)
    report.skipped = skipped
    model = RecognizerModel(mc.face_cascade, dict(mc.part_cascades), mc.canonical_size,
                            mc.feature_config, net, labels, mc.accept_threshold)
    return model, report


def recognize(model: RecognizerModel, img, params: ScanParams | None = None) -> Recognition:
    face, vec = _featurize(img, model.face_cascade, model.canonical_size, model.feature_config, params)
    if vec is None:
        return Recognition(None, 0.0, None)
    if vec.shape[0] != model.network.n_inputs:
        raise ModelDimensionError(f"feature vector of length {vec.shape[0]} does not fit "
                                  f"a network with {model.network.n_inputs} inputs")
    out = model.network.predict(vec)
    k = int(np.argmax(out))
    conf = float(out[k])
    if conf >= model.accept_threshold:
        return Recognition(model.labels[k], conf, face)
    return Recognition(None, conf, face)


def evaluate(model: RecognizerModel, corpus, params: ScanParams | None = None) -> EvalReport:
    """Recognize every ``(label, image)`` pair; unknown answers count as errors."""
    corpus = list(corpus)
    index = {lab: i for i, lab in enumerate(model.labels)}
    missing = sorted({lab for lab, _ in corpus} - set(index))
    if missing:
        raise ValueError(f"labels not known to the model: {missing}")
    n = len(model.labels)
    confusion = np.zeros((n, n + 1), dtype=np.int64)
    preds = []
    for lab, img in corpus:
        r = recognize(model, img, params)
        preds.append(r)
        confusion[index[lab], n if r.unknown else index[r.label]] += 1
    return EvalReport(model.labels, confusion, preds)


# ---------------------------------------------------------------------------
# persistence


def model_to_dict(m: RecognizerModel) -> dict:
    net = m.network
    return {
        "format_version": m.format_version,
        "canonical_size": list(m.canonical_size),
        "accept_threshold": m.accept_threshold,
        "labels": list(m.labels),
        "feature_config": m.feature_config.to_dict(),
        "face_cascade": m.face_cascade.to_dict() if m.face_cascade is not None else None,
        "part_cascades": {k: c.to_dict() for k, c in sorted(m.part_cascades.items())},
        "network": {
            "layer_sizes": list(net.layer_sizes),
            "weights": [w.ravel().tolist() for w in net.weights],
            "biases": [b.tolist() for b in net.biases],
            "output_activation": net.output_activation,
            "input_center": None if net.input_center is None else net.input_center.tolist(),
            "input_gain": None if net.input_gain is None else net.input_gain.tolist(),
        },
    }


_REQUIRED = ("format_version", "canonical_size", "accept_threshold", "labels",
             "feature_config", "face_cascade", "part_cascades", "network")


def _float_list(v, what):
    if not isinstance(v, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        raise ModelSchemaError(f"{what} must be a list of numbers")
    arr = np.array(v, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ModelSchemaError(f"{what} contains non-finite values")
    return arr


def model_from_dict(d) -> RecognizerModel:
    if not isinstance(d, dict):
        raise ModelSchemaError("model file must hold a JSON object")
    if "format_version" not in d:
        raise ModelSchemaError("missing format_version")
    if d["format_version"] != FORMAT_VERSION:
        raise ModelVersionError(f"unsupported model format_version {d['format_version']!r}")
    absent = [k for k in _REQUIRED if k not in d]
    if absent:
        raise ModelSchemaError(f"missing keys: {absent}")
    try:
        netd = d["network"]
        sizes = [int(s) for s in netd["layer_sizes"]]
        if len(sizes) < 2 or min(sizes) < 1:
            raise ModelSchemaError("layer_sizes must list >= 2 positive sizes")
        if len(netd["weights"]) != len(sizes) - 1 or len(netd["biases"]) != len(sizes) - 1:
            raise ModelDimensionError("weight and bias lists do not match layer_sizes")
        weights, biases = [], []
        for k in range(len(sizes) - 1):
            w = _float_list(netd["weights"][k], f"weights[{k}]")
            b = _float_list(netd["biases"][k], f"biases[{k}]")
            if w.size != sizes[k] * sizes[k + 1] or b.size != sizes[k + 1]:
                raise ModelDimensionError(f"layer {k} parameters do not match layer_sizes")
            weights.append(w.reshape(sizes[k + 1], sizes[k]))
            biases.append(b)
        scaling = [None, None]
        for j, key in enumerate(("input_center", "input_gain")):
            if netd.get(key) is not None:
                scaling[j] = _float_list(netd[key], key)
                if scaling[j].size != sizes[0]:
                    raise ModelDimensionError(f"{key} has {scaling[j].size} entries for {sizes[0]} inputs")
        if (scaling[0] is None) != (scaling[1] is None):
            raise ModelSchemaError("input_center and input_gain must both be present or both absent")
        net = mlp.Network(sizes, weights, biases, netd.get("output_activation", "sigmoid"), *scaling)
        fc = FeatureConfig.from_dict(d["feature_config"])
        face = Cascade.from_dict(d["face_cascade"]) if d["face_cascade"] is not None else None
        parts = {str(k): Cascade.from_dict(v) for k, v in d["part_cascades"].items()}
        labels = d["labels"]
        if not isinstance(labels, list) or not all(isinstance(s, str) for s in labels):
            raise ModelSchemaError("labels must be a list of strings")
        size = d["canonical_size"]
        if not isinstance(size, list) or len(size) != 2:
            raise ModelSchemaError("canonical_size must be [width, height]")
        thr = float(d["accept_threshold"])
    except ModelFileError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise ModelSchemaError(f"malformed model: {exc}") from None
    return RecognizerModel(face, parts, tuple(size), fc, net, tuple(labels), thr, FORMAT_VERSION)


def save_model(m: RecognizerModel, destination) -> None:
    # json writes floats with repr, the shortest string that parses back to the same double
    text = json.dumps(model_to_dict(m), allow_nan=False, separators=(",", ":"))
    Path(destination).write_text(text + "\n", encoding="utf-8")


def load_model(source) -> RecognizerModel:
    try:
        d = json.loads(Path(source).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelSchemaError(f"model file is not valid JSON: {exc}") from None
    return model_from_dict(d)
