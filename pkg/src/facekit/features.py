"""Half-image segmentation and histogram feature vectors for the recognizer."""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass

import numpy as np

from .imgio import BinaryImage, GrayImage, binarize, otsu_threshold


@dataclass(frozen=True, eq=False)
class Histogram:
    bins: np.ndarray

    @property
    def total(self) -> int:
        return int(self.bins.sum())

    def frequencies(self) -> np.ndarray:
        return self.bins / self.total

    def __add__(self, other: "Histogram") -> "Histogram":
        return Histogram(self.bins + other.bins)

    def __eq__(self, other):
        return isinstance(other, Histogram) and np.array_equal(self.bins, other.bins)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin", "count", "frequency"])
        for b, (c, f) in enumerate(zip(self.bins.tolist(), self.frequencies().tolist())):
            w.writerow([b, c, repr(f)])
        return buf.getvalue()


@dataclass(frozen=True)
class FeatureConfig:
    use_whole: bool = True
    use_halves: bool = True
    use_binary: bool = False
    axis: str = "vertical"
    # None: Otsu threshold of the whole face, shared by its halves
    threshold: int | None = None

    def __post_init__(self):
        if self.axis not in ("vertical", "horizontal"):
            raise ValueError("axis must be 'vertical' or 'horizontal'")
        if not (self.use_whole or self.use_halves):
            raise ValueError("feature config selects no image region")

    def layout(self) -> list[str]:
        regions = (["whole"] if self.use_whole else []) + (["left", "right"] if self.use_halves else [])
        if self.axis == "horizontal":
            regions = [{"left": "top", "right": "bottom"}.get(r, r) for r in regions]
        out = [f"{r}-gray" for r in regions]
        if self.use_binary:
            out += [f"{r}-binary" for r in regions]
        return out

    def length(self) -> int:
        return sum(2 if name.endswith("binary") else 256 for name in self.layout())

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        return cls(**d)


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray
    layout: tuple[str, ...]


def split_halves(img, axis: str = "vertical"):
    """Two equal parts; the first takes the extra row/column when the size is odd."""
    px = img.pixels
    kind = type(img)
    if axis == "vertical":
        if px.shape[1] < 2:
            raise ValueError("image must be at least 2 pixels wide to split vertically")
        cut = (px.shape[1] + 1) // 2
        return kind(px[:, :cut].copy()), kind(px[:, cut:].copy())
    if axis == "horizontal":
        if px.shape[0] < 2:
            raise ValueError("image must be at least 2 pixels tall to split horizontally")
        cut = (px.shape[0] + 1) // 2
        return kind(px[:cut].copy()), kind(px[cut:].copy())
    raise ValueError("axis must be 'vertical' or 'horizontal'")


def gray_histogram(img: GrayImage) -> Histogram:
    return Histogram(np.bincount(img.pixels.ravel(), minlength=256).astype(np.int64))


def binary_histogram(img: BinaryImage) -> Histogram:
    return Histogram(np.bincount(img.pixels.ravel(), minlength=2).astype(np.int64))


def histograms(face: GrayImage, config: FeatureConfig) -> dict[str, Histogram]:
    """Named histograms for ``face`` in the order given by ``config.layout()``."""
    regions = {}
    if config.use_whole:
        regions["whole"] = face
    if config.use_halves:
        a, b = split_halves(face, config.axis)
        names = ("left", "right") if config.axis == "vertical" else ("top", "bottom")
        regions[names[0]], regions[names[1]] = a, b

    out = {f"{name}-gray": gray_histogram(im) for name, im in regions.items()}
    if config.use_binary:
        t = config.threshold if config.threshold is not None else otsu_threshold(face)
        for name, im in regions.items():
            out[f"{name}-binary"] = binary_histogram(binarize(im, t))
    return out


def build_feature_vector(face: GrayImage, config: FeatureConfig | None = None) -> FeatureVector:
    """Concatenate per-region histograms, each normalised to frequencies."""
    config = config or FeatureConfig()
    hists = histograms(face, config)
    layout = tuple(config.layout())
    values = np.concatenate([hists[name].frequencies() for name in layout])
    return FeatureVector(values, layout)
