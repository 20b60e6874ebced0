"""Integral images and Haar-like features over a square detection window."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .imgio import GrayImage

BASE_WINDOW = 24

# kind -> (horizontal units, vertical units, [(unit dx, unit dy, weight), ...])
# White regions carry positive weight. Line kinds weight the middle rect by 2
# so white and black areas balance.
KINDS = {
    "edge-horizontal": (1, 2, [(0, 0, 1), (0, 1, -1)]),
    "edge-vertical": (2, 1, [(0, 0, 1), (1, 0, -1)]),
    "line-horizontal": (1, 3, [(0, 0, 1), (0, 1, -2), (0, 2, 1)]),
    "line-vertical": (3, 1, [(0, 0, 1), (1, 0, -2), (2, 0, 1)]),
    "four-rect": (2, 2, [(0, 0, 1), (1, 0, -1), (0, 1, -1), (1, 1, 1)]),
}
KIND_NAMES = tuple(KINDS)


def round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


class IntegralImage:
    """Exclusive prefix sums of pixels and squared pixels.

    ``table[y, x]`` is the sum of pixels with row < y and col < x, so both
    tables have shape (height + 1, width + 1) with a zero first row/column.
    """

    def __init__(self, table: np.ndarray, squared: np.ndarray):
        self.table = table
        self.squared = squared

    @property
    def width(self) -> int:
        return self.table.shape[1] - 1

    @property
    def height(self) -> int:
        return self.table.shape[0] - 1


def build_integral(img: GrayImage | np.ndarray) -> IntegralImage:
    px = img.pixels if isinstance(img, GrayImage) else np.asarray(img)
    px = px.astype(np.uint64)
    h, w = px.shape
    table = np.zeros((h + 1, w + 1), dtype=np.uint64)
    squared = np.zeros((h + 1, w + 1), dtype=np.uint64)
    table[1:, 1:] = px.cumsum(axis=0).cumsum(axis=1)
    squared[1:, 1:] = (px * px).cumsum(axis=0).cumsum(axis=1)
    return IntegralImage(table, squared)


def _check_rect(ii: IntegralImage, x, y, w, h):
    if w < 1 or h < 1 or x < 0 or y < 0 or x + w > ii.width or y + h > ii.height:
        raise IndexError(f"rectangle ({x}, {y}, {w}, {h}) outside {ii.width}x{ii.height} image")


def rect_sum(ii: IntegralImage, x: int, y: int, w: int, h: int) -> int:
    _check_rect(ii, x, y, w, h)
    t = ii.table
    return int(t[y + h, x + w]) - int(t[y, x + w]) - int(t[y + h, x]) + int(t[y, x])


def rect_sq_sum(ii: IntegralImage, x: int, y: int, w: int, h: int) -> int:
    _check_rect(ii, x, y, w, h)
    t = ii.squared
    return int(t[y + h, x + w]) - int(t[y, x + w]) - int(t[y + h, x]) + int(t[y, x])


@dataclass(frozen=True)
class HaarFeature:
    """A Haar-like feature placed in the base window.

    ``w`` and ``h`` are the size of one unit rectangle; the full extent is
    ``w * units_x`` by ``h * units_y`` for the kind.
    """

    kind: str
    x: int
    y: int
    w: int
    h: int

    @property
    def extent(self) -> tuple[int, int]:
        ux, uy, _ = KINDS[self.kind]
        return self.w * ux, self.h * uy

    def scaled(self, scale: float, window: int) -> "ScaledFeature":
        """Scale unit sizes and offsets to a window of ``window`` pixels.

        Offsets and unit sizes are rounded half up independently, so every unit
        rect keeps the same size and the kind's geometry is preserved. A unit
        size that rounds past the window is clamped, and an extent that spills
        over is shifted back inside.
        """
        ux, uy, parts = KINDS[self.kind]
        if scale == 1.0:
            x, y, w, h = self.x, self.y, self.w, self.h
        else:
            x, y = round_half_up(self.x * scale), round_half_up(self.y * scale)
            w = min(max(1, round_half_up(self.w * scale)), window // ux)
            h = min(max(1, round_half_up(self.h * scale)), window // uy)
            x = min(x, window - ux * w)
            y = min(y, window - uy * h)
        if x < 0 or y < 0:
            raise IndexError(f"{self} does not fit a {window}px window at scale {scale}")
        rects = tuple((x + dx * w, y + dy * h, w, h, wt) for dx, dy, wt in parts)
        area_ratio = (self.w * self.h) / (w * h)
        return ScaledFeature(rects, area_ratio)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "x": self.x, "y": self.y, "w": self.w, "h": self.h}

    @classmethod
    def from_dict(cls, d: dict) -> "HaarFeature":
        if d["kind"] not in KINDS:
            raise ValueError(f"unknown Haar kind {d['kind']!r}")
        return cls(d["kind"], int(d["x"]), int(d["y"]), int(d["w"]), int(d["h"]))


@dataclass(frozen=True)
class ScaledFeature:
    rects: tuple  # (x, y, w, h, weight) relative to window origin
    area_ratio: float

    def corners(self):
        """Integral-table lookups as (dy, dx, coefficient), merged and sorted."""
        acc: dict[tuple[int, int], int] = {}
        for x, y, w, h, wt in self.rects:
            for dy, dx, sign in ((y + h, x + w, 1), (y, x + w, -1), (y + h, x, -1), (y, x, 1)):
                acc[(dy, dx)] = acc.get((dy, dx), 0) + sign * wt
        items = sorted((k, v) for k, v in acc.items() if v != 0)
        dy = np.array([k[0] for k, _ in items], dtype=np.intp)
        dx = np.array([k[1] for k, _ in items], dtype=np.intp)
        coef = np.array([v for _, v in items], dtype=np.int64)
        return dy, dx, coef


def enumerate_features(base: int = BASE_WINDOW) -> list[HaarFeature]:
    """All features of the five kinds fitting a ``base`` x ``base`` window.

    Ordered kind-major, then y, x, h, w ascending.
    """
    if base < 4:
        raise ValueError("base window must be at least 4 pixels")
    out = []
    for kind, (ux, uy, _) in KINDS.items():
        for y in range(base):
            for x in range(base):
                for h in range(1, (base - y) // uy + 1):
                    for w in range(1, (base - x) // ux + 1):
                        out.append(HaarFeature(kind, x, y, w, h))
    return out


def window_inv_sigma(ii: IntegralImage, ox, oy, size: int):
    """Reciprocal standard deviation of square windows, with a floor of 1 on sigma.

    ``ox``/``oy`` may be scalars or arrays of window origins.
    """
    ox = np.asarray(ox, dtype=np.intp)
    oy = np.asarray(oy, dtype=np.intp)

    def box(t):
        return t[oy + size, ox + size] - t[oy, ox + size] - t[oy + size, ox] + t[oy, ox]

    return _inv_sigma(box(ii.table), box(ii.squared), size * size)


def _inv_sigma(s, sq, n: int):
    # s and sq are exact integer sums; every caller goes through here so
    # training and scanning produce bit-identical normalisers.
    n = float(n)
    mean = np.asarray(s, dtype=np.float64) / n
    var = np.asarray(sq, dtype=np.float64) / n - mean * mean
    sigma = np.sqrt(np.maximum(var, 0.0))
    return 1.0 / np.maximum(sigma, 1.0)


def eval_feature(f: HaarFeature, ii: IntegralImage, ox: int, oy: int,
                 scale: float = 1.0, inv_sigma: float = 1.0, base: int = BASE_WINDOW) -> float:
    """(white sum - black sum) * inv_sigma for ``f`` scaled into the window at (ox, oy).

    At scale != 1 the value is renormalised by the unit-area ratio so it stays
    comparable with thresholds learned in the base window.
    """
    if scale < 1.0:
        raise ValueError("scale must be >= 1")
    window = base if scale == 1.0 else round_half_up(base * scale)
    sf = f.scaled(scale, window)
    raw = 0
    for x, y, w, h, wt in sf.rects:
        raw += wt * rect_sum(ii, ox + x, oy + y, w, h)
    return raw * inv_sigma * sf.area_ratio


def feature_matrix(features, base: int = BASE_WINDOW):
    """Sparse (n_features x (base+1)^2) map from a flattened integral table to raw feature values."""
    from scipy.sparse import csr_matrix

    rows, cols, vals = [], [], []
    stride = base + 1
    for i, f in enumerate(features):
        dy, dx, coef = f.scaled(1.0, base).corners()
        rows.extend([i] * len(coef))
        cols.extend((dy * stride + dx).tolist())
        vals.extend(coef.tolist())
    return csr_matrix((np.array(vals, dtype=np.float64), (rows, cols)),
                      shape=(len(features), stride * stride))


def window_features(windows, features, base: int = BASE_WINDOW) -> np.ndarray:
    """Variance-normalised feature values for a stack of base-size windows.

    Returns an (n_windows x n_features) float64 array. Raw rect sums are
    integers well below 2**53, so the sparse product is exact.
    """
    windows = np.asarray(windows)
    if windows.ndim != 3 or windows.shape[1:] != (base, base):
        raise ValueError(f"expected windows of shape (n, {base}, {base})")
    n = len(windows)
    tables = np.zeros((n, base + 1, base + 1), dtype=np.float64)
    px = windows.astype(np.float64)
    tables[:, 1:, 1:] = px.cumsum(axis=1).cumsum(axis=2)
    raw = (feature_matrix(features, base) @ tables.reshape(n, -1).T).T
    w64 = windows.astype(np.uint64)
    inv = _inv_sigma(w64.sum(axis=(1, 2)), (w64 * w64).sum(axis=(1, 2)), base * base)
    return raw * inv[:, None]
