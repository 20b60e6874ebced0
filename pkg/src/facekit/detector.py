"""Multi-scale sliding-window scanning, detection grouping and facial-part search."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boost import Cascade, stages_passed
from .haar import build_integral, round_half_up
from .imgio import GrayImage

# Vertical bands of the face box searched for each part, as (top, bottom) fractions.
PART_BANDS = {
    "eyes": (0.0, 0.55),
    "nose": (0.30, 0.70),
    "mouth": (0.60, 1.0),
}


@dataclass(frozen=True)
class Rect:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError("rect width and height must be >= 1")

    @property
    def area(self) -> int:
        return self.w * self.h

    def iou(self, other: "Rect") -> float:
        ix = max(0, min(self.x + self.w, other.x + other.w) - max(self.x, other.x))
        iy = max(0, min(self.y + self.h, other.y + other.h) - max(self.y, other.y))
        inter = ix * iy
        return inter / (self.area + other.area - inter)

    def contains(self, other: "Rect") -> bool:
        return (self.x <= other.x and self.y <= other.y
                and other.x + other.w <= self.x + self.w
                and other.y + other.h <= self.y + self.h)


@dataclass(frozen=True)
class Detection:
    rect: Rect
    scale: float
    neighbors: int = 1


@dataclass
class ScanParams:
    scale_factor: float = 1.25
    step_fraction: float = 0.05
    min_size: int | None = None
    max_size: int | None = None
    min_neighbors: int = 3
    overlap_eps: float = 0.3

    def __post_init__(self):
        if self.scale_factor <= 1.0:
            raise ValueError("scale_factor must be > 1")
        if not 0.0 < self.overlap_eps < 1.0:
            raise ValueError("overlap_eps must lie in (0, 1)")
        if self.min_size is not None and self.max_size is not None and self.min_size > self.max_size:
            raise ValueError("min_size must not exceed max_size")


def scan_scales(base: int, width: int, height: int, p: ScanParams):
    """(scale, window size) pairs from small to large that fit the image and size limits."""
    lo = p.min_size if p.min_size is not None else base
    hi = min(width, height)
    if p.max_size is not None:
        hi = min(hi, p.max_size)
    out = []
    k = 0
    while True:
        scale = p.scale_factor ** k
        size = base if k == 0 else round_half_up(base * scale)
        if size > hi:
            break
        if size >= lo:
            out.append((scale, size))
        k += 1
    return out


def scan(img: GrayImage, c: Cascade, p: ScanParams | None = None) -> list[Detection]:
    """Every window the cascade accepts, ungrouped, in scale then row-major order."""
    p = p or ScanParams()
    ii = build_integral(img)
    out = []
    for scale, size in scan_scales(c.base_window, img.width, img.height, p):
        step = max(1, round_half_up(p.step_fraction * size))
        ys = np.arange(0, img.height - size + 1, step)
        xs = np.arange(0, img.width - size + 1, step)
        oy, ox = np.meshgrid(ys, xs, indexing="ij")
        oy, ox = oy.ravel(), ox.ravel()
        passed = stages_passed(c, ii, ox, oy, scale)
        for i in np.flatnonzero(passed == len(c.stages)):
            out.append(Detection(Rect(int(ox[i]), int(oy[i]), size, size), scale))
    return out


def _find(parent, i):
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


def _merge_once(raw: list[Detection], overlap_eps: float) -> list[Detection]:
    n = len(raw)
    parent = list(range(n))
    if n:
        box = np.array([[d.rect.x, d.rect.y, d.rect.x + d.rect.w, d.rect.y + d.rect.h] for d in raw],
                       dtype=np.int64)
        area = (box[:, 2] - box[:, 0]) * (box[:, 3] - box[:, 1])
    for i in range(n - 1):
        rest = box[i + 1:]
        ix = np.clip(np.minimum(box[i, 2], rest[:, 2]) - np.maximum(box[i, 0], rest[:, 0]), 0, None)
        iy = np.clip(np.minimum(box[i, 3], rest[:, 3]) - np.maximum(box[i, 1], rest[:, 1]), 0, None)
        inter = ix * iy
        iou = inter / (area[i] + area[i + 1:] - inter)
        for j in np.flatnonzero(iou >= overlap_eps) + i + 1:
            ri, rj = _find(parent, i), _find(parent, int(j))
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)
    classes: dict[int, list[Detection]] = {}
    for i in range(n):
        classes.setdefault(_find(parent, i), []).append(raw[i])

    out = []
    for members in classes.values():
        if len(members) == 1:
            out.append(members[0])
            continue
        support = sum(d.neighbors for d in members)

        def avg(attr):
            return sum(getattr(d.rect, attr) * d.neighbors for d in members) / support

        rect = Rect(round_half_up(avg("x")), round_half_up(avg("y")),
                    max(1, round_half_up(avg("w"))), max(1, round_half_up(avg("h"))))
        scale = sum(d.scale * d.neighbors for d in members) / support
        out.append(Detection(rect, scale, support))
    return out


def group_detections(raw: list[Detection], min_neighbors: int = 3,
                     overlap_eps: float = 0.3) -> list[Detection]:
    """Merge detections connected by IoU >= ``overlap_eps`` (transitively).

    Each class becomes one rect, the average of its members weighted by their
    ``neighbors`` count, which is summed as the class support. Merging repeats
    until no two merged rects overlap, so re-grouping an already grouped list
    is a no-op. Classes with support below ``min_neighbors`` are dropped.
    """
    merged = list(raw)
    while True:
        nxt = _merge_once(merged, overlap_eps)
        if len(nxt) == len(merged):
            break
        merged = nxt
    out = [d for d in merged if d.neighbors >= min_neighbors]
    out.sort(key=lambda d: (d.rect.y, d.rect.x, d.rect.w))
    return out


def _clip(d: Detection, width: int, height: int) -> Detection:
    x, y = min(d.rect.x, width - 1), min(d.rect.y, height - 1)
    r = Rect(x, y, min(d.rect.w, width - x), min(d.rect.h, height - y))
    return Detection(r, d.scale, d.neighbors)


def detect(img: GrayImage, c: Cascade, p: ScanParams | None = None) -> list[Detection]:
    """Scan then group; merged rects are clipped to the image."""
    p = p or ScanParams()
    grouped = group_detections(scan(img, c, p), p.min_neighbors, p.overlap_eps)
    return [_clip(d, img.width, img.height) for d in grouped]


def part_region(face: Rect, part: str) -> Rect | None:
    top, bottom = PART_BANDS[part]
    y0 = face.y + round_half_up(top * face.h)
    y1 = face.y + round_half_up(bottom * face.h)
    if y1 <= y0:
        return None
    return Rect(face.x, y0, face.w, y1 - y0)


def detect_parts(img: GrayImage, face: Rect, parts: dict[str, Cascade],
                 p: ScanParams | None = None) -> dict[str, list[Detection]]:
    """Scan each part cascade inside its band of the face box.

    Rects come back in full-image coordinates. A band smaller than the part
    cascade's base window yields an empty list.
    """
    p = p or ScanParams()
    if face.x < 0 or face.y < 0 or face.x + face.w > img.width or face.y + face.h > img.height:
        raise ValueError(f"face rect {face} outside {img.width}x{img.height} image")
    out = {}
    for name, cascade in parts.items():
        if name not in PART_BANDS:
            raise KeyError(f"unknown facial part {name!r}; expected one of {sorted(PART_BANDS)}")
        region = part_region(face, name)
        if region is None or region.w < cascade.base_window or region.h < cascade.base_window:
            out[name] = []
            continue
        crop = GrayImage(img.pixels[region.y:region.y + region.h, region.x:region.x + region.w])
        found = detect(crop, cascade, p)
        out[name] = [
            Detection(Rect(d.rect.x + region.x, d.rect.y + region.y, d.rect.w, d.rect.h), d.scale, d.neighbors)
            for d in found
        ]
    return out


def largest_detection(dets: list[Detection]) -> Detection | None:
    """Largest rect; ties go to the topmost, then leftmost."""
    if not dets:
        return None
    return min(dets, key=lambda d: (-d.rect.area, d.rect.y, d.rect.x))
