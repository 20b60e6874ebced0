"""Synthetic face, eye and background generators with known ground truth.

Faces are rendered from a handful of geometric and intensity parameters: a
skin-toned square with a dark eye band holding two darker eye blobs, bright
cheeks and a dark mouth bar. Negatives are low-pass filtered noise.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.ndimage import gaussian_filter

from .detector import Rect
from .imgio import GrayImage, resize_bilinear


@dataclass(frozen=True)
class FaceParams:
    skin: float = 170.0
    eye_band_depth: float = 45.0
    eye_depth: float = 40.0
    eye_row: float = 0.33  # centre of the eye band, fraction of face height
    eye_band_height: float = 0.17
    eye_width: float = 0.22
    eye_gap: float = 0.14  # half the distance between eye centres minus half an eye width
    cheek_gain: float = 12.0
    mouth_row: float = 0.78
    mouth_width: float = 0.45
    mouth_depth: float = 45.0


def random_face_params(rng: np.random.Generator) -> FaceParams:
    return FaceParams(
        skin=rng.uniform(110, 215),
        eye_band_depth=rng.uniform(30, 70),
        eye_depth=rng.uniform(25, 60),
        eye_row=rng.uniform(0.33, 0.36),
        eye_band_height=rng.uniform(0.16, 0.22),
        eye_width=rng.uniform(0.18, 0.26),
        eye_gap=rng.uniform(0.10, 0.18),
        cheek_gain=rng.uniform(5, 20),
        mouth_row=rng.uniform(0.74, 0.82),
        mouth_width=rng.uniform(0.35, 0.55),
        mouth_depth=rng.uniform(30, 60),
    )


def identity_profiles(n: int = 3) -> list[FaceParams]:
    """``n`` clearly distinct people (intensity and geometry differ)."""
    base = [
        FaceParams(skin=125, eye_band_depth=35, eye_depth=30, eye_row=0.30, eye_width=0.20,
                   eye_gap=0.16, mouth_row=0.80, mouth_width=0.40, mouth_depth=35),
        FaceParams(skin=165, eye_band_depth=55, eye_depth=45, eye_row=0.34, eye_width=0.24,
                   eye_gap=0.12, mouth_row=0.77, mouth_width=0.50, mouth_depth=50),
        FaceParams(skin=205, eye_band_depth=65, eye_depth=55, eye_row=0.36, eye_width=0.22,
                   eye_gap=0.14, mouth_row=0.79, mouth_width=0.36, mouth_depth=60),
    ]
    if n <= len(base):
        return base[:n]
    rng = np.random.default_rng(n)
    return base + [random_face_params(rng) for _ in range(n - len(base))]


def _bands(size: int, p: FaceParams):
    def px(f):
        return int(round(f * size))

    band_top = px(p.eye_row - p.eye_band_height / 2)
    band_bot = max(band_top + 1, px(p.eye_row + p.eye_band_height / 2))
    ew = max(1, px(p.eye_width))
    gap = px(p.eye_gap)
    mid = size / 2
    left_x = int(round(mid - gap - ew))
    right_x = int(round(mid + gap))
    eh = max(1, (band_bot - band_top) * 2 // 3)
    eye_y = px(p.eye_row) - eh // 2
    return band_top, band_bot, ew, eh, eye_y, left_x, right_x


def render_face(size: int, p: FaceParams, rng: np.random.Generator | None = None,
                noise_sigma: float = 8.0) -> np.ndarray:
    """Float image of a ``size`` x ``size`` face, noise added, not yet clipped."""
    img = np.full((size, size), p.skin, dtype=np.float64)
    band_top, band_bot, ew, eh, eye_y, left_x, right_x = _bands(size, p)
    img[band_top:band_bot] -= p.eye_band_depth
    for ex in (left_x, right_x):
        img[eye_y:eye_y + eh, ex:ex + ew] -= p.eye_depth
    cheek_top = band_bot + max(1, size // 24)
    cheek_bot = int(round((p.mouth_row - 0.08) * size))
    img[cheek_top:cheek_bot] += p.cheek_gain
    mh = max(1, int(round(0.07 * size)))
    mw = max(1, int(round(p.mouth_width * size)))
    my = int(round(p.mouth_row * size)) - mh // 2
    mx = int(round((size - mw) / 2))
    img[my:my + mh, mx:mx + mw] -= p.mouth_depth
    if rng is not None and noise_sigma > 0:
        img = img + rng.normal(0.0, noise_sigma, img.shape)
    return img


def eye_rects(face: Rect, p: FaceParams) -> list[Rect]:
    """Square boxes (twice the eye width) centred on the two rendered eyes."""
    size = face.w
    _, _, ew, eh, eye_y, left_x, right_x = _bands(size, p)
    side = 2 * ew
    cy = eye_y + eh / 2
    out = []
    for ex in (left_x, right_x):
        cx = ex + ew / 2
        out.append(Rect(face.x + int(round(cx - side / 2)), face.y + int(round(cy - side / 2)), side, side))
    return out


def _to_u8(img):
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def face_windows(n: int, rng: np.random.Generator, size: int = 24,
                 noise_sigma: float = 8.0, shift: int = 0) -> np.ndarray:
    """``n`` random aligned faces filling a ``size`` window, with contrast and brightness jitter.

    ``shift`` > 0 renders a larger face and crops it at a random offset of up
    to ``shift`` pixels each way.
    """
    out = np.empty((n, size, size), dtype=np.uint8)
    for i in range(n):
        big = render_face(size + 2 * shift, random_face_params(rng), rng, noise_sigma)
        dy, dx = rng.integers(0, 2 * shift + 1, size=2)
        img = big[dy:dy + size, dx:dx + size]
        gain = rng.uniform(0.75, 1.25)
        img = (img - img.mean()) * gain + img.mean() + rng.uniform(-20, 20)
        out[i] = _to_u8(img)
    return out


def noise_windows(n: int, rng: np.random.Generator, size: int = 24) -> np.ndarray:
    """Low-pass filtered noise with random smoothness, mean and contrast."""
    out = np.empty((n, size, size), dtype=np.uint8)
    for i in range(n):
        out[i] = _to_u8(filtered_noise((size, size), rng))
    return out


def filtered_noise(shape, rng: np.random.Generator) -> np.ndarray:
    """Gaussian-filtered noise; independent row/column widths give blobs or stripes."""
    sigma = (rng.uniform(0.7, 6.0), rng.uniform(0.7, 6.0))
    raw = gaussian_filter(rng.normal(size=shape), sigma=sigma, mode="reflect")
    raw = (raw - raw.mean()) / (raw.std() + 1e-12)
    return rng.uniform(60, 200) + rng.uniform(8, 45) * raw


def face_corpus(n_faces: int = 500, n_negatives: int = 2000, seed: int = 0, size: int = 24):
    """Positive face windows and filtered-noise negatives."""
    rng = np.random.default_rng(seed)
    return face_windows(n_faces, rng, size), noise_windows(n_negatives, rng, size)


def eye_windows(n: int, rng: np.random.Generator, size: int = 12, noise_sigma: float = 6.0) -> np.ndarray:
    """Dark eye blob centred in a window twice as wide as the eye, inside a darker band."""
    out = np.empty((n, size, size), dtype=np.uint8)
    for i in range(n):
        p = random_face_params(rng)
        img = np.full((size, size), p.skin - p.eye_band_depth)
        ew = size // 2
        eh = max(1, int(round(size * rng.uniform(0.28, 0.4))))
        y0 = (size - eh) // 2 + int(rng.integers(-1, 2))
        x0 = (size - ew) // 2 + int(rng.integers(-1, 2))
        img[y0:y0 + eh, x0:x0 + ew] -= p.eye_depth
        top = max(0, y0 - int(rng.integers(1, 4)))
        img[:top] += p.eye_band_depth
        bot = min(size, y0 + eh + int(rng.integers(1, 4)))
        img[bot:] += p.eye_band_depth
        img += rng.normal(0.0, noise_sigma, img.shape)
        out[i] = _to_u8(img)
    return out


def eye_negatives(n: int, rng: np.random.Generator, size: int = 12, max_iou: float = 0.25) -> np.ndarray:
    """Patches of rendered faces overlapping no eye box by ``max_iou`` or more, mixed with filtered noise.

    Patches are cut at random sizes around the eye scale and resized to ``size``,
    so near misses and wrong scales are both represented.
    """
    out = np.empty((n, size, size), dtype=np.uint8)
    for i in range(n):
        if i % 2:
            out[i] = _to_u8(filtered_noise((size, size), rng))
            continue
        p = random_face_params(rng)
        face_size = int(rng.integers(40, 72))
        face = render_face(face_size, p, rng, 6.0)
        er = eye_rects(Rect(0, 0, face_size, face_size), p)
        while True:
            s = int(rng.integers(size, max(size, er[0].w * 3 // 2) + 1))
            s = min(s, face_size)
            x = int(rng.integers(0, face_size - s + 1))
            y = int(rng.integers(0, face_size - s + 1))
            cand = Rect(x, y, s, s)
            if all(cand.iou(e) < max_iou for e in er):
                break
        patch = GrayImage(_to_u8(face[y:y + s, x:x + s]))
        out[i] = resize_bilinear(patch, size, size).pixels
    return out


@dataclass
class Scene:
    image: GrayImage
    face: Rect
    params: FaceParams


def face_scene(p: FaceParams, rng: np.random.Generator, image_size: int = 80,
               face_range: tuple[int, int] = (44, 64), noise_sigma: float = 8.0) -> Scene:
    """One face pasted at a random place on a filtered-noise background."""
    bg = filtered_noise((image_size, image_size), rng)
    size = int(rng.integers(face_range[0], face_range[1] + 1))
    x = int(rng.integers(0, image_size - size + 1))
    y = int(rng.integers(0, image_size - size + 1))
    bg[y:y + size, x:x + size] = render_face(size, p, rng, noise_sigma)
    return Scene(GrayImage(_to_u8(bg)), Rect(x, y, size, size), p)


def identity_corpus(n_identities: int = 3, per_identity: int = 20, seed: int = 0,
                    image_size: int = 80, noise_sigma: float = 8.0, jitter: float = 0.0):
    """Labelled scenes: ``per_identity`` images of each of ``n_identities`` people.

    Returns a list of (label, Scene) in identity-major order. ``jitter`` adds
    per-image skin variation on top of the fixed profile.
    """
    rng = np.random.default_rng(seed)
    out = []
    for k, prof in enumerate(identity_profiles(n_identities)):
        label = f"person{k + 1}"
        for _ in range(per_identity):
            p = prof if jitter == 0 else replace(prof, skin=prof.skin + rng.normal(0, jitter))
            out.append((label, face_scene(p, rng, image_size, noise_sigma=noise_sigma)))
    return out


def _crop_resized(img: GrayImage, r: Rect, size: int) -> np.ndarray:
    crop = GrayImage(img.pixels[r.y:r.y + r.h, r.x:r.x + r.w])
    return resize_bilinear(crop, size, size).pixels


def scene_windows(n_pos: int, n_neg: int, rng: np.random.Generator, size: int = 24,
                  image_size: int = 80, zoom: float = 0.08, offset: float = 0.06):
    """Training windows cut from random scenes, resized to ``size``.

    Positives are boxes around the true face with up to ``zoom`` relative size
    change and ``offset`` relative shift, so the detector tolerates the coarse
    scale and position grid of a scan. Negatives are boxes overlapping the face
    by IoU < 0.3, half of them replaced by pure filtered noise.
    """
    pos = np.empty((n_pos, size, size), dtype=np.uint8)
    for i in range(n_pos):
        sc = face_scene(random_face_params(rng), rng, image_size)
        f = sc.face
        s = int(round(f.w * rng.uniform(1 - zoom, 1 + zoom)))
        s = min(max(s, size), image_size)
        cx = f.x + f.w / 2 + rng.uniform(-offset, offset) * f.w
        cy = f.y + f.h / 2 + rng.uniform(-offset, offset) * f.h
        x = int(np.clip(round(cx - s / 2), 0, image_size - s))
        y = int(np.clip(round(cy - s / 2), 0, image_size - s))
        pos[i] = _crop_resized(sc.image, Rect(x, y, s, s), size)
    neg = np.empty((n_neg, size, size), dtype=np.uint8)
    i = 0
    while i < n_neg:
        if i % 2:
            neg[i] = _to_u8(filtered_noise((size, size), rng))
            i += 1
            continue
        sc = face_scene(random_face_params(rng), rng, image_size)
        s = int(rng.integers(size, image_size + 1))
        x = int(rng.integers(0, image_size - s + 1))
        y = int(rng.integers(0, image_size - s + 1))
        r = Rect(x, y, s, s)
        if r.iou(sc.face) >= 0.3:
            continue
        neg[i] = _crop_resized(sc.image, r, size)
        i += 1
    return pos, neg
