"""Netpbm (P5/P6) codec and conversions between rgb, gray and binary images."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "RasterImage",
    "GrayImage",
    "BinaryImage",
    "NetpbmError",
    "MalformedHeaderError",
    "UnsupportedFormatError",
    "UnsupportedMaxvalError",
    "TruncatedDataError",
    "decode_netpbm",
    "encode_netpbm",
    "read_image",
    "write_image",
    "to_grayscale",
    "otsu_threshold",
    "binarize",
    "resize_bilinear",
]


def _as_u8(data, ndim):
    arr = np.asarray(data)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d pixel array, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise ValueError("samples must lie in [0, 255]")
        arr = arr.astype(np.uint8)
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError("image must be at least 1x1")
    return np.ascontiguousarray(arr)


@dataclass(frozen=True, eq=False)
class RasterImage:
    """8-bit image with 1 or 3 interleaved channels, shape (height, width, channels)."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        arr = _as_u8(arr, 3)
        if arr.shape[2] not in (1, 3):
            raise ValueError("channels must be 1 or 3")
        object.__setattr__(self, "pixels", arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def __eq__(self, other):
        return isinstance(other, RasterImage) and np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit intensity image, shape (height, width)."""

    pixels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pixels", _as_u8(self.pixels, 2))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other):
        return isinstance(other, GrayImage) and np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True, eq=False)
class BinaryImage:
    """Image whose pixels are 0 or 1."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = _as_u8(self.pixels, 2)
        if arr.max() > 1:
            raise ValueError("binary image pixels must be 0 or 1")
        object.__setattr__(self, "pixels", arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other):
        return isinstance(other, BinaryImage) and np.array_equal(self.pixels, other.pixels)


class NetpbmError(ValueError):
    pass


class MalformedHeaderError(NetpbmError):
    pass


class UnsupportedFormatError(NetpbmError):
    pass


class UnsupportedMaxvalError(NetpbmError):
    pass


class TruncatedDataError(NetpbmError):
    pass


_WHITESPACE = b" \t\n\r\v\f"


def _header_tokens(buf: bytes, count: int):
    """Read `count` whitespace-separated tokens, skipping '#' comments.

    Returns the tokens and the offset of the single whitespace byte that
    terminates the last one.
    """
    tokens = []
    i = 0
    n = len(buf)
    while len(tokens) < count:
        while i < n and (buf[i] in _WHITESPACE or buf[i] == ord("#")):
            if buf[i] == ord("#"):
                while i < n and buf[i] not in b"\r\n":
                    i += 1
            else:
                i += 1
        start = i
        while i < n and buf[i] not in _WHITESPACE and buf[i] != ord("#"):
            i += 1
        if start == i:
            raise MalformedHeaderError("header ended early")
        tokens.append(buf[start:i])
    if i >= n or buf[i] not in _WHITESPACE:
        raise MalformedHeaderError("header must end with one whitespace byte")
    return tokens, i


def decode_netpbm(data: bytes) -> RasterImage:
    """Decode a binary P5 (gray) or P6 (rgb) file with maxval 255."""
    data = bytes(data)
    if len(data) < 2 or data[0:1] != b"P":
        raise MalformedHeaderError("missing netpbm magic number")
    magic = data[:2]
    if magic in (b"P1", b"P2", b"P3", b"P4", b"P7"):
        raise UnsupportedFormatError(f"unsupported netpbm variant {magic.decode()}")
    if magic not in (b"P5", b"P6"):
        raise MalformedHeaderError(f"unknown magic {magic!r}")
    if len(data) < 3 or data[2] not in _WHITESPACE:
        raise MalformedHeaderError("magic must be followed by whitespace")

    tokens, end = _header_tokens(data[2:], 3)
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise MalformedHeaderError(f"non-numeric header field: {exc}") from None
    if width < 1 or height < 1:
        raise MalformedHeaderError("width and height must be positive")
    if maxval != 255:
        raise UnsupportedMaxvalError(f"maxval {maxval} unsupported, only 255")

    channels = 1 if magic == b"P5" else 3
    offset = 2 + end + 1
    need = width * height * channels
    payload = data[offset:offset + need]
    if len(payload) < need:
        raise TruncatedDataError(f"expected {need} sample bytes, found {len(payload)}")
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    return RasterImage(arr.copy())


def encode_netpbm(img: RasterImage | GrayImage) -> bytes:
    if isinstance(img, GrayImage):
        pixels, magic = img.pixels, b"P5"
    elif isinstance(img, RasterImage):
        pixels = img.pixels if img.channels == 3 else img.pixels[:, :, 0]
        magic = b"P6" if img.channels == 3 else b"P5"
    else:
        raise TypeError(f"cannot encode {type(img).__name__}")
    h, w = pixels.shape[:2]
    header = magic + b"\n" + f"{w} {h}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(pixels, dtype=np.uint8).tobytes()


def read_image(path) -> RasterImage:
    return decode_netpbm(Path(path).read_bytes())


def write_image(path, img: RasterImage | GrayImage) -> None:
    Path(path).write_bytes(encode_netpbm(img))


def to_grayscale(img: RasterImage | GrayImage) -> GrayImage:
    """BT.601 luma, rounded half up.

    Integer arithmetic keeps the rounding exact: 0.299*255 is 76.245 and
    must not drift across a .5 boundary.
    """
    if isinstance(img, GrayImage):
        return GrayImage(img.pixels.copy())
    if img.channels == 1:
        return GrayImage(img.pixels[:, :, 0].copy())
    p = img.pixels.astype(np.int64)
    luma = (299 * p[:, :, 0] + 587 * p[:, :, 1] + 114 * p[:, :, 2] + 500) // 1000
    return GrayImage(np.clip(luma, 0, 255).astype(np.uint8))


def otsu_threshold(img: GrayImage) -> int:
    """Threshold t maximising between-class variance, class 0 being pixels <= t.

    Candidates are compared exactly in integer arithmetic, so ties resolve
    to the smallest t. A constant image returns its own value.
    """
    hist = np.bincount(img.pixels.ravel(), minlength=256)
    nonzero = np.flatnonzero(hist)
    if len(nonzero) == 1:
        return int(nonzero[0])

    counts = [int(c) for c in hist]
    total_n = sum(counts)
    total_s = sum(v * c for v, c in enumerate(counts))
    best_t, best_num, best_den = 0, 0, 1
    n0 = s0 = 0
    for t in range(255):
        n0 += counts[t]
        s0 += t * counts[t]
        n1 = total_n - n0
        if n0 == 0 or n1 == 0:
            continue
        # sigma_b^2 * N^2 = (n0*s1 - n1*s0)^2 / (n0*n1)
        num = (n0 * (total_s - s0) - n1 * s0) ** 2
        den = n0 * n1
        if num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    return best_t


def binarize(img: GrayImage, t: int) -> BinaryImage:
    if t < 0:
        raise ValueError("threshold must be non-negative")
    return BinaryImage((img.pixels > t).astype(np.uint8))


def resize_bilinear(img: GrayImage, width: int, height: int) -> GrayImage:
    """Bilinear resample using pixel-centre alignment, edges clamped."""
    if width < 1 or height < 1:
        raise ValueError("target size must be at least 1x1")
    src = img.pixels.astype(np.float64)
    h, w = src.shape

    def axis(n_out, n_in):
        pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        pos = np.clip(pos, 0.0, n_in - 1)
        lo = np.floor(pos).astype(np.intp)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    y0, y1, fy = axis(height, h)
    x0, x1, fx = axis(width, w)
    top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
    bot = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
    out = top * (1 - fy)[:, None] + bot * fy[:, None]
    return GrayImage(np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8))
