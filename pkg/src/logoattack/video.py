"""Video tensors, logo masks, superimposition and the LSFV1 file format.

Videos are numpy arrays of shape (T, H, W, C) holding float32 intensities in
[0, 1]. Nothing here wraps them in a class; `check_video` validates the
contract where it matters.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"LSFV\x01"
_HEADER = struct.Struct("<4I")
# largest element count we are willing to allocate from an untrusted header
MAX_ELEMENTS = 1 << 31


class VideoFormatError(ValueError):
    pass


class BadMagic(VideoFormatError):
    pass


class TruncatedPayload(VideoFormatError):
    pass


class DimensionOverflow(VideoFormatError):
    pass


class ShapeMismatch(ValueError):
    """Raised when two arrays disagree along a named axis."""

    def __init__(self, axis: str, expected: int, got: int):
        super().__init__(f"{axis}: expected {expected}, got {got}")
        self.axis = axis
        self.expected = expected
        self.got = got


def check_video(x: np.ndarray) -> np.ndarray:
    if x.ndim != 4 or min(x.shape) < 1:
        raise ValueError(f"video must be T x H x W x C with all dims >= 1, got {x.shape}")
    if not np.all(np.isfinite(x)) or x.min() < 0.0 or x.max() > 1.0:
        raise ValueError("video intensities must lie in [0, 1]")
    return x


@dataclass(frozen=True)
class RegionMask:
    """Axis-aligned logo rectangle, identical on every frame and channel."""

    u: int
    v: int
    k: float
    h: int
    w: int
    frame_h: int
    frame_w: int

    def __post_init__(self):
        sh, sw = self.scaled_dims
        if not (0 <= self.u <= self.frame_h - sh):
            raise ValueError(f"u={self.u} outside [0, {self.frame_h - sh}]")
        if not (0 <= self.v <= self.frame_w - sw):
            raise ValueError(f"v={self.v} outside [0, {self.frame_w - sw}]")

    @property
    def scaled_dims(self) -> tuple[int, int]:
        return scaled_size(self.k, self.h), scaled_size(self.k, self.w)

    @property
    def area(self) -> int:
        sh, sw = self.scaled_dims
        return sh * sw

    @property
    def rows(self) -> slice:
        return slice(self.u, self.u + self.scaled_dims[0])

    @property
    def cols(self) -> slice:
        return slice(self.v, self.v + self.scaled_dims[1])

    def materialize(self, shape) -> np.ndarray:
        T, H, W, C = shape
        if (H, W) != (self.frame_h, self.frame_w):
            raise ShapeMismatch("H" if H != self.frame_h else "W",
                                self.frame_h if H != self.frame_h else self.frame_w,
                                H if H != self.frame_h else W)
        m = np.zeros(shape, dtype=np.float32)
        m[:, self.rows, self.cols, :] = 1.0
        return m


def scaled_size(k: float, n: int) -> int:
    # tiny epsilon so k*n landing a hair under an integer still floors correctly
    return int(np.floor(k * n + 1e-9))


def superimpose(base: np.ndarray, logo: np.ndarray, mask: RegionMask) -> np.ndarray:
    """Paste `logo` (h' x w' x C) into every frame of `base` at the mask.

    The logo replaces the pixels under it. Returns a new array.
    """
    sh, sw = mask.scaled_dims
    T, H, W, C = base.shape
    if (H, W) != (mask.frame_h, mask.frame_w):
        axis = "H" if H != mask.frame_h else "W"
        raise ShapeMismatch(axis, mask.frame_h if axis == "H" else mask.frame_w,
                            H if axis == "H" else W)
    out = base.copy()
    if sh == 0 or sw == 0:
        return out
    if logo.ndim != 3:
        raise ValueError(f"logo must be h x w x C, got shape {logo.shape}")
    for axis, want, got in (("h", sh, logo.shape[0]), ("w", sw, logo.shape[1]),
                            ("C", C, logo.shape[2])):
        if want != got:
            raise ShapeMismatch(axis, want, got)
    out[:, mask.rows, mask.cols, :] = np.clip(logo, 0.0, 1.0)[None]
    return out


def resize(image: np.ndarray, target_h: int, target_w: int, mode: str = "bilinear") -> np.ndarray:
    """Resize an H x W x C image. `nearest` or `bilinear` (half-pixel centers)."""
    if target_h < 1 or target_w < 1:
        raise ValueError("target dims must be >= 1")
    h, w = image.shape[:2]
    if (h, w) == (target_h, target_w):
        return image.copy()
    if mode == "nearest":
        ri = np.minimum((np.arange(target_h) * h) // target_h, h - 1)
        ci = np.minimum((np.arange(target_w) * w) // target_w, w - 1)
        return image[ri][:, ci].copy()
    if mode != "bilinear":
        raise ValueError(f"unknown resize mode {mode!r}")

    def coords(n_out, n_in):
        x = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        x = np.clip(x, 0, n_in - 1)
        lo = np.floor(x).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, (x - lo)

    r0, r1, fr = coords(target_h, h)
    c0, c1, fc = coords(target_w, w)
    img = image.astype(np.float64)
    if img.ndim == 2:
        img = img[..., None]
    fr = fr[:, None, None]
    fc = fc[None, :, None]
    top = img[r0][:, c0] * (1 - fc) + img[r0][:, c1] * fc
    bot = img[r1][:, c0] * (1 - fc) + img[r1][:, c1] * fc
    out = np.clip(top * (1 - fr) + bot * fr, 0.0, 1.0)
    if image.ndim == 2:
        out = out[..., 0]
    return out.astype(image.dtype)


def encode_video(x: np.ndarray) -> bytes:
    if x.ndim != 4:
        raise ValueError("video must be 4-D")
    return MAGIC + _HEADER.pack(*x.shape) + np.ascontiguousarray(x, dtype="<f4").tobytes()


def decode_video(buf: bytes) -> np.ndarray:
    if buf[: len(MAGIC)] != MAGIC:
        raise BadMagic("not an LSFV1 file")
    if len(buf) < len(MAGIC) + _HEADER.size:
        raise TruncatedPayload("header truncated")
    dims = _HEADER.unpack_from(buf, len(MAGIC))
    n = 1
    for d in dims:
        n *= d
    if min(dims) < 1 or n > MAX_ELEMENTS:
        raise DimensionOverflow(f"unreasonable dims {dims}")
    payload = buf[len(MAGIC) + _HEADER.size:]
    if len(payload) != 4 * n:
        raise TruncatedPayload(f"expected {4 * n} payload bytes, found {len(payload)}")
    return np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)


def write_video(path, x: np.ndarray) -> None:
    Path(path).write_bytes(encode_video(x))


def read_video(path) -> np.ndarray:
    return decode_video(Path(path).read_bytes())
