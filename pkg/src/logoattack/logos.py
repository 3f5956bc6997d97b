"""Logo assets: admission filter, procedural letter logos, PNG import/export."""
from __future__ import annotations

import string
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

LOGO_SIZE = 32
WHITE_LEVEL = 0.9
MAX_WHITE_FRACTION = 0.5

# 5x7 bitmap font, one int per row, MSB is the leftmost of 5 columns
_FONT = {
    "A": (0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11),
    "B": (0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E),
    "C": (0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E),
    "D": (0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E),
    "E": (0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F),
    "F": (0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10),
    "G": (0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F),
    "H": (0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11),
    "I": (0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E),
    "J": (0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C),
    "K": (0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11),
    "L": (0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F),
    "M": (0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11),
    "N": (0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11),
    "O": (0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E),
    "P": (0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10),
    "Q": (0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D),
    "R": (0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11),
    "S": (0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E),
    "T": (0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04),
    "U": (0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E),
    "V": (0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04),
    "W": (0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A),
    "X": (0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11),
    "Y": (0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04),
    "Z": (0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F),
}


@dataclass(frozen=True)
class LogoAsset:
    id: str
    pixels: np.ndarray  # (h, w, 4) RGBA in [0, 1]

    @property
    def h(self) -> int:
        return self.pixels.shape[0]

    @property
    def w(self) -> int:
        return self.pixels.shape[1]

    @property
    def rgb(self) -> np.ndarray:
        return self.pixels[..., :3]


def admit_logo(asset: LogoAsset) -> bool:
    """Reject logos with any transparency or with mostly white pixels."""
    px = asset.pixels
    if px.shape[-1] == 4 and np.any(px[..., 3] < 1.0):
        return False
    white = px[..., :3].min(axis=-1) > WHITE_LEVEL
    return bool(white.mean() <= MAX_WHITE_FRACTION)


def glyph(ch: str) -> np.ndarray:
    rows = _FONT[ch]
    return np.array([[(r >> (4 - b)) & 1 for b in range(5)] for r in rows], dtype=bool)


def render_text(text: str, size: int = LOGO_SIZE) -> np.ndarray:
    """Boolean size x size coverage map of `text` centered with the largest integer scale that fits."""
    n = len(text)
    for scale in range(size // 5, 0, -1):
        width = n * 5 * scale + (n - 1) * scale
        if width <= size and 7 * scale <= size:
            break
    canvas = np.zeros((size, size), dtype=bool)
    top = (size - 7 * scale) // 2
    left = (size - width) // 2
    for m, ch in enumerate(text):
        g = np.kron(glyph(ch), np.ones((scale, scale), dtype=bool))
        x0 = left + m * 6 * scale
        canvas[top:top + g.shape[0], x0:x0 + g.shape[1]] = g
    return canvas


def make_letter_logo(rng: np.random.Generator, size: int = LOGO_SIZE, idx: int = 0) -> LogoAsset:
    n = int(rng.integers(1, 4))
    text = "".join(rng.choice(list(string.ascii_uppercase), size=n))
    while True:
        bg = rng.uniform(0.0, 1.0, size=3)
        fg = rng.uniform(0.0, 1.0, size=3)
        # keep the glyphs legible and the background off-white
        if np.abs(bg - fg).max() > 0.4 and bg.min() < 0.8:
            break
    cov = render_text(text, size)
    rgb = np.where(cov[..., None], fg, bg)
    px = np.concatenate([rgb, np.ones((size, size, 1))], axis=-1)
    return LogoAsset(id=f"{idx:03d}-{text}", pixels=px)


def synthesize_logo_set(seed: int, n_logos: int = 100, size: int = LOGO_SIZE) -> list[LogoAsset]:
    if n_logos < 1:
        raise ValueError("n_logos must be >= 1")
    rng = np.random.default_rng([seed, 0x10605])
    logos = []
    while len(logos) < n_logos:
        logo = make_letter_logo(rng, size, len(logos))
        if admit_logo(logo):
            logos.append(logo)
    return logos


def load_png(path, logo_id: str | None = None) -> LogoAsset:
    img = Image.open(path).convert("RGBA")
    px = np.asarray(img, dtype=np.float64) / 255.0
    return LogoAsset(id=logo_id or Path(path).stem, pixels=px)


def save_png(path, image: np.ndarray) -> None:
    arr = np.clip(np.round(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path)


def load_logo_dir(directory, size: int = LOGO_SIZE) -> list[LogoAsset]:
    """Import every PNG in a directory, keep admitted ones, resize to size x size."""
    from .video import resize

    logos = []
    for p in sorted(Path(directory).glob("*.png")):
        asset = load_png(p)
        if not admit_logo(asset):
            continue
        if asset.h != size or asset.w != size:
            asset = LogoAsset(asset.id, resize(asset.pixels, size, size, "bilinear"))
        logos.append(asset)
    return logos
