"""Seeded moving-shapes videos: {circle, square} x {left, right, up, down}."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .video import write_video, read_video

SHAPES = ("circle", "square")
DIRECTIONS = ("left", "right", "up", "down")
CLASS_NAMES = tuple(f"{s}-{d}" for s in SHAPES for d in DIRECTIONS)
N_CLASSES = len(CLASS_NAMES)

T, H, W, C = 16, 64, 64, 3
NOISE_AMPLITUDE = 0.05
MIN_SPEED, MAX_SPEED = 1.5, 2.6

# (row, col) unit step per direction
_STEP = {"left": (0, -1), "right": (0, 1), "up": (-1, 0), "down": (1, 0)}


@dataclass
class SyntheticDataset:
    videos: np.ndarray  # (N, T, H, W, C) float32
    labels: np.ndarray  # (N,) int64
    seed: int

    def __len__(self):
        return len(self.labels)

    def subset(self, idx) -> "SyntheticDataset":
        return SyntheticDataset(self.videos[idx], self.labels[idx], self.seed)


def render_sample(label: int, rng: np.random.Generator) -> np.ndarray:
    shape = SHAPES[label // len(DIRECTIONS)]
    direction = DIRECTIONS[label % len(DIRECTIONS)]
    radius = rng.uniform(6.0, 9.0)
    speed = rng.uniform(MIN_SPEED, MAX_SPEED)
    travel = speed * (T - 1)
    lo, hi = radius + 1.0, H - 2.0 - radius
    dr, dc = _STEP[direction]
    along = rng.uniform(lo, hi - travel)
    across = rng.uniform(lo, hi)
    # start at the end of the track the shape moves away from
    start = along if (dr + dc) > 0 else hi - (along - lo)
    bg = rng.uniform(0.15, 0.45, size=C)
    color = rng.uniform(0.55, 0.95, size=C)

    rr, cc = np.mgrid[0:H, 0:W] + 0.5
    frames = np.empty((T, H, W, C), dtype=np.float64)
    for t in range(T):
        pos = start + (dr + dc) * speed * t
        cy, cx = (pos, across) if dr else (across, pos)
        if shape == "circle":
            inside = (rr - cy) ** 2 + (cc - cx) ** 2 <= radius ** 2
        else:
            inside = (np.abs(rr - cy) <= radius) & (np.abs(cc - cx) <= radius)
        frames[t] = np.where(inside[..., None], color, bg)
    frames += rng.uniform(-NOISE_AMPLITUDE, NOISE_AMPLITUDE, size=frames.shape)
    return np.clip(frames, 0.0, 1.0).astype(np.float32)


def generate_dataset(seed: int, n_per_class: int) -> SyntheticDataset:
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    videos, labels = [], []
    for label in range(N_CLASSES):
        for i in range(n_per_class):
            rng = np.random.default_rng([seed, label, i])
            videos.append(render_sample(label, rng))
            labels.append(label)
    return SyntheticDataset(np.stack(videos), np.asarray(labels, dtype=np.int64), seed)


def shape_centroids(video: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Per-frame (row, col) centroid of the foreground shape, found by its distance from the frame median."""
    out = []
    for frame in video:
        dist = np.abs(frame - np.median(frame.reshape(-1, frame.shape[-1]), axis=0)).max(axis=-1)
        ys, xs = np.nonzero(dist > dist.max() * threshold)
        out.append((ys.mean(), xs.mean()))
    return np.asarray(out)


def export_dataset(ds: SyntheticDataset, directory) -> Path:
    """Write each sample as LSFV1 plus an index file of filename<TAB>label lines."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    for n, (video, label) in enumerate(zip(ds.videos, ds.labels)):
        name = f"sample_{n:04d}.lsfv"
        write_video(directory / name, video)
        lines.append(f"{name}\t{int(label)}")
    index = directory / "labels.txt"
    index.write_text("\n".join(lines) + "\n")
    return index


def read_index(index_path) -> list[tuple[Path, int]]:
    index_path = Path(index_path)
    entries = []
    for line in index_path.read_text().splitlines():
        if not line.strip():
            continue
        name, label = line.split("\t")
        entries.append((index_path.parent / name, int(label)))
    return entries


def load_dataset(index_path) -> SyntheticDataset:
    entries = read_index(index_path)
    videos = np.stack([read_video(p) for p, _ in entries])
    labels = np.asarray([lab for _, lab in entries], dtype=np.int64)
    return SyntheticDataset(videos, labels, seed=-1)
