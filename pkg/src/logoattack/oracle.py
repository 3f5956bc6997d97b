"""Black-box oracle with exact query accounting, and the toy video classifier behind it.

Attack code only ever sees `Oracle.query`, which returns the top-1 label and
its softmax score, plus p(target | x) when the oracle was opened for a
targeted episode with `reveal_target`. `ToyClassifier.probs` is the
white-box port used by tests.
"""
from __future__ import annotations

import struct
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .dataset import N_CLASSES, SyntheticDataset

DEFAULT_QUERY_LIMIT = 300_000
CHECKPOINT_MAGIC = b"LSFC1"
GRID = 4

_LUMA = np.array([0.299, 0.587, 0.114])


class BudgetExhausted(RuntimeError):
    def __init__(self, used: int, limit: int):
        super().__init__(f"query budget exhausted after {used} of {limit} queries")
        self.used = used
        self.limit = limit


class LabelScore(NamedTuple):
    label: int
    score: float


class OracleResponse(NamedTuple):
    label: int
    score: float
    target_score: float | None = None

    @property
    def top1(self) -> LabelScore:
        return LabelScore(self.label, self.score)


@dataclass
class QueryBudget:
    limit: int = DEFAULT_QUERY_LIMIT
    used: int = 0

    @property
    def remaining(self) -> int:
        return self.limit - self.used

    def charge(self) -> None:
        if self.used >= self.limit:
            raise BudgetExhausted(self.used, self.limit)
        self.used += 1


def default_filter_bank() -> np.ndarray:
    """Eight 3x3 RGB kernels, shape (8, 3, 3, 3) as [filter, dy, dx, channel].

    identity (luma), Sobel-x, Sobel-y, two diagonal edges, and R/G/B projectors.
    """
    sx = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64) / 4
    sy = sx.T
    d1 = np.array([[0, 1, 2], [-1, 0, 1], [-2, -1, 0]], dtype=np.float64) / 4
    d2 = np.array([[2, 1, 0], [1, 0, -1], [0, -1, -2]], dtype=np.float64) / 4
    center = np.zeros((3, 3))
    center[1, 1] = 1.0
    bank = np.zeros((8, 3, 3, 3))
    for f, k in enumerate((center, sx, sy, d1, d2)):
        bank[f] = k[..., None] * _LUMA
    for ch in range(3):
        bank[5 + ch, 1, 1, ch] = 1.0
    return bank.astype(np.float32)


def n_features(n_filters: int) -> int:
    return 3 * n_filters * (GRID * GRID + 1)


class ToyClassifier:
    """Fixed filter bank -> |response| -> 4x4 cell + global pooling -> temporal statistics -> softmax.

    Temporal statistics per pooled cell: mean over frames, mean absolute frame
    difference, and mean signed frame difference (the last one carries motion
    direction).
    """

    def __init__(self, filters=None, n_classes: int = N_CLASSES, weights=None, bias=None,
                 feat_mean=None, feat_std=None):
        self.filters = default_filter_bank() if filters is None else np.asarray(filters, np.float32)
        self.n_classes = n_classes
        d = self.n_features
        self.weights = np.zeros((n_classes, d)) if weights is None else np.asarray(weights, np.float64)
        self.bias = np.zeros(n_classes) if bias is None else np.asarray(bias, np.float64)
        self.feat_mean = np.zeros(d) if feat_mean is None else np.asarray(feat_mean, np.float64)
        self.feat_std = np.ones(d) if feat_std is None else np.asarray(feat_std, np.float64)
        self._kernel = self.filters.reshape(len(self.filters), -1).T.copy()  # (27, F)
        self._lock = threading.Lock()
        self._last_video = None
        self._last_pooled = None

    @property
    def n_filters(self) -> int:
        return len(self.filters)

    @property
    def n_features(self) -> int:
        return n_features(self.n_filters)

    def pooled_frames(self, frames: np.ndarray) -> np.ndarray:
        """(n, H, W, 3) -> (n, F, GRID*GRID + 1) cell means of |filter response|, plus the frame mean.

        Frames are processed one at a time so a frame's result never depends on
        what it was batched with (the incremental cache relies on this).
        """
        return np.stack([self._pooled_one(f[None])[0] for f in frames])

    def _pooled_one(self, frames: np.ndarray) -> np.ndarray:
        n, H, W, _ = frames.shape
        padded = np.pad(frames.astype(np.float32), ((0, 0), (1, 1), (1, 1), (0, 0)), mode="edge")
        win = sliding_window_view(padded, (3, 3), axis=(1, 2))  # (n, H, W, 3ch, 3, 3)
        cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n, H, W, 27)
        resp = np.abs(cols @ self._kernel)  # (n, H, W, F)
        cells = resp.reshape(n, GRID, H // GRID, GRID, W // GRID, -1).mean(axis=(2, 4))
        cells = cells.reshape(n, GRID * GRID, -1).astype(np.float64)
        pooled = np.concatenate([cells, cells.mean(axis=1, keepdims=True)], axis=1)
        return pooled.transpose(0, 2, 1)

    def _pooled_video(self, video: np.ndarray) -> np.ndarray:
        with self._lock:
            last, last_pooled = self._last_video, self._last_pooled
            if last is not None and last.shape == video.shape:
                changed = np.nonzero((last != video).reshape(len(video), -1).any(axis=1))[0]
            else:
                changed = np.arange(len(video))
            if len(changed) > 1 and (video == video[:1]).all():
                pooled = np.repeat(self.pooled_frames(video[:1]), len(video), axis=0)
            else:
                pooled = last_pooled.copy() if len(changed) < len(video) else \
                    np.empty((len(video), self.n_filters, GRID * GRID + 1))
                if len(changed):
                    pooled[changed] = self.pooled_frames(video[changed])
            self._last_video = video.copy()
            self._last_pooled = pooled
            return pooled

    def features(self, video: np.ndarray) -> np.ndarray:
        return self.temporal_features(self._pooled_video(video))

    @staticmethod
    def temporal_features(pooled: np.ndarray) -> np.ndarray:
        diff = np.diff(pooled, axis=0)
        if len(diff) == 0:
            diff = np.zeros_like(pooled)
        return np.concatenate([pooled.mean(axis=0).ravel(),
                               np.abs(diff).mean(axis=0).ravel(),
                               diff.mean(axis=0).ravel()])

    def logits_from_features(self, feats: np.ndarray) -> np.ndarray:
        z = (feats - self.feat_mean) / self.feat_std
        return z @ self.weights.T + self.bias

    def probs(self, video: np.ndarray) -> np.ndarray:
        return softmax(self.logits_from_features(self.features(video)))

    def predict(self, video: np.ndarray) -> int:
        return int(np.argmax(self.probs(video)))

    def accuracy(self, feats: np.ndarray, labels: np.ndarray) -> float:
        pred = np.argmax(self.logits_from_features(feats), axis=-1)
        return float(np.mean(pred == labels))


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(weights, bias, z, labels, weight_decay=0.0):
    """Mean softmax cross-entropy of a linear layer on standardized features z, with its gradients."""
    logits = z @ weights.T + bias
    p = softmax(logits)
    n = len(labels)
    loss = -np.mean(np.log(p[np.arange(n), labels])) + 0.5 * weight_decay * np.sum(weights ** 2)
    g = p.copy()
    g[np.arange(n), labels] -= 1.0
    g /= n
    return loss, g.T @ z + weight_decay * weights, g.sum(axis=0)


@dataclass
class TrainResult:
    model: ToyClassifier
    heldout_accuracy: float
    train_idx: np.ndarray = field(repr=False)
    heldout_idx: np.ndarray = field(repr=False)


def dataset_features(model: ToyClassifier, ds: SyntheticDataset) -> np.ndarray:
    return np.stack([model.temporal_features(model.pooled_frames(v)) for v in ds.videos])


def split_indices(labels: np.ndarray, heldout_fraction: float, seed: int):
    rng = np.random.default_rng([seed, 1])
    train, held = [], []
    for c in np.unique(labels):
        idx = rng.permutation(np.nonzero(labels == c)[0])
        n_held = max(1, int(round(heldout_fraction * len(idx)))) if len(idx) > 1 else 0
        held.extend(idx[:n_held])
        train.extend(idx[n_held:])
    return np.sort(np.asarray(train, dtype=int)), np.sort(np.asarray(held, dtype=int))


def train_classifier(ds: SyntheticDataset, epochs: int = 30, lr: float = 0.1, seed: int = 0,
                     batch_size: int = 16, weight_decay: float = 1e-4,
                     heldout_fraction: float = 0.2) -> TrainResult:
    """Minibatch SGD on the linear softmax layer. Filters stay fixed."""
    if len(ds) == 0:
        raise ValueError("empty dataset")
    model = ToyClassifier()
    feats = dataset_features(model, ds)
    train_idx, held_idx = split_indices(ds.labels, heldout_fraction, seed)
    ftr = feats[train_idx]
    model.feat_mean = ftr.mean(axis=0)
    model.feat_std = ftr.std(axis=0) + 1e-6
    z = (ftr - model.feat_mean) / model.feat_std
    y = ds.labels[train_idx]
    rng = np.random.default_rng([seed, 2])
    for _ in range(epochs):
        order = rng.permutation(len(y))
        for s in range(0, len(y), batch_size):
            b = order[s:s + batch_size]
            _, gw, gb = cross_entropy(model.weights, model.bias, z[b], y[b], weight_decay)
            model.weights -= lr * gw
            model.bias -= lr * gb
    acc = model.accuracy(feats[held_idx], ds.labels[held_idx]) if len(held_idx) else float("nan")
    return TrainResult(model, acc, train_idx, held_idx)


def save_checkpoint(path, model: ToyClassifier) -> None:
    """LSFC1: magic, F and class count (u32 LE), then f32 LE filter bank, mean, std, weights, bias."""
    parts = [CHECKPOINT_MAGIC, struct.pack("<2I", model.n_filters, model.n_classes)]
    for arr in (model.filters, model.feat_mean, model.feat_std, model.weights, model.bias):
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path) -> ToyClassifier:
    buf = Path(path).read_bytes()
    if buf[:5] != CHECKPOINT_MAGIC:
        raise ValueError("not an LSFC1 checkpoint")
    n_filters, n_classes = struct.unpack_from("<2I", buf, 5)
    d = n_features(n_filters)
    sizes = [n_filters * 27, d, d, n_classes * d, n_classes]
    expected = 13 + 4 * sum(sizes)
    if len(buf) != expected:
        raise ValueError(f"checkpoint size {len(buf)} != expected {expected}")
    flat = np.frombuffer(buf, dtype="<f4", offset=13).astype(np.float64)
    chunks = np.split(flat, np.cumsum(sizes)[:-1])
    return ToyClassifier(filters=chunks[0].reshape(n_filters, 3, 3, 3), n_classes=n_classes,
                         feat_mean=chunks[1], feat_std=chunks[2],
                         weights=chunks[3].reshape(n_classes, d), bias=chunks[4])


class Oracle:
    """Top-1 black-box view of a classifier with one accounting gate.

    Every query is charged to `budget` and to the currently active stage
    counter, so the per-stage counts always sum to `budget.used`.
    """

    def __init__(self, model: ToyClassifier, budget: QueryBudget | None = None,
                 reveal_target: int | None = None):
        self._model = model
        self.reveal_target = reveal_target
        self.budget = budget if budget is not None else QueryBudget()
        self.stage_counts: dict[str, int] = {}
        self._stage = "unassigned"
        self._lock = threading.Lock()

    @property
    def used(self) -> int:
        return self.budget.used

    @contextmanager
    def stage(self, name: str):
        prev, self._stage = self._stage, name
        try:
            yield self
        finally:
            self._stage = prev

    def query(self, video: np.ndarray) -> OracleResponse:
        with self._lock:
            self.budget.charge()
            self.stage_counts[self._stage] = self.stage_counts.get(self._stage, 0) + 1
        p = self._model.probs(video)
        label = int(np.argmax(p))
        target = None if self.reveal_target is None else float(p[self.reveal_target])
        return OracleResponse(label, float(p[label]), target)
