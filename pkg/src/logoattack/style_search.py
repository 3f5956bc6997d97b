"""Stage 1: find adversarial style images by SimBA-style coordinate search on a
small block that is nearest-neighbour upscaled to the video and repeated on
every frame. Perturbation magnitude is unrestricted; only [0, 1] clipping applies.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .goals import Goal, derive_seed, goal_score
from .oracle import Oracle
from .video import read_video, resize, write_video

log = logging.getLogger(__name__)

BLOCK = (16, 16)
STEP = 0.3
QUERY_CAP = 5000
RETRIES = 3


class StyleSearchFailed(RuntimeError):
    def __init__(self, msg, queries=0):
        super().__init__(msg)
        self.queries = queries


@dataclass
class StyleImage:
    block: np.ndarray  # (Hb, Wb, C) in [0, 1]
    seed: int
    queries: int
    accepted_scores: list = field(default_factory=list)


def expand_block(block: np.ndarray, shape) -> np.ndarray:
    """Nearest-neighbour upscale to H x W, repeated over T frames."""
    T, H, W, _ = shape
    frame = resize(block.astype(np.float32), H, W, "nearest")
    return np.broadcast_to(frame, (T, H, W, frame.shape[-1])).copy()


def initial_block(rng: np.random.Generator, shape, init: str) -> np.ndarray:
    if init == "random":
        return rng.random(shape)
    if init == "solid":
        return np.broadcast_to(rng.random(shape[-1]), shape).copy()
    raise ValueError(f"unknown init {init!r}")


def find_style(oracle: Oracle, goal: Goal, seed: int, video_shape, block=BLOCK,
               step: float = STEP, query_cap: int = QUERY_CAP, init: str = "random") -> StyleImage:
    rng = np.random.default_rng(seed)
    C = video_shape[-1]
    x = initial_block(rng, (*block, C), init)
    start = oracle.used
    resp = oracle.query(expand_block(x, video_shape))
    score = goal_score(resp, goal)
    accepted = [score]
    n = x.size
    while not goal.satisfied(resp):
        for coord in rng.permutation(n):
            idx = np.unravel_index(coord, x.shape)
            for sign in (1.0, -1.0):
                if oracle.used - start >= query_cap:
                    raise StyleSearchFailed(f"style search hit the {query_cap}-query cap",
                                            oracle.used - start)
                cand = x.copy()
                cand[idx] = np.clip(cand[idx] + sign * step, 0.0, 1.0)
                if cand[idx] == x[idx]:
                    continue
                r = oracle.query(expand_block(cand, video_shape))
                s = goal_score(r, goal)
                if s > score:
                    x, resp, score = cand, r, s
                    accepted.append(s)
                    break
            if goal.satisfied(resp):
                break
    return StyleImage(x, seed, oracle.used - start, accepted)


def build_style_set(oracle: Oracle, goal: Goal, n_styles: int, seed: int, video_shape,
                    retries: int = RETRIES, **kw) -> list[StyleImage]:
    if n_styles < 1:
        raise ValueError("n_styles must be >= 1")
    styles = []
    for i in range(n_styles):
        for attempt in range(retries + 1):
            s = derive_seed(seed, "style", i, attempt)
            try:
                styles.append(find_style(oracle, goal, s, video_shape, **kw))
                break
            except StyleSearchFailed as e:
                log.info("style %d attempt %d failed after %d queries", i, attempt, e.queries)
        else:
            raise StyleSearchFailed(f"style {i} failed after {retries} retries")
    return styles


def random_style_set(n_styles: int, seed: int, channels: int = 3, block=BLOCK) -> list[StyleImage]:
    """Unsearched random blocks, for the skip-stage-1 ablation."""
    return [StyleImage(np.random.default_rng(derive_seed(seed, "random-style", i)).random((*block, channels)),
                       derive_seed(seed, "random-style", i), 0)
            for i in range(n_styles)]


def save_style_set(directory, styles: list[StyleImage]) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = []
    for i, s in enumerate(styles):
        name = f"style_{i}.lsfv"
        write_video(directory / name, s.block[None].astype(np.float32))
        manifest.append({"file": name, "seed": s.seed, "queries": s.queries})
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=1))


def load_style_set(directory) -> list[StyleImage]:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    return [StyleImage(read_video(directory / m["file"])[0].astype(np.float64), m["seed"], m["queries"])
            for m in manifest]
