"""Attack metrics: fooling rates, average queries, occluded area, and the
optical-flow warping error used as a temporal-inconsistency score."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .video import scaled_size

LUMA = np.array([0.299, 0.587, 0.114])
FLOW_WINDOW = 5
FLOW_LEVELS = 3
MIN_EIGEN = 1e-4
CONSISTENCY_PX = 1.0


@dataclass
class AttackTrace:
    outcome: str  # success | budget_exhausted | stage_failed | rejected
    q1: int = 0
    q2: int = 0
    q3: int = 0
    success_stage: int | None = None
    action: dict | None = None
    linf: float = 0.0
    l2: float = 0.0
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def total_queries(self) -> int:
        return self.q1 + self.q2 + self.q3

    def as_dict(self) -> dict:
        return {"outcome": self.outcome, "q1": self.q1, "q2": self.q2, "q3": self.q3,
                "success_stage": self.success_stage, "action": self.action,
                "linf": self.linf, "l2": self.l2, **self.extra}


def _mean(xs):
    return float(np.mean(xs)) if len(xs) else None


def aggregate(traces: list[AttackTrace]) -> dict:
    """FR, 2FR, AQ, 2AQ and per-stage AQs. Means over empty sets come back as None."""
    if not traces:
        raise ValueError("no traces to aggregate")
    wins = [t for t in traces if t.outcome == "success"]
    stage2 = [t for t in wins if t.success_stage == 2]
    return {
        "n": len(traces),
        "FR": len(wins) / len(traces),
        "2FR": len(stage2) / len(traces),
        "AQ": _mean([t.total_queries for t in wins]),
        "2AQ": _mean([t.q1 + t.q2 for t in stage2]),
        "AQ1": _mean([t.q1 for t in traces if t.q1 > 0]),
        "AQ2": _mean([t.q2 for t in traces if t.q2 > 0]),
        "AQ3": _mean([t.q3 for t in traces if t.q3 > 0]),
    }


def aoa(k: float, h: int, w: int, H: int, W: int) -> float:
    """Occluded area in percent of the frame."""
    return 100.0 * scaled_size(k, h) * scaled_size(k, w) / (H * W)


def mean_aoa(traces: list[AttackTrace], h: int, w: int, H: int, W: int) -> float | None:
    vals = [aoa(t.action["k"], h, w, H, W) for t in traces if t.action]
    return _mean(vals)


# -- optical flow -----------------------------------------------------------
@dataclass
class FlowField:
    flow: np.ndarray  # (H, W, 2) as (dy, dx)
    valid: np.ndarray  # (H, W) in {0, 1}


def to_gray(frame: np.ndarray) -> np.ndarray:
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim == 3:
        return frame @ LUMA[: frame.shape[-1]] if frame.shape[-1] == 3 else frame.mean(axis=-1)
    return frame


def warp(img: np.ndarray, flow: np.ndarray) -> np.ndarray:
    """Backward-warp: out(x) = img(x + flow(x)), bilinear, edges replicated."""
    H, W = img.shape[:2]
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    coords = [yy + flow[..., 0], xx + flow[..., 1]]
    if img.ndim == 2:
        return ndimage.map_coordinates(img, coords, order=1, mode="nearest")
    return np.stack([ndimage.map_coordinates(img[..., c], coords, order=1, mode="nearest")
                     for c in range(img.shape[-1])], axis=-1)


def _box(a):
    return ndimage.uniform_filter(a, FLOW_WINDOW, mode="nearest") * FLOW_WINDOW ** 2


def _lk_level(a, b, init):
    """One Lucas-Kanade refinement at a pyramid level. Returns (flow, min eigenvalue)."""
    bw = warp(b, init)
    gy, gx = np.gradient(0.5 * (a + bw))
    it = bw - a
    sxx, syy, sxy = _box(gx * gx), _box(gy * gy), _box(gx * gy)
    sxt, syt = _box(gx * it), _box(gy * it)
    tr = sxx + syy
    det = sxx * syy - sxy ** 2
    lam_min = 0.5 * (tr - np.sqrt(np.maximum(tr ** 2 - 4 * det, 0.0)))
    safe = np.where(lam_min >= MIN_EIGEN, det, 1.0)
    dx = -(syy * sxt - sxy * syt) / safe
    dy = -(sxx * syt - sxy * sxt) / safe
    upd = np.stack([dy, dx], axis=-1)
    upd[lam_min < MIN_EIGEN] = 0.0
    return init + upd, lam_min


def optical_flow(frame_a: np.ndarray, frame_b: np.ndarray) -> FlowField:
    """Dense pyramidal Lucas-Kanade flow from a to b: a(x) ~ b(x + flow(x))."""
    a, b = to_gray(frame_a), to_gray(frame_b)
    pyr = [(a, b)]
    for _ in range(FLOW_LEVELS - 1):
        pa, pb = pyr[-1]
        if min(pa.shape) < 2 * FLOW_WINDOW:
            break
        pyr.append((ndimage.zoom(ndimage.gaussian_filter(pa, 1.0), 0.5, order=1),
                    ndimage.zoom(ndimage.gaussian_filter(pb, 1.0), 0.5, order=1)))
    flow = np.zeros(pyr[-1][0].shape + (2,))
    lam = None
    for level in reversed(range(len(pyr))):
        la, lb = pyr[level]
        if flow.shape[:2] != la.shape:
            zoom = (la.shape[0] / flow.shape[0], la.shape[1] / flow.shape[1], 1)
            flow = ndimage.zoom(flow, zoom, order=1) * 2.0
        flow, lam = _lk_level(la, lb, flow)
    return FlowField(flow, (lam >= MIN_EIGEN).astype(np.uint8))


def occlusion_map(frame_t: np.ndarray, frame_s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flow t->s and the mask of pixels where forward-backward flow agrees and both are valid."""
    fwd = optical_flow(frame_t, frame_s)
    bwd = optical_flow(frame_s, frame_t)
    back_at = warp(bwd.flow, fwd.flow)
    err = np.linalg.norm(fwd.flow + back_at, axis=-1)
    back_valid = warp(bwd.valid.astype(np.float64), fwd.flow) > 0.5
    m = (err < CONSISTENCY_PX) & (fwd.valid > 0) & back_valid
    return fwd.flow, m.astype(np.float64)


def pair_error(frame_t: np.ndarray, frame_s: np.ndarray) -> tuple[float, bool]:
    """Masked mean L1 residual between F_t and F_s warped onto F_t. Second value flags an empty mask."""
    ft = np.asarray(frame_t, dtype=np.float64)
    fs = np.asarray(frame_s, dtype=np.float64)
    if np.array_equal(ft, fs):
        return 0.0, False
    flow, m = occlusion_map(ft, fs)
    total = m.sum()
    if total == 0:
        return 0.0, True
    resid = np.abs(ft - warp(fs, flow))
    if resid.ndim == 3:
        resid = resid.sum(axis=-1)
    return float((m * resid).sum() / total), False


def warping_error(video: np.ndarray, return_flags: bool = False):
    """Mean over t>=2 of pair_error(F_t, F_1) + pair_error(F_t, F_{t-1})."""
    T = len(video)
    if T < 2:
        raise ValueError("need at least two frames")
    total = 0.0
    flagged = []
    for t in range(1, T):
        for s in (0, t - 1):
            e, empty = pair_error(video[t], video[s])
            total += e
            if empty:
                flagged.append((t, s))
    ti = total / (T - 1)
    return (ti, flagged) if return_flags else ti
