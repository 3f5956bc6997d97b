"""Stage 3: masked frequency-domain greedy search inside the logo region.

Each step picks one DCT coefficient of one frame/channel and tries moving its
sign state by +1 then -1 (states are limited to {-1, 0, +1}). A move is kept
only when the goal score strictly improves. The pixel-space perturbation is
sum_m gamma_m * eta * basis_m, then passed through the norm projection:

* l2:                  used as is
* linf, cumulative:    the running sum is clipped to [-eps, eps]
* linf, per-term:      each gamma_m * eta * basis_m is clipped before summing

With `basis="subrect"` the DCT lives on the logo rectangle itself; with
`basis="global"` it spans the whole frame and is masked afterwards.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .dct import FrequencyIndex, basis_slice, frequency_set
from .goals import Goal, derive_seed, goal_score
from .oracle import BudgetExhausted, Oracle
from .video import RegionMask

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizerConfig:
    mode: str = "linf"  # linf | l2
    eta: float = 0.2
    eps: float = 0.1
    max_rounds: int = 10
    basis: str = "subrect"  # subrect | global
    clip: str = "cumulative"  # cumulative | per-term
    group_frames: bool = False  # one coefficient on all frames per step
    ordering: str = "shuffle"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("linf", "l2"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.basis not in ("subrect", "global"):
            raise ValueError(f"unknown basis {self.basis!r}")
        if self.clip not in ("cumulative", "per-term"):
            raise ValueError(f"unknown clip {self.clip!r}")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.mode == "linf" and self.eps <= 0:
            raise ValueError("eps must be positive in linf mode")


class CoefficientLedger:
    """Sign state per touched coefficient plus the pixel-space sums it implies.

    `raw` is sum gamma*eta*basis on the support (T, R, Cc, C); `terms` is the
    same sum with each term clipped to [-eps, eps] (only meaningful for the
    per-term linf variant).
    """

    def __init__(self, support, eta: float, eps: float):
        self.support = tuple(support)
        self.eta = eta
        self.eps = eps
        self.gamma: dict[FrequencyIndex, int] = {}
        self.accepted = 0
        self.raw = np.zeros(self.support)
        self.terms = np.zeros(self.support)

    def state(self, idx: FrequencyIndex) -> int:
        return self.gamma.get(idx, 0)

    def slice_for(self, idx: FrequencyIndex) -> np.ndarray:
        return basis_slice(idx.i, idx.j, self.support[1], self.support[2])

    def term(self, idx: FrequencyIndex, g: int) -> np.ndarray:
        return np.clip(g * self.eta * self.slice_for(idx), -self.eps, self.eps)

    def apply(self, idx: FrequencyIndex, beta: int) -> None:
        old = self.state(idx)
        new = old + beta
        if new not in (-1, 0, 1):
            raise ValueError(f"state {new} outside {{-1, 0, 1}}")
        b = self.slice_for(idx)
        self.raw[idx.t, :, :, idx.c] += beta * self.eta * b
        if self.eps > 0:
            self.terms[idx.t, :, :, idx.c] += self.term(idx, new) - self.term(idx, old)
        if new:
            self.gamma[idx] = new
        else:
            self.gamma.pop(idx, None)

    def resynthesize(self) -> np.ndarray:
        """Rebuild sum gamma*eta*basis from scratch (independent of the running sum)."""
        out = np.zeros(self.support)
        for idx, g in self.gamma.items():
            out[idx.t, :, :, idx.c] += g * self.eta * self.slice_for(idx)
        return out

    def nonzero(self) -> int:
        return len(self.gamma)

    def to_records(self) -> list:
        return [[int(v) for v in idx] + [g] for idx, g in sorted(self.gamma.items())]

    @classmethod
    def from_records(cls, support, eta, eps, records, accepted=0) -> "CoefficientLedger":
        led = cls(support, eta, eps)
        for t, c, i, j, g in records:
            led.apply(FrequencyIndex(t, c, i, j), g)
        led.accepted = accepted
        return led


def support_dims(video_shape, mask: RegionMask, basis: str):
    T, H, W, C = video_shape
    if basis == "global":
        return (T, H, W, C)
    sh, sw = mask.scaled_dims
    return (T, sh, sw, C)


def coefficient_count(video_shape, mask: RegionMask, basis: str = "subrect") -> int:
    """|Q_DCT|, the d of min{K, d}."""
    return int(np.prod(support_dims(video_shape, mask, basis)))


def area_ratio_root(mask: RegionMask) -> float:
    """k * sqrt(h w / (H W))."""
    return mask.k * math.sqrt(mask.h * mask.w / (mask.frame_h * mask.frame_w))


def perturbation_norms(x_adv: np.ndarray, x_s: np.ndarray, mask: RegionMask) -> tuple[float, float]:
    """(linf, l2) of the masked difference between two videos."""
    d = (x_adv.astype(np.float64) - x_s.astype(np.float64))[:, mask.rows, mask.cols, :]
    if d.size == 0:
        return 0.0, 0.0
    return float(np.abs(d).max()), float(np.sqrt(np.sum(d ** 2)))


@dataclass
class Stage3Result:
    video: np.ndarray
    ledger: CoefficientLedger
    success: bool
    exhausted: bool
    queries: int
    rounds: int
    records: list = field(default_factory=list)
    scores: list = field(default_factory=list)  # incumbent score after each accepted step


class LogoDCTOptimizer:
    def __init__(self, x_s: np.ndarray, mask: RegionMask, cfg: OptimizerConfig = OptimizerConfig()):
        self.x_s = x_s
        self.mask = mask
        self.cfg = cfg
        self.support = support_dims(x_s.shape, mask, cfg.basis)
        eps = cfg.eps if cfg.mode == "linf" else 0.0
        self.ledger = CoefficientLedger(self.support, cfg.eta, eps)
        self.current = x_s.copy()

    # -- perturbation bookkeeping -------------------------------------------
    def project(self, raw: np.ndarray, terms: np.ndarray) -> np.ndarray:
        """Norm projection of a (partial) perturbation, before [0, 1] clamping."""
        if self.cfg.mode == "l2":
            return raw
        if self.cfg.clip == "per-term":
            return terms
        return np.clip(raw, -self.cfg.eps, self.cfg.eps)

    def masked_delta(self) -> np.ndarray:
        """Region part of the projected perturbation, shape (T, sh, sw, C)."""
        d = self.project(self.ledger.raw, self.ledger.terms)
        if self.cfg.basis == "global":
            d = d[:, self.mask.rows, self.mask.cols, :]
        return d

    def norms(self) -> tuple[float, float]:
        d = self.masked_delta()
        if d.size == 0:
            return 0.0, 0.0
        return float(np.abs(d).max()), float(np.sqrt(np.sum(d ** 2)))

    def _region_slice(self, t: int, c: int, raw_slice, term_slice) -> np.ndarray:
        """New pixel values of frame t, channel c inside the mask."""
        m = self.mask
        d = self.project(raw_slice, term_slice)
        if self.cfg.basis == "global":
            d = d[m.rows, m.cols]
        base = self.x_s[t, m.rows, m.cols, c].astype(np.float64)
        return np.clip(base + d, 0.0, 1.0).astype(self.x_s.dtype)

    def update(self, indices: list[FrequencyIndex], beta: int) -> np.ndarray | None:
        """Candidate video for moving every index in `indices` by beta, or None if inadmissible.

        Neither the ledger nor the incumbent are changed.
        """
        if beta == 0:
            return None
        if any(self.ledger.state(idx) + beta not in (-1, 0, 1) for idx in indices):
            return None
        cand = self.current.copy()
        led = self.ledger
        m = self.mask
        for idx in indices:
            b = led.slice_for(idx)
            raw = led.raw[idx.t, :, :, idx.c] + beta * led.eta * b
            terms = led.terms[idx.t, :, :, idx.c]
            if self.cfg.mode == "linf" and self.cfg.clip == "per-term":
                old = led.state(idx)
                terms = terms + led.term(idx, old + beta) - led.term(idx, old)
            cand[idx.t, m.rows, m.cols, idx.c] = self._region_slice(idx.t, idx.c, raw, terms)
        return cand

    def commit(self, indices: list[FrequencyIndex], beta: int, cand: np.ndarray) -> None:
        for idx in indices:
            self.ledger.apply(idx, beta)
        self.ledger.accepted += 1
        self.current = cand

    def groups(self, round_no: int):
        T = self.support[0]
        seed = derive_seed(self.cfg.seed, "dct-round", round_no)
        if self.cfg.group_frames:
            q = frequency_set((1,) + self.support[1:], self.cfg.ordering, seed)
            for _, c, i, j in q:
                yield [FrequencyIndex(t, int(c), int(i), int(j)) for t in range(T)]
        else:
            for t, c, i, j in frequency_set(self.support, self.cfg.ordering, seed):
                yield [FrequencyIndex(int(t), int(c), int(i), int(j))]

    # -- main loop ------------------------------------------------------------
    def optimize(self, oracle: Oracle, goal: Goal, trace_every_query: bool = True) -> Stage3Result:
        start = oracle.used
        records: list = []
        try:
            resp = oracle.query(self.current)
        except BudgetExhausted:
            return Stage3Result(self.current, self.ledger, False, True, 0, 0, records, [])
        score = goal_score(resp, goal)
        scores = [score]
        step = 0
        rounds = 0
        exhausted = False
        success = goal.satisfied(resp)
        linf, l2 = 0.0, 0.0
        while not success and rounds < self.cfg.max_rounds and not exhausted:
            rounds += 1
            for group in self.groups(rounds):
                for beta in (1, -1):
                    cand = self.update(group, beta)
                    if cand is None:
                        continue
                    try:
                        r = oracle.query(cand)
                    except BudgetExhausted:
                        exhausted = True
                        break
                    step += 1
                    s = goal_score(r, goal)
                    accepted = s > score
                    if accepted:
                        self.commit(group, beta, cand)
                        score = s
                        scores.append(s)
                        linf, l2 = self.norms()
                        success = goal.satisfied(r)
                    if accepted or trace_every_query:
                        records.append({"step": step, "index": [list(map(int, g)) for g in group],
                                        "beta": beta, "accepted": accepted, "score": score,
                                        "queries": oracle.used, "linf": linf, "l2": l2})
                    if accepted:
                        break
                if success or exhausted:
                    break
        return Stage3Result(self.current, self.ledger, success, exhausted, oracle.used - start,
                            rounds, records, scores)


def optimize(oracle: Oracle, x_s: np.ndarray, mask: RegionMask, goal: Goal,
             cfg: OptimizerConfig = OptimizerConfig(), **kw) -> Stage3Result:
    return LogoDCTOptimizer(x_s, mask, cfg).optimize(oracle, goal, **kw)
