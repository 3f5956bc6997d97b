"""Stage 2: reinforcement-learned choice of logo placement, scale, logo and style."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .goals import Goal, goal_probability
from .logos import LogoAsset
from .oracle import BudgetExhausted, Oracle
from .policy import K_MENU, ActionSequence, ActionSpace, LSTMPolicy
from .style_search import StyleImage
from .stylize import StyleTransferConfig, stylize_logo
from .video import RegionMask, resize, scaled_size, superimpose

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class RewardParams:
    area_coef: float = 0.004
    dist_coef: float = 0.2

    def __post_init__(self):
        if self.area_coef < 0 or self.dist_coef < 0:
            raise ValueError("penalty coefficients must be nonnegative")


def corner_distance(a: ActionSequence, H: int, W: int, h: int, w: int) -> float:
    """Smallest distance between a logo corner and the matching frame corner."""
    kh, kw = scaled_size(a.k, h), scaled_size(a.k, w)
    d1 = math.hypot(a.u, a.v)
    d2 = math.hypot(a.u, a.v + kw - W)
    d3 = math.hypot(a.u + kh - H, a.v)
    d4 = math.hypot(a.u + kh - H, a.v + kw - W)
    return min(d1, d2, d3, d4)


def reward(prob: float | None, a: ActionSequence, goal: Goal, params: RewardParams,
           H: int, W: int, h: int, w: int) -> float:
    """log-goal-probability minus area and corner-distance penalties.

    `prob` is p(y_t|x) (targeted) or p(y0|x) (untargeted); None means the
    oracle hid it, which is scored at the floor.
    """
    if goal.targeted:
        p = PROB_FLOOR if prob is None else prob
        term = math.log(max(p, PROB_FLOOR))
    else:
        term = math.log(max(1.0 - prob, PROB_FLOOR))
    return (term - params.area_coef * a.k ** 2 * h * w
            - params.dist_coef * corner_distance(a, H, W, h, w))


@dataclass
class DirectorConfig:
    batch: int = 30
    lr: float = 0.01
    max_iters: int = 50
    patience: int = 5
    hidden: int = 64
    seed: int = 0
    baseline: bool = True
    k_menu: tuple = K_MENU


@dataclass
class Stage2Result:
    video: np.ndarray | None
    action: ActionSequence | None
    mask: RegionMask | None
    reward: float
    success: bool
    exhausted: bool
    iterations: int
    queries: int
    records: list = field(default_factory=list)
    stylize_calls: int = 0


class StylizedLogoCache:
    """Memoizes stylize_logo per (logo index, style index)."""

    def __init__(self, logos: list[LogoAsset], styles: list[StyleImage],
                 cfg: StyleTransferConfig = StyleTransferConfig()):
        self.logos = logos
        self.styles = styles
        self.cfg = cfg
        self._store: dict[tuple[int, int], np.ndarray] = {}
        self.calls = 0

    def get(self, logo: int, style: int) -> np.ndarray:
        key = (logo, style)
        if key not in self._store:
            self.calls += 1
            res = stylize_logo(self.logos[logo].rgb, self.styles[style].block, self.cfg)
            self._store[key] = res.image
        return self._store[key]


def compose(x0: np.ndarray, a: ActionSequence, cache: StylizedLogoCache, h: int, w: int):
    T, H, W, C = x0.shape
    mask = RegionMask(a.u, a.v, a.k, h, w, H, W)
    sh, sw = mask.scaled_dims
    logo = resize(cache.get(a.logo, a.style), sh, sw, "bilinear").astype(np.float32)
    return superimpose(x0, logo, mask), mask


def direct_stage2(oracle: Oracle, x0: np.ndarray, goal: Goal, styles: list[StyleImage],
                  logos: list[LogoAsset], params: RewardParams = RewardParams(),
                  cfg: DirectorConfig = DirectorConfig(),
                  style_cfg: StyleTransferConfig = StyleTransferConfig(),
                  cache: StylizedLogoCache | None = None) -> Stage2Result:
    """Sample batches of action sequences, score them with the oracle, update the policy.

    Stops after a batch in which some video meets the goal, after `patience`
    iterations without a better reward, or after `max_iters`. The returned
    video is the best-reward one; on success, the best-reward successful one.
    """
    T, H, W, C = x0.shape
    h, w = logos[0].h, logos[0].w
    space = ActionSpace(H, W, h, w, len(logos), len(styles), tuple(cfg.k_menu))
    policy = LSTMPolicy(space, hidden=cfg.hidden, seed=cfg.seed)
    rng = np.random.default_rng([cfg.seed, 7])
    cache = cache or StylizedLogoCache(logos, styles, style_cfg)
    start = oracle.used

    best = dict(reward=-math.inf, video=None, action=None, mask=None)
    best_success = dict(reward=-math.inf, video=None, action=None, mask=None)
    records = []
    stale = 0
    it = 0
    exhausted = False
    for it in range(1, cfg.max_iters + 1):
        actions, _ = policy.sample(cfg.batch, rng)
        rewards = []
        improved = False
        for row in actions:
            a = ActionSequence.from_indices(row, space)
            video, mask = compose(x0, a, cache, h, w)
            try:
                resp = oracle.query(video)
            except BudgetExhausted:
                exhausted = True
                break
            r = reward(goal_probability(resp, goal), a, goal, params, H, W, h, w)
            ok = goal.satisfied(resp)
            rewards.append(r)
            records.append({"iteration": it, "sequence": a.as_dict(), "reward": r,
                            "label": resp.label, "score": resp.score,
                            "goal_prob": goal_probability(resp, goal), "success": ok,
                            "queries": oracle.used})
            if r > best["reward"]:
                best.update(reward=r, video=video, action=a, mask=mask)
                improved = True
            if ok and r > best_success["reward"]:
                best_success.update(reward=r, video=video, action=a, mask=mask)
        if exhausted:
            break
        if best_success["video"] is not None:
            break
        policy.reinforce_update(actions, rewards, cfg.lr, cfg.baseline)
        stale = 0 if improved else stale + 1
        if stale >= cfg.patience:
            break
    chosen = best_success if best_success["video"] is not None else best
    return Stage2Result(video=chosen["video"], action=chosen["action"], mask=chosen["mask"],
                        reward=chosen["reward"], success=best_success["video"] is not None,
                        exhausted=exhausted, iterations=it, queries=oracle.used - start,
                        records=records, stylize_calls=cache.calls)
