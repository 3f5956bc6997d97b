"""End-to-end attack: style search, RL-directed logo placement, masked DCT refinement.

Also the two drivers built on it: `campaign` over a list of videos and
`verify_bounds`, which replays short Stage-3 episodes and checks the norm
invariants.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import AttackConfig, master_seed
from .dataset import N_CLASSES, generate_dataset
from .dct_attack import (LogoDCTOptimizer, OptimizerConfig, area_ratio_root, coefficient_count,
                         perturbation_norms)
from .director import DirectorConfig, RewardParams, StylizedLogoCache, direct_stage2
from .goals import Goal, derive_seed
from .logos import LogoAsset, load_logo_dir, synthesize_logo_set
from .metrics import AttackTrace, aggregate, mean_aoa, warping_error
from .oracle import BudgetExhausted, Oracle, QueryBudget, ToyClassifier
from .style_search import StyleSearchFailed, build_style_set, random_style_set
from .stylize import StyleTransferConfig
from .video import RegionMask, resize, superimpose, write_video

log = logging.getLogger(__name__)

STAGES = ("q1", "q2", "q3")


class InvariantViolation(RuntimeError):
    pass


def _plain(obj):
    """JSON-safe copy: numpy scalars and arrays to Python, tuples to lists."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def dump_records(records: list[dict]) -> bytes:
    return b"".join(json.dumps(_plain(r), sort_keys=True).encode() + b"\n" for r in records)


def video_digest(x: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(x, dtype=np.float32).tobytes()).hexdigest()[:16]


@dataclass
class AttackResult:
    trace: AttackTrace
    video: np.ndarray | None
    records: list = field(default_factory=list)
    mask: RegionMask | None = None
    budget_used: int = 0

    def trace_bytes(self) -> bytes:
        return dump_records(self.records)

    def metrics_record(self) -> dict:
        return _plain(self.trace.as_dict() | {"wall_time": self.trace.wall_time})


def logo_set(cfg: AttackConfig) -> list[LogoAsset]:
    """The candidate logos: a PNG directory, or a synthesized set fixed by logo_seed."""
    if cfg.logo_dir:
        logos = load_logo_dir(cfg.logo_dir, cfg.logo_size)[: cfg.n_logos]
        if not logos:
            raise ValueError(f"no admissible logos in {cfg.logo_dir}")
        return logos
    return synthesize_logo_set(cfg.logo_seed, cfg.n_logos, cfg.logo_size)


def pick_target(cfg: AttackConfig, y0: int, seed: int, n_classes: int = N_CLASSES) -> int:
    if cfg.target >= 0:
        if cfg.target == y0:
            raise ValueError("target label equals the true label")
        return cfg.target
    rng = np.random.default_rng(derive_seed(seed, "target"))
    return int(rng.choice([c for c in range(n_classes) if c != y0]))


def style_transfer_config(cfg: AttackConfig) -> StyleTransferConfig:
    return StyleTransferConfig(content_weight=cfg.content_weight, style_weight=cfg.style_weight,
                               tv_weight=cfg.tv_weight, iterations=cfg.stylize_iterations)


def optimizer_config(cfg: AttackConfig, seed: int) -> OptimizerConfig:
    return OptimizerConfig(mode=cfg.mode, eta=cfg.eta, eps=cfg.eps, max_rounds=cfg.effective_rounds,
                           basis=cfg.basis, clip=cfg.clip, group_frames=cfg.has("frame-group"),
                           seed=seed)


def attack(cfg: AttackConfig, x0: np.ndarray, y0: int, model: ToyClassifier,
           logos: list[LogoAsset] | None = None, video_id: str = "") -> AttackResult:
    """Run all three stages on one video.

    The admission check (is x0 classified as y0?) is one query on a separate
    single-query budget, so the episode budget and the per-stage counts cover
    the attack itself and nothing else.
    """
    t0 = time.perf_counter()
    seed = master_seed(cfg)
    x0 = np.asarray(x0, dtype=np.float32)
    T, H, W, C = x0.shape
    header = {"record": "header", "video": video_id, "digest": video_digest(x0), "y0": int(y0),
              "seed": seed, "config": cfg.to_text().splitlines()}

    gate = Oracle(model, QueryBudget(1))
    pred = gate.query(x0).label
    if pred != y0:
        trace = AttackTrace("rejected", extra={"video": video_id, "y0": int(y0),
                                               "predicted": int(pred),
                                               "diagnostic": f"classified as {pred}, not {y0}"})
        trace.wall_time = time.perf_counter() - t0
        return AttackResult(trace, None, [header, {"record": "summary", **trace.as_dict()}])

    if cfg.targeted:
        goal = Goal.targeted_at(pick_target(cfg, y0, seed))
        reveal = goal.label if cfg.reveal_target else None
    else:
        goal = Goal.untargeted(y0)
        reveal = None
    header["goal"] = goal.describe()
    oracle = Oracle(model, QueryBudget(cfg.query_limit), reveal_target=reveal)
    logos = logos if logos is not None else logo_set(cfg)
    records: list[dict] = [header]
    outcome, stage, video, mask, action = "stage_failed", None, None, None, None
    extra: dict = {"video": video_id, "y0": int(y0), "goal": goal.describe()}

    try:
        # Stage 1: adversarial style images
        with oracle.stage("q1"):
            if cfg.has("random-style"):
                styles = random_style_set(cfg.n_styles, derive_seed(seed, "stage1"), C,
                                          (cfg.style_block, cfg.style_block))
            else:
                styles = build_style_set(
                    oracle, goal, cfg.n_styles, derive_seed(seed, "stage1"), x0.shape,
                    retries=cfg.style_retries, block=(cfg.style_block, cfg.style_block),
                    step=cfg.style_step, query_cap=cfg.style_query_cap,
                    init="solid" if cfg.has("solid-init") else "random")
        for i, s in enumerate(styles):
            records.append({"record": "style", "index": i, "seed": s.seed, "queries": s.queries,
                            "accepted_scores": s.accepted_scores})

        # Stage 2: RL over (k, u, v, logo, style)
        dcfg = DirectorConfig(batch=cfg.rl_batch, lr=cfg.rl_lr, max_iters=cfg.rl_max_iters,
                              patience=cfg.rl_patience, hidden=cfg.rl_hidden,
                              seed=derive_seed(seed, "stage2"), k_menu=cfg.k_menu)
        params = RewardParams(cfg.effective_area_coef, cfg.effective_dist_coef)
        with oracle.stage("q2"):
            r2 = direct_stage2(oracle, x0, goal, styles, logos, params, dcfg,
                               cache=StylizedLogoCache(logos, styles, style_transfer_config(cfg)))
        records.extend({"record": "stage2", **r} for r in r2.records)
        video, mask, action = r2.video, r2.mask, r2.action
        extra["stylize_calls"] = r2.stylize_calls
        if r2.success:
            outcome, stage = "success", 2
        elif r2.exhausted or video is None:
            outcome = "budget_exhausted"
        else:
            # Stage 3: masked DCT refinement inside the logo
            opt = LogoDCTOptimizer(video, mask, optimizer_config(cfg, derive_seed(seed, "stage3")))
            with oracle.stage("q3"):
                r3 = opt.optimize(oracle, goal)
            records.extend({"record": "stage3", **r} for r in r3.records)
            extra["coefficients"] = r3.ledger.nonzero()
            extra["rounds"] = r3.rounds
            linf, l2 = opt.norms()
            extra["delta_linf"], extra["delta_l2"] = linf, l2
            video = r3.video
            if r3.success:
                outcome, stage = "success", 3
            elif r3.exhausted:
                outcome = "budget_exhausted"
    except BudgetExhausted:
        outcome = "budget_exhausted"
    except StyleSearchFailed as e:
        outcome = "stage_failed"
        extra["diagnostic"] = str(e)

    counts = {q: oracle.stage_counts.get(q, 0) for q in STAGES}
    if sum(counts.values()) != oracle.used:
        raise InvariantViolation(f"stage counts {counts} do not sum to {oracle.used}")
    extra["oracle_queries"] = oracle.used
    trace = AttackTrace(outcome, counts["q1"], counts["q2"], counts["q3"], stage,
                        action.as_dict() if action else None, extra=extra)
    if video is not None and mask is not None:
        trace.linf, trace.l2 = perturbation_norms(video, x0, mask)
        extra["aoa"] = 100.0 * mask.area / (H * W)
    trace.wall_time = time.perf_counter() - t0
    records.append({"record": "summary", **trace.as_dict()})
    return AttackResult(trace, video, records, mask, oracle.used)


def save_attack(result: AttackResult, out_dir, stem: str = "attack") -> dict[str, Path]:
    """Adversarial video (LSFV1), line-delimited trace, and a metrics record."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"trace": out / f"{stem}.trace.jsonl", "metrics": out / f"{stem}.metrics.json"}
    paths["trace"].write_bytes(result.trace_bytes())
    paths["metrics"].write_text(json.dumps(result.metrics_record(), sort_keys=True, indent=1))
    if result.video is not None:
        paths["video"] = out / f"{stem}.lsfv"
        write_video(paths["video"], result.video)
    return paths


# -- campaign -----------------------------------------------------------------
def campaign(cfg: AttackConfig, videos, model: ToyClassifier, n_videos: int | None = None,
             out_dir=None, with_ti: bool = False, progress=None) -> dict:
    """Attack each (video_id, x0, y0) in turn and aggregate.

    Rejected videos (misclassified on admission) are listed but left out of
    the FR/AQ denominators. Any other per-video error is recorded as
    stage_failed and the campaign moves on.
    """
    videos = list(videos)[: n_videos] if n_videos else list(videos)
    seed = master_seed(cfg)
    logos = logo_set(cfg)
    traces, rows = [], []
    for n, (vid, x0, y0) in enumerate(videos):
        vcfg = AttackConfig.from_pairs({"seed": str(derive_seed(seed, "video", vid))}, cfg)
        try:
            res = attack(vcfg, x0, y0, model, logos, video_id=str(vid))
        except (ValueError, RuntimeError) as e:
            if isinstance(e, InvariantViolation):
                raise
            log.warning("video %s failed: %s", vid, e)
            res = AttackResult(AttackTrace("stage_failed", extra={"video": str(vid),
                                                                  "diagnostic": str(e)}), None)
        if out_dir is not None:
            save_attack(res, out_dir, f"video_{vid}")
        rows.append(res.metrics_record())
        if res.trace.outcome != "rejected":
            traces.append(res)
        if progress:
            progress(n, res)

    report: dict = {"scale": "desk-scale (synthetic videos, toy oracle)",
                    "n_rejected": sum(r["outcome"] == "rejected" for r in rows), "videos": rows}
    if traces:
        report.update(aggregate([r.trace for r in traces]))
        h = w = cfg.logo_size
        T, H, W, _ = np.shape(videos[0][1])
        report["AOA"] = mean_aoa([r.trace for r in traces if r.trace.outcome == "success"],
                                 h, w, H, W)
        if with_ti:
            tis = [warping_error(r.video) for r in traces
                   if r.trace.outcome == "success" and r.video is not None]
            report["TI"] = float(np.mean(tis)) if tis else None
    if out_dir is not None:
        Path(out_dir, "report.json").write_text(json.dumps(_plain(report), sort_keys=True, indent=1))
    return report


# -- bound verification ----------------------------------------------------------
@dataclass
class BoundTally:
    mode: str
    basis: str
    trials: int = 0
    hard_pass: int = 0
    rho_pass: int = 0
    equality_checked: int = 0
    max_recon_error: float = 0.0
    failures: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"mode": self.mode, "basis": self.basis, "trials": self.trials,
                "hard_pass": self.hard_pass, "rho_pass": self.rho_pass,
                "equality_checked": self.equality_checked,
                "max_recon_error": self.max_recon_error, "failures": self.failures[:10]}


def bound_episode(model: ToyClassifier, x0: np.ndarray, logo: LogoAsset, rng: np.random.Generator,
                  cfg: OptimizerConfig, k_menu, queries: int):
    """One short Stage-3 episode on a randomly placed, unstylized logo."""
    T, H, W, C = x0.shape
    k = float(rng.choice(k_menu))
    mask = RegionMask(0, 0, k, logo.h, logo.w, H, W)
    sh, sw = mask.scaled_dims
    u, v = int(rng.integers(0, H - sh + 1)), int(rng.integers(0, W - sw + 1))
    mask = RegionMask(u, v, k, logo.h, logo.w, H, W)
    x_s = superimpose(x0, resize(logo.rgb, sh, sw, "bilinear").astype(np.float32), mask)
    y0 = model.predict(x0)
    opt = LogoDCTOptimizer(x_s, mask, cfg)
    res = opt.optimize(Oracle(model, QueryBudget(queries)), Goal.untargeted(y0),
                       trace_every_query=False)
    return opt, res, mask


def check_episode(opt: LogoDCTOptimizer, mask: RegionMask, tally: BoundTally, tol: float = 1e-6):
    cfg = opt.cfg
    led = opt.ledger
    group = opt.support[0] if cfg.group_frames else 1
    K = led.accepted * group
    d = coefficient_count(opt.x_s.shape, mask, cfg.basis)
    m = min(K, d)
    rho = area_ratio_root(mask)
    linf, l2 = opt.norms()
    recon = float(np.abs(led.resynthesize() - led.raw).max()) if led.raw.size else 0.0
    tally.max_recon_error = max(tally.max_recon_error, recon)
    problems = []
    if recon > tol:
        problems.append(f"reconstruction error {recon:.3g}")
    if cfg.mode == "linf":
        if cfg.clip == "cumulative" and linf > cfg.eps + 1e-12:
            problems.append(f"linf {linf} > eps {cfg.eps}")
        rho_ok = linf <= cfg.eps * rho * math.sqrt(m) + 1e-12
    else:
        rho_ok = l2 <= cfg.eta * rho * math.sqrt(m) + tol
        if cfg.basis == "subrect":
            if l2 > cfg.eta * math.sqrt(m) + tol:
                problems.append(f"l2 {l2} > eta*sqrt(min(K,d)) {cfg.eta * math.sqrt(m)}")
            # orthonormal directions: the norm is exactly eta * sqrt(#nonzero states)
            if abs(l2 - cfg.eta * math.sqrt(led.nonzero())) > tol:
                problems.append(f"l2 {l2} != eta*sqrt(nnz)")
            if led.nonzero() == K:
                # every accepted move left a nonzero state: the bound is attained
                tally.equality_checked += 1
                if abs(l2 - cfg.eta * math.sqrt(m)) > tol:
                    problems.append("equality case off by more than tol")
    # the stored video may only differ inside the mask
    outside = opt.current.copy()
    outside[:, mask.rows, mask.cols, :] = opt.x_s[:, mask.rows, mask.cols, :]
    if not np.array_equal(outside, opt.x_s):
        problems.append("perturbation leaked outside the logo region")
    tally.trials += 1
    tally.rho_pass += bool(rho_ok)
    if problems:
        tally.failures.append(problems)
    else:
        tally.hard_pass += 1


def verify_bounds(cfg: AttackConfig, model: ToyClassifier, n_trials: int = 100,
                  modes=("l2", "linf"), bases=("subrect", "global"),
                  queries_per_trial: int = 200) -> dict:
    seed = master_seed(cfg)
    pool = generate_dataset(derive_seed(seed, "bounds", "videos"), 2)
    logos = synthesize_logo_set(derive_seed(seed, "bounds", "logos"), 20, cfg.logo_size)
    tallies = []
    for mode in modes:
        for basis in bases:
            tally = BoundTally(mode, basis)
            for trial in range(n_trials):
                tseed = derive_seed(seed, "bounds", mode, basis, trial)
                rng = np.random.default_rng(tseed)
                x0 = pool.videos[int(rng.integers(len(pool.videos)))]
                logo = logos[int(rng.integers(len(logos)))]
                ocfg = OptimizerConfig(mode=mode, eta=cfg.eta, eps=cfg.eps, basis=basis,
                                       clip=cfg.clip, group_frames=cfg.has("frame-group"),
                                       max_rounds=cfg.effective_rounds, seed=tseed)
                opt, _, mask = bound_episode(model, x0, logo, rng, ocfg, cfg.k_menu,
                                             queries_per_trial)
                check_episode(opt, mask, tally)
            log.info("bounds %s/%s: %d/%d hard, %d/%d rho", mode, basis, tally.hard_pass,
                     tally.trials, tally.rho_pass, tally.trials)
            tallies.append(tally)
    return {"tallies": [t.as_dict() for t in tallies],
            "ok": all(t.hard_pass == t.trials for t in tallies)}
