"""Command-line entry point: `logoattack <subcommand> ...`.

Exit codes: 0 success, 1 attack failed in a stage, 2 invariant violation,
3 query budget exhausted, 4 bad input.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import AttackConfig, master_seed
from .dataset import export_dataset, generate_dataset, load_dataset, read_index
from .goals import Goal
from .logos import save_png, synthesize_logo_set
from .metrics import AttackTrace, aggregate, warping_error
from .oracle import Oracle, QueryBudget, load_checkpoint, save_checkpoint, train_classifier
from .pipeline import (InvariantViolation, attack, campaign, pick_target, save_attack,
                       verify_bounds)
from .style_search import StyleSearchFailed, build_style_set, save_style_set
from .video import VideoFormatError, read_video

EXIT_OK, EXIT_FAILED, EXIT_INVARIANT, EXIT_BUDGET, EXIT_BAD_INPUT = 0, 1, 2, 3, 4

log = logging.getLogger("logoattack")


class BadInput(Exception):
    pass


def load_config(args) -> AttackConfig:
    cfg = AttackConfig.load(args.config) if getattr(args, "config", None) else AttackConfig()
    pairs = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise BadInput(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        pairs[k] = v
    if getattr(args, "ablation", None):
        pairs["ablations"] = ",".join(args.ablation)
    if getattr(args, "global_basis", False):
        pairs["basis"] = "global"
    try:
        return AttackConfig.from_pairs(pairs, cfg)
    except (KeyError, ValueError) as e:
        raise BadInput(str(e)) from e


def _classifier(path):
    try:
        return load_checkpoint(path)
    except (OSError, ValueError) as e:
        raise BadInput(f"cannot load classifier {path}: {e}") from e


def _video(path):
    try:
        return read_video(path)
    except (OSError, VideoFormatError) as e:
        raise BadInput(f"cannot read video {path}: {e}") from e


def _emit(obj) -> None:
    print(json.dumps(obj, indent=1, sort_keys=True, default=float))


# -- subcommands ----------------------------------------------------------------
def cmd_gen_dataset(args) -> int:
    ds = generate_dataset(args.seed, args.n_per_class)
    index = export_dataset(ds, args.out)
    print(f"wrote {len(ds)} videos, index {index}")
    return EXIT_OK


def cmd_train_classifier(args) -> int:
    ds = load_dataset(args.dataset) if args.dataset else generate_dataset(args.seed, args.n_per_class)
    res = train_classifier(ds, epochs=args.epochs, lr=args.lr, seed=args.seed)
    save_checkpoint(args.out, res.model)
    print(f"held-out accuracy {res.heldout_accuracy:.4f} on {len(res.heldout_idx)} videos")
    return EXIT_OK


def cmd_gen_logos(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for logo in synthesize_logo_set(args.seed, args.n, args.size):
        save_png(out / f"{logo.id}.png", logo.pixels)
    print(f"wrote {args.n} logos to {out}")
    return EXIT_OK


def cmd_find_styles(args) -> int:
    cfg = load_config(args)
    model = _classifier(args.classifier)
    x0 = _video(args.video)
    seed = master_seed(cfg)
    goal = (Goal.targeted_at(pick_target(cfg, args.label, seed)) if cfg.targeted
            else Goal.untargeted(args.label))
    oracle = Oracle(model, QueryBudget(cfg.query_limit),
                    reveal_target=goal.label if goal.targeted and cfg.reveal_target else None)
    try:
        styles = build_style_set(oracle, goal, cfg.n_styles, seed, x0.shape,
                                 retries=cfg.style_retries, step=cfg.style_step,
                                 query_cap=cfg.style_query_cap,
                                 init="solid" if cfg.has("solid-init") else "random")
    except StyleSearchFailed as e:
        print(f"style search failed: {e}", file=sys.stderr)
        return EXIT_FAILED
    save_style_set(args.out, styles)
    print(f"{len(styles)} styles, {oracle.used} queries, saved to {args.out}")
    return EXIT_OK


def cmd_attack(args) -> int:
    cfg = load_config(args)
    model = _classifier(args.classifier)
    x0 = _video(args.video)
    res = attack(cfg, x0, args.label, model, video_id=Path(args.video).stem)
    paths = save_attack(res, args.out, Path(args.video).stem)
    _emit({"outcome": res.trace.outcome, **{k: str(v) for k, v in paths.items()},
           "queries": res.trace.total_queries, "success_stage": res.trace.success_stage})
    return {"success": EXIT_OK, "budget_exhausted": EXIT_BUDGET,
            "rejected": EXIT_BAD_INPUT}.get(res.trace.outcome, EXIT_FAILED)


def cmd_campaign(args) -> int:
    cfg = load_config(args)
    model = _classifier(args.classifier)
    try:
        entries = read_index(args.manifest)
    except (OSError, ValueError) as e:
        raise BadInput(f"cannot read manifest {args.manifest}: {e}") from e
    if args.n_videos:
        entries = entries[: args.n_videos]
    videos = ((p.stem, _video(p), lab) for p, lab in entries)

    def progress(n, res):
        t = res.trace
        log.info("%d %s %s q=%d", n, t.extra.get("video"), t.outcome, t.total_queries)

    report = campaign(cfg, videos, model, out_dir=args.out, with_ti=args.ti, progress=progress)
    _emit({k: v for k, v in report.items() if k != "videos"})
    return EXIT_OK


def cmd_verify_bounds(args) -> int:
    cfg = load_config(args)
    model = _classifier(args.classifier)
    bases = ("subrect", "global") if args.basis == "both" else (args.basis,)
    modes = ("l2", "linf") if args.mode == "both" else (args.mode,)
    report = verify_bounds(cfg, model, args.trials, modes, bases, args.queries)
    for t in report["tallies"]:
        print(f"{t['mode']:>4} {t['basis']:>7}: hard {t['hard_pass']}/{t['trials']}"
              f"  rho-bound {t['rho_pass']}/{t['trials']}"
              f"  max recon err {t['max_recon_error']:.2e}")
    return EXIT_OK if report["ok"] else EXIT_INVARIANT


def cmd_metrics(args) -> int:
    out = {}
    if args.traces:
        traces = []
        for p in args.traces:
            rec = json.loads(Path(p).read_text())
            if rec.get("outcome") == "rejected":
                continue
            traces.append(AttackTrace(rec["outcome"], rec["q1"], rec["q2"], rec["q3"],
                                      rec.get("success_stage"), rec.get("action")))
        if not traces:
            raise BadInput("no usable metrics records")
        out.update(aggregate(traces))
    for p in args.video or []:
        ti, flagged = warping_error(_video(p), return_flags=True)
        out[f"TI:{p}"] = ti
        if flagged:
            out[f"TI-empty-mask:{p}"] = flagged
    if not out:
        raise BadInput("give --traces and/or --video")
    _emit(out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="logoattack", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--ablation", action="append",
                       choices=["random-style", "solid-init", "no-area-penalty",
                                "no-distance-penalty", "one-round", "frame-group"])
        p.add_argument("--global-basis", action="store_true")
        return p

    p = sub.add_parser("gen-dataset", help="render synthetic moving-shape videos")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-per-class", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("train-classifier", help="train the toy video classifier")
    p.add_argument("--dataset", help="labels.txt index; generated when omitted")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-per-class", type=int, default=100)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_classifier)

    p = sub.add_parser("gen-logos", help="synthesize letter logos as PNG")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_logos)

    for name, func, help_ in (("find-styles", cmd_find_styles, "stage 1 only"),
                              ("attack", cmd_attack, "full attack on one video")):
        p = with_config(sub.add_parser(name, help=help_))
        p.add_argument("--classifier", required=True)
        p.add_argument("--video", required=True)
        p.add_argument("--label", type=int, required=True)
        p.add_argument("--out", required=True)
        p.set_defaults(func=func)

    p = with_config(sub.add_parser("campaign", help="attack every video in a manifest"))
    p.add_argument("--classifier", required=True)
    p.add_argument("--manifest", required=True, help="labels.txt index")
    p.add_argument("--n-videos", type=int, default=0)
    p.add_argument("--ti", action="store_true", help="also compute the warping error")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_campaign)

    p = with_config(sub.add_parser("verify-bounds", help="norm-bound checks on short episodes"))
    p.add_argument("--classifier", required=True)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--queries", type=int, default=200, help="query cap per episode")
    p.add_argument("--mode", choices=["l2", "linf", "both"], default="both")
    p.add_argument("--basis", choices=["subrect", "global", "both"], default="both")
    p.set_defaults(func=cmd_verify_bounds)

    p = sub.add_parser("metrics", help="aggregate metrics records and/or warping error")
    p.add_argument("--traces", nargs="*", help="*.metrics.json files")
    p.add_argument("--video", nargs="*", help="LSFV1 videos to score for TI")
    p.set_defaults(func=cmd_metrics)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except BadInput as e:
        print(f"bad input: {e}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except InvariantViolation as e:
        print(f"invariant violated: {e}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
