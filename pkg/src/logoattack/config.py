"""Attack configuration: a flat dataclass that round-trips through key=value text."""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

from .policy import K_MENU

ABLATIONS = ("random-style", "solid-init", "no-area-penalty", "no-distance-penalty",
             "one-round", "frame-group")


@dataclass
class AttackConfig:
    goal: str = "untargeted"  # untargeted | targeted
    target: int = -1  # -1: drawn from the seed
    seed: int = 0
    n_styles: int = 5
    n_logos: int = 100
    logo_size: int = 32
    eta: float = 0.2
    eps: float = 0.1
    area_coef: float = 0.004
    dist_coef: float = 0.2
    batch: int = 0  # 0: 30 untargeted, 50 targeted
    k_menu: tuple = K_MENU
    query_limit: int = 300_000
    mode: str = "linf"
    basis: str = "subrect"
    clip: str = "cumulative"
    reveal_target: bool = True
    ablations: tuple = ()
    rl_lr: float = 0.01
    rl_max_iters: int = 50
    rl_patience: int = 5
    rl_hidden: int = 64
    style_block: int = 16
    style_step: float = 0.3
    style_query_cap: int = 5000
    style_retries: int = 3
    stylize_iterations: int = 200
    content_weight: float = 1.0
    style_weight: float = 10.0
    tv_weight: float = 1e-3
    max_rounds: int = 10
    logo_dir: str = ""
    logo_seed: int = 0  # synthesized logo set; independent of the attack seed

    def __post_init__(self):
        if self.goal not in ("untargeted", "targeted"):
            raise ValueError(f"goal must be untargeted or targeted, got {self.goal!r}")
        bad = set(self.ablations) - set(ABLATIONS)
        if bad:
            raise ValueError(f"unknown ablations {sorted(bad)}")
        self.k_menu = tuple(float(k) for k in self.k_menu)
        self.ablations = tuple(self.ablations)

    @property
    def targeted(self) -> bool:
        return self.goal == "targeted"

    @property
    def rl_batch(self) -> int:
        if self.batch > 0:
            return self.batch
        return 50 if self.targeted else 30

    def has(self, ablation: str) -> bool:
        return ablation in self.ablations

    @property
    def effective_area_coef(self) -> float:
        return 0.0 if self.has("no-area-penalty") else self.area_coef

    @property
    def effective_dist_coef(self) -> float:
        return 0.0 if self.has("no-distance-penalty") else self.dist_coef

    @property
    def effective_rounds(self) -> int:
        return 1 if self.has("one-round") else self.max_rounds

    # -- text round trip ---------------------------------------------------
    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_pairs(cls, pairs: dict[str, str], base: "AttackConfig | None" = None) -> "AttackConfig":
        base = base or cls()
        kwargs = {f.name: getattr(base, f.name) for f in dataclasses.fields(cls)}
        for key, raw in pairs.items():
            key = key.strip().replace("-", "_")
            if key not in kwargs:
                raise KeyError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(cls().__getattribute__(key), raw.strip())
        return cls(**kwargs)

    @classmethod
    def from_text(cls, text: str, base: "AttackConfig | None" = None) -> "AttackConfig":
        pairs = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, value = line.partition("=")
            pairs[key] = value
        return cls.from_pairs(pairs, base)

    @classmethod
    def load(cls, path) -> "AttackConfig":
        return cls.from_text(Path(path).read_text())


def _coerce(default, raw: str):
    if isinstance(default, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        items = [x.strip() for x in raw.split(",") if x.strip()]
        if default and isinstance(default[0], float):
            return tuple(float(x) for x in items)
        return tuple(items)
    return raw


def master_seed(cfg: AttackConfig) -> int:
    """LSF_SEED in the environment overrides the configured seed."""
    env = os.environ.get("LSF_SEED")
    return int(env) if env not in (None, "") else cfg.seed
