"""Attack goals and the scalar incumbent score used for greedy acceptance.

`goal_score` maps an oracle response to one number the attack stages try to
increase:

* untargeted, top-1 still y0:  -p(y0)
* untargeted, top-1 != y0:      1.0 (goal reached; p(y0) is no longer visible)
* targeted, p(y_t) revealed:    p(y_t)
* targeted, strict top-1 view:  p(y_t) if y_t is top-1, else -p(top-1)

The last form is the only signal a top-1-only oracle gives before the target
wins; it pushes the wrong winner down and hopes the target takes over.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .oracle import OracleResponse


@dataclass(frozen=True)
class Goal:
    label: int
    targeted: bool

    @classmethod
    def untargeted(cls, y0: int) -> "Goal":
        return cls(int(y0), False)

    @classmethod
    def targeted_at(cls, yt: int) -> "Goal":
        return cls(int(yt), True)

    def satisfied(self, resp: OracleResponse) -> bool:
        return (resp.label == self.label) == self.targeted

    def describe(self) -> str:
        return f"{'targeted' if self.targeted else 'untargeted'}:{self.label}"


def goal_score(resp: OracleResponse, goal: Goal) -> float:
    if goal.targeted:
        if resp.target_score is not None:
            return resp.target_score
        return resp.score if resp.label == goal.label else -resp.score
    return -resp.score if resp.label == goal.label else 1.0


def goal_probability(resp: OracleResponse, goal: Goal) -> float | None:
    """p(y_t|x) for targeted goals, p(y0|x) for untargeted; None when the oracle hides it.

    Untargeted with a different top-1 returns 0.0: p(y0) is hidden but the
    goal is met, and 0 is what the reward should see.
    """
    if goal.targeted:
        if resp.target_score is not None:
            return resp.target_score
        return resp.score if resp.label == goal.label else None
    return resp.score if resp.label == goal.label else 0.0


def derive_seed(master: int, *labels) -> int:
    """Stable 63-bit seed from a master seed and a label path."""
    key = "/".join([str(int(master))] + [str(x) for x in labels]).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little") >> 1
