"""LSTM policy over the five-step action sequence (k, u, v, logo, style), with
REINFORCE updates. Forward and backward passes are plain numpy.

Step t reads the embedding of the action chosen at step t-1 (a learned start
vector at t=0), advances the LSTM, and projects the hidden state through its
own linear head. The u and v heads are masked to the range allowed by the
already-chosen scale k.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .video import scaled_size

K_MENU = (0.75, 0.8125, 0.875, 0.9375, 1.0)
ACTION_NAMES = ("k", "u", "v", "logo", "style")


class PolicyError(RuntimeError):
    pass


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass(frozen=True)
class ActionSpace:
    frame_h: int
    frame_w: int
    logo_h: int
    logo_w: int
    n_logos: int
    n_styles: int
    k_menu: tuple = K_MENU

    @property
    def sizes(self) -> tuple[int, ...]:
        kmin = min(self.k_menu)
        return (len(self.k_menu),
                self.frame_h - scaled_size(kmin, self.logo_h) + 1,
                self.frame_w - scaled_size(kmin, self.logo_w) + 1,
                self.n_logos, self.n_styles)

    def valid_u(self, k_index: np.ndarray) -> np.ndarray:
        """(B, n_u) boolean mask of admissible row origins."""
        hi = np.array([self.frame_h - scaled_size(self.k_menu[i], self.logo_h) for i in k_index])
        return np.arange(self.sizes[1])[None, :] <= hi[:, None]

    def valid_v(self, k_index: np.ndarray) -> np.ndarray:
        hi = np.array([self.frame_w - scaled_size(self.k_menu[i], self.logo_w) for i in k_index])
        return np.arange(self.sizes[2])[None, :] <= hi[:, None]


@dataclass(frozen=True)
class ActionSequence:
    u: int
    v: int
    k: float
    logo: int
    style: int

    @classmethod
    def from_indices(cls, row, space: ActionSpace) -> "ActionSequence":
        ki, u, v, l, s = (int(a) for a in row)
        return cls(u=u, v=v, k=space.k_menu[ki], logo=l, style=s)

    def as_dict(self) -> dict:
        return {"u": self.u, "v": self.v, "k": self.k, "logo": self.logo, "style": self.style}


class LSTMPolicy:
    def __init__(self, space: ActionSpace, hidden: int = 64, embed: int = 32, seed: int = 0,
                 init_scale: float = 0.08):
        self.space = space
        self.hidden = hidden
        self.embed = embed
        sizes = space.sizes
        rng = np.random.default_rng(seed)

        def u(*shape):
            return rng.uniform(-init_scale, init_scale, size=shape)

        self.params: dict[str, np.ndarray] = {
            "start": u(embed),
            "W": u(4 * hidden, embed + hidden),
            "b": u(4 * hidden),
        }
        for t, n in enumerate(sizes):
            self.params[f"Wo{t}"] = u(n, hidden)
            self.params[f"bo{t}"] = u(n)
            if t < len(sizes) - 1:
                self.params[f"emb{t}"] = u(n, embed)

    # -- forward -----------------------------------------------------------
    def _masks(self, t, actions):
        if t == 1:
            return self.space.valid_u(actions[:, 0])
        if t == 2:
            return self.space.valid_v(actions[:, 0])
        return None

    def _step(self, x, h, c):
        P = self.params
        H = self.hidden
        z = np.concatenate([x, h], axis=1) @ P["W"].T + P["b"]
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H:2 * H])
        o = _sigmoid(z[:, 2 * H:3 * H])
        g = np.tanh(z[:, 3 * H:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        return o * tc, c_new, (x, h, c, i, f, o, g, tc)

    def _head(self, t, h, mask):
        P = self.params
        logits = h @ P[f"Wo{t}"].T + P[f"bo{t}"]
        if mask is not None:
            logits = np.where(mask, logits, -np.inf)
        logits = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(logits)
        return e / e.sum(axis=1, keepdims=True)

    def run(self, batch: int, rng: np.random.Generator | None = None, actions=None):
        """Sample (rng given) or replay (actions given) a batch of sequences.

        Returns (actions (B, 5) int, log_probs (B,), cache).
        """
        sample = actions is None
        if sample:
            actions = np.zeros((batch, 5), dtype=np.int64)
        else:
            actions = np.asarray(actions, dtype=np.int64)
            batch = len(actions)
        h = np.zeros((batch, self.hidden))
        c = np.zeros((batch, self.hidden))
        x = np.broadcast_to(self.params["start"], (batch, self.embed))
        logp = np.zeros(batch)
        cache = []
        for t in range(5):
            h, c, step_cache = self._step(x, h, c)
            mask = self._masks(t, actions)
            probs = self._head(t, h, mask)
            if sample:
                cdf = np.cumsum(probs, axis=1)
                r = rng.random(batch)[:, None] * cdf[:, -1:]
                actions[:, t] = np.minimum((cdf <= r).sum(axis=1), probs.shape[1] - 1)
                # guard against landing on a zero-probability (masked) slot from rounding
                while True:
                    bad = probs[np.arange(batch), actions[:, t]] == 0
                    if not bad.any():
                        break
                    actions[bad, t] -= 1
            chosen = probs[np.arange(batch), actions[:, t]]
            if np.any(chosen <= 0):
                raise PolicyError(f"replayed action at step {t} has zero probability")
            logp += np.log(chosen)
            cache.append((step_cache, h, probs))
            if t < 4:
                x = self.params[f"emb{t}"][actions[:, t]]
        return actions, logp, cache

    def sample(self, batch: int, rng: np.random.Generator):
        actions, logp, _ = self.run(batch, rng=rng)
        return actions, logp

    def log_prob(self, actions) -> np.ndarray:
        return self.run(0, actions=actions)[1]

    def probabilities(self, actions) -> list[np.ndarray]:
        """Per-step probability vectors seen while replaying `actions`."""
        return [p for _, _, p in self.run(0, actions=actions)[2]]

    # -- backward ----------------------------------------------------------
    def grad_weighted_log_prob(self, actions, weights) -> dict[str, np.ndarray]:
        """Gradient of sum_b weights[b] * log pi(actions[b]) w.r.t. every parameter."""
        actions = np.asarray(actions, dtype=np.int64)
        weights = np.asarray(weights, dtype=np.float64)
        _, _, cache = self.run(0, actions=actions)
        P = self.params
        H = self.hidden
        B = len(actions)
        grads = {k: np.zeros_like(v) for k, v in P.items()}
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        for t in reversed(range(5)):
            (x, h_prev, c_prev, i, f, o, g, tc), h, probs = cache[t]
            dlogits = -probs
            dlogits[np.arange(B), actions[:, t]] += 1.0
            dlogits *= weights[:, None]
            grads[f"Wo{t}"] += dlogits.T @ h
            grads[f"bo{t}"] += dlogits.sum(axis=0)
            dh = dlogits @ P[f"Wo{t}"] + dh_next
            do = dh * tc
            dc = dh * o * (1.0 - tc ** 2) + dc_next
            di = dc * g
            dg = dc * i
            df = dc * c_prev
            dc_next = dc * f
            dz = np.concatenate([di * i * (1 - i), df * f * (1 - f), do * o * (1 - o),
                                 dg * (1 - g ** 2)], axis=1)
            grads["W"] += dz.T @ np.concatenate([x, h_prev], axis=1)
            grads["b"] += dz.sum(axis=0)
            dxh = dz @ P["W"]
            dx, dh_next = dxh[:, :self.embed], dxh[:, self.embed:]
            if t == 0:
                grads["start"] += dx.sum(axis=0)
            else:
                np.add.at(grads[f"emb{t - 1}"], actions[:, t - 1], dx)
        return grads

    def reinforce_update(self, actions, rewards, lr: float, baseline: bool = True) -> dict:
        """One REINFORCE step on L = -mean(R * log pi), with a batch-mean baseline."""
        rewards = np.asarray(rewards, dtype=np.float64)
        adv = rewards - rewards.mean() if baseline else rewards
        # gradient of the loss is minus the gradient of the weighted log-likelihood
        grads = self.grad_weighted_log_prob(actions, adv / len(rewards))
        for k, gk in grads.items():
            if not np.all(np.isfinite(gk)):
                raise PolicyError(f"non-finite gradient for {k}")
        for k, gk in grads.items():
            self.params[k] += lr * gk
        return grads
