"""Logo style transfer: content / Gram-style / total-variation losses on a fixed
two-layer convolutional feature bank, minimized by projected gradient descent.

All gradients are written out by hand; see tests/test_stylize.py for the
finite-difference checks.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .video import resize


class StyleTransferError(RuntimeError):
    pass


@dataclass(frozen=True)
class StyleTransferConfig:
    content_weight: float = 1.0
    style_weight: float = 10.0
    tv_weight: float = 1e-3
    iterations: int = 200
    init_step: float = 1.0
    shrink: float = 0.5
    max_backtracks: int = 30

    def __post_init__(self):
        if min(self.content_weight, self.style_weight, self.tv_weight) < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")


def _box():
    return np.full((3, 3), 1.0 / 9.0)


def _sobel_x():
    return np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]]) / 4.0


def default_bank() -> tuple[np.ndarray, np.ndarray]:
    """Layer-1 (3,3,3,8) and layer-2 (3,3,8,8) kernels laid out [dy, dx, c_in, c_out].

    Layer 1: per-channel blurs, +/- horizontal and vertical luma edges, a luma
    Laplacian. Layer 2: a blur of each map plus a horizontal edge of a
    neighbouring map.
    """
    luma = np.array([0.299, 0.587, 0.114])
    lap = np.array([[0.0, -1.0, 0.0], [-1.0, 4.0, -1.0], [0.0, -1.0, 0.0]]) / 4.0
    w1 = np.zeros((3, 3, 3, 8))
    for ch in range(3):
        w1[:, :, ch, ch] = _box()
    for f, k in ((3, _sobel_x()), (4, -_sobel_x()), (5, _sobel_x().T), (6, -_sobel_x().T),
                 (7, lap)):
        w1[:, :, :, f] = k[..., None] * luma
    w2 = np.zeros((3, 3, 8, 8))
    for f in range(8):
        w2[:, :, f, f] += _box()
        w2[:, :, (f + 3) % 8, f] += 0.5 * _sobel_x()
    return w1, w2


def conv_forward(x: np.ndarray, w: np.ndarray, stride: int = 1) -> np.ndarray:
    """Valid cross-correlation of x (H, W, Cin) with w (3, 3, Cin, Cout)."""
    H, W, _ = x.shape
    ho = (H - 3) // stride + 1
    wo = (W - 3) // stride + 1
    out = np.zeros((ho, wo, w.shape[-1]))
    for dy in range(3):
        for dx in range(3):
            patch = x[dy:dy + stride * (ho - 1) + 1:stride, dx:dx + stride * (wo - 1) + 1:stride]
            out += patch @ w[dy, dx]
    return out


def conv_backward(grad_out: np.ndarray, w: np.ndarray, in_shape, stride: int = 1) -> np.ndarray:
    ho, wo, _ = grad_out.shape
    gx = np.zeros(in_shape)
    for dy in range(3):
        for dx in range(3):
            gx[dy:dy + stride * (ho - 1) + 1:stride, dx:dx + stride * (wo - 1) + 1:stride] += \
                grad_out @ w[dy, dx].T
    return gx


class FeatureBank:
    def __init__(self, w1=None, w2=None):
        d1, d2 = default_bank()
        self.w1 = d1 if w1 is None else np.asarray(w1, dtype=np.float64)
        self.w2 = d2 if w2 is None else np.asarray(w2, dtype=np.float64)

    def forward(self, img: np.ndarray):
        """Return [layer1, layer2] activations and the pre-activations needed for backprop."""
        z1 = conv_forward(img, self.w1, 1)
        a1 = np.maximum(z1, 0.0)
        z2 = conv_forward(a1, self.w2, 2)
        a2 = np.maximum(z2, 0.0)
        return [a1, a2], (img.shape, z1, a1.shape, z2)

    def backward(self, grads, cache) -> np.ndarray:
        """Pixel gradient given dL/d(layer1) and dL/d(layer2)."""
        img_shape, z1, a1_shape, z2 = cache
        g2 = grads[1] * (z2 > 0)
        g1 = grads[0] + conv_backward(g2, self.w2, a1_shape, 2)
        g1 = g1 * (z1 > 0)
        return conv_backward(g1, self.w1, img_shape, 1)


def gram(feat: np.ndarray) -> np.ndarray:
    """F^T F over spatial positions, divided by the number of feature-map elements."""
    f = feat.reshape(-1, feat.shape[-1])
    return f.T @ f / f.size


def tv_loss(img: np.ndarray) -> tuple[float, np.ndarray]:
    dv = img[1:] - img[:-1]
    dh = img[:, 1:] - img[:, :-1]
    g = np.zeros_like(img)
    g[1:] += 2 * dv
    g[:-1] -= 2 * dv
    g[:, 1:] += 2 * dh
    g[:, :-1] -= 2 * dh
    return float(np.sum(dv ** 2) + np.sum(dh ** 2)), g


class StyleObjective:
    """Total loss lambda_c*L_content(l, l_s) + lambda_s*L_style(l_s, style) + lambda_tv*L_tv(l_s)."""

    def __init__(self, content_img: np.ndarray, style_img: np.ndarray,
                 cfg: StyleTransferConfig = StyleTransferConfig(), bank: FeatureBank | None = None):
        self.bank = bank or FeatureBank()
        self.cfg = cfg
        h, w = content_img.shape[:2]
        if style_img.shape[:2] != (h, w):
            style_img = resize(style_img, h, w, "nearest")
        self.content_feats, _ = self.bank.forward(content_img.astype(np.float64))
        style_feats, _ = self.bank.forward(style_img.astype(np.float64))
        self.style_grams = [gram(f) for f in style_feats]

    def _feature_grads(self, feats):
        """Losses and their gradients w.r.t. the feature maps, per term."""
        diff = feats[1] - self.content_feats[1]
        lc = float(np.mean(diff ** 2))
        gc = [np.zeros_like(feats[0]), 2.0 * diff / diff.size]
        ls = 0.0
        gs = []
        for f, g_style in zip(feats, self.style_grams):
            gd = gram(f) - g_style
            ls += float(np.sum(gd ** 2))
            flat = f.reshape(-1, f.shape[-1])
            gs.append((4.0 * flat @ gd / flat.size).reshape(f.shape))
        return lc, gc, ls, gs

    def terms(self, img: np.ndarray):
        """Returns ((L_content, L_style, L_tv), (g_content, g_style, g_tv)), gradients w.r.t. pixels."""
        feats, cache = self.bank.forward(img)
        lc, gc, ls, gs = self._feature_grads(feats)
        ltv, gtv = tv_loss(img)
        return ((lc, ls, ltv),
                (self.bank.backward(gc, cache), self.bank.backward(gs, cache), gtv))

    def value_and_grad(self, img: np.ndarray) -> tuple[float, np.ndarray]:
        c = self.cfg
        feats, cache = self.bank.forward(img)
        lc, gc, ls, gs = self._feature_grads(feats)
        ltv, gtv = tv_loss(img)
        # backprop is linear in the feature gradients, so one pass covers both terms
        gf = [c.content_weight * a + c.style_weight * b for a, b in zip(gc, gs)]
        return (c.content_weight * lc + c.style_weight * ls + c.tv_weight * ltv,
                self.bank.backward(gf, cache) + c.tv_weight * gtv)

    def value(self, img: np.ndarray) -> float:
        return self.value_and_grad(img)[0]


def style_losses(stylized: np.ndarray, logo: np.ndarray, style_img: np.ndarray,
                 bank: FeatureBank | None = None) -> tuple[float, float, float]:
    obj = StyleObjective(logo, style_img, bank=bank)
    return obj.terms(np.asarray(stylized, dtype=np.float64))[0]


@dataclass
class StylizeResult:
    image: np.ndarray
    losses: list


def stylize_logo(logo_rgb: np.ndarray, style_img: np.ndarray,
                 cfg: StyleTransferConfig = StyleTransferConfig(),
                 bank: FeatureBank | None = None) -> StylizeResult:
    """Projected gradient descent from the logo itself, with backtracking.

    A step is taken only if it does not increase the loss, so the recorded
    loss sequence is non-increasing.
    """
    obj = StyleObjective(logo_rgb, style_img, cfg, bank)
    x = np.clip(np.asarray(logo_rgb, dtype=np.float64), 0.0, 1.0)
    loss, g = obj.value_and_grad(x)
    if not np.isfinite(loss):
        raise StyleTransferError(f"non-finite initial loss {loss}")
    losses = [loss]
    step = cfg.init_step
    for _ in range(cfg.iterations):
        accepted = False
        for _ in range(cfg.max_backtracks):
            cand = np.clip(x - step * g, 0.0, 1.0)
            new_loss, new_g = obj.value_and_grad(cand)
            if not np.isfinite(new_loss):
                raise StyleTransferError(f"non-finite loss at step {step}")
            if new_loss <= loss:
                accepted = True
                break
            step *= cfg.shrink
        if not accepted:
            break
        x, loss, g = cand, new_loss, new_g
        losses.append(loss)
        # let the trial step recover after a run of shrinks
        step = min(cfg.init_step, step / cfg.shrink)
    return StylizeResult(x, losses)
