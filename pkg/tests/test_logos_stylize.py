import numpy as np
import pytest

from logoattack.logos import (LogoAsset, admit_logo, glyph, load_logo_dir, load_png, render_text,
                              save_png, synthesize_logo_set)
from logoattack.stylize import (FeatureBank, StyleObjective, StyleTransferConfig, conv_backward,
                                conv_forward, gram, style_losses, stylize_logo, tv_loss)


def _asset(px):
    return LogoAsset("t", np.asarray(px, dtype=np.float64))


def test_admission_rules():
    gray = np.concatenate([np.full((8, 8, 3), 0.5), np.ones((8, 8, 1))], axis=-1)
    assert admit_logo(_asset(gray))
    semi = gray.copy()
    semi[3, 3, 3] = 0.5
    assert not admit_logo(_asset(semi))
    white = gray.copy()
    white.reshape(-1, 4)[:38, :3] = 0.95  # 38/64 > 50% near-white
    assert not admit_logo(_asset(white))
    white.reshape(-1, 4)[:32, :3] = 0.95
    white.reshape(-1, 4)[32:38, :3] = 0.5  # exactly 50%
    assert admit_logo(_asset(white))


def test_glyphs_and_text():
    assert glyph("A").shape == (7, 5)
    cov = render_text("AB", 32)
    assert cov.shape == (32, 32) and cov.any() and not cov.all()


def test_synthesized_set_is_stable():
    a = synthesize_logo_set(4, 5)
    b = synthesize_logo_set(4, 5)
    assert [x.id for x in a] == [x.id for x in b]
    assert all(np.array_equal(x.pixels, y.pixels) for x, y in zip(a, b))
    assert all(admit_logo(x) and x.pixels.shape == (32, 32, 4) for x in a)
    one = synthesize_logo_set(4, 1)
    assert one[0].id == a[0].id


def test_png_roundtrip(tmp_path):
    logo = synthesize_logo_set(1, 1)[0]
    save_png(tmp_path / "l.png", logo.pixels)
    back = load_png(tmp_path / "l.png")
    assert np.abs(back.pixels - logo.pixels).max() <= 0.5 / 255 + 1e-9
    # a transparent one is filtered out on import
    px = logo.pixels.copy()
    px[0, 0, 3] = 0
    save_png(tmp_path / "t.png", px)
    assert [a.id for a in load_logo_dir(tmp_path)] == ["l"]


def test_conv_adjoint(rng):
    x = rng.normal(size=(9, 9, 3))
    w = rng.normal(size=(3, 3, 3, 4))
    for stride in (1, 2):
        y = conv_forward(x, w, stride)
        g = rng.normal(size=y.shape)
        # <conv(x), g> == <x, conv^T(g)>
        assert np.sum(y * g) == pytest.approx(np.sum(x * conv_backward(g, w, x.shape, stride)))


def test_feature_shapes():
    feats, _ = FeatureBank().forward(np.zeros((32, 32, 3)))
    assert feats[0].shape == (30, 30, 8) and feats[1].shape == (14, 14, 8)


def test_loss_identities(rng):
    logo = rng.random((32, 32, 3))
    lc, _, _ = style_losses(logo, logo, rng.random((16, 16, 3)))
    assert lc == 0.0
    assert tv_loss(np.full((8, 8, 3), 0.3))[0] == 0.0
    f = rng.random((5, 5, 2))
    g = gram(f)
    assert np.allclose(g, g.T) and g.shape == (2, 2)


def _fd_check(obj, img, coords, h=1e-5):
    _, g = obj.value_and_grad(img)
    errs = []
    for idx in coords:
        p, m = img.copy(), img.copy()
        p[idx] += h
        m[idx] -= h
        fd = (obj.value(p) - obj.value(m)) / (2 * h)
        errs.append(abs(fd - g[idx]) / max(abs(fd), abs(g[idx]), 1e-12))
    return max(errs)


def test_total_loss_gradient(rng):
    logo = synthesize_logo_set(2, 1)[0].rgb
    obj = StyleObjective(logo, rng.random((16, 16, 3)))
    img = np.clip(logo + 0.1 * rng.normal(size=logo.shape), 0, 1)
    _, g = obj.value_and_grad(img)
    big = np.argwhere(np.abs(g) > 1e-3 * np.abs(g).max())
    coords = [tuple(c) for c in big[rng.choice(len(big), 25, replace=False)]]
    assert _fd_check(obj, img, coords) < 1e-4


def test_term_gradients_sum_to_total(rng):
    logo = rng.random((32, 32, 3))
    cfg = StyleTransferConfig()
    obj = StyleObjective(logo, rng.random((16, 16, 3)), cfg)
    img = rng.random((32, 32, 3))
    (lc, ls, ltv), (gc, gs, gtv) = obj.terms(img)
    total, g = obj.value_and_grad(img)
    assert total == pytest.approx(lc + 10 * ls + 1e-3 * ltv)
    assert np.allclose(g, gc + 10 * gs + 1e-3 * gtv)


def test_stylize_contract(rng):
    logo = synthesize_logo_set(3, 1)[0].rgb
    res = stylize_logo(logo, rng.random((16, 16, 3)), StyleTransferConfig(iterations=30))
    assert res.losses[-1] <= res.losses[0]
    assert np.all(np.diff(res.losses) <= 0)
    assert res.image.min() >= 0 and res.image.max() <= 1


def test_content_only_fixed_point(rng):
    logo = synthesize_logo_set(3, 1)[0].rgb
    cfg = StyleTransferConfig(style_weight=0, tv_weight=0, iterations=10)
    res = stylize_logo(logo, rng.random((16, 16, 3)), cfg)
    assert res.losses[0] == 0.0
    assert np.allclose(res.image, logo)


def test_bad_config():
    with pytest.raises(ValueError):
        StyleTransferConfig(style_weight=-1)
