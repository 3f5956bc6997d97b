import numpy as np
import pytest

from logoattack.dataset import generate_dataset
from logoattack.metrics import (AttackTrace, aggregate, aoa, mean_aoa, optical_flow, pair_error,
                                warp, warping_error)


def test_aggregate_cases():
    one = aggregate([AttackTrace("success", 3, 50, 0, 2)])
    assert (one["FR"], one["2FR"], one["AQ"], one["2AQ"]) == (1.0, 1.0, 53.0, 53.0)
    none = aggregate([AttackTrace("stage_failed", 5, 30, 100)])
    assert none["FR"] == 0 and none["AQ"] is None
    mixed = aggregate([AttackTrace("success", 10, 40, 50, 3), AttackTrace("budget_exhausted", 5)])
    assert mixed["FR"] == 0.5 and mixed["AQ"] == 100 and mixed["AQ3"] == 50
    with pytest.raises(ValueError):
        aggregate([])


def test_aggregate_permutation_invariant():
    rng = np.random.default_rng(0)
    ts = [AttackTrace(rng.choice(["success", "stage_failed"]), int(rng.integers(1, 9)),
                      int(rng.integers(1, 99)), int(rng.integers(0, 999)), int(rng.choice([2, 3])))
          for _ in range(12)]
    a = aggregate(ts)
    b = aggregate([ts[i] for i in rng.permutation(12)])
    assert a.keys() == b.keys()
    assert all(a[k] == pytest.approx(b[k]) for k in a if a[k] is not None)


def test_aoa():
    assert aoa(1.0, 32, 32, 64, 64) == 25.0
    assert aoa(0.0, 32, 32, 64, 64) == 0.0
    ts = [AttackTrace("success", action={"k": 1.0}), AttackTrace("success", action={"k": 0.75})]
    assert mean_aoa(ts, 32, 32, 64, 64) == pytest.approx((25.0 + 14.0625) / 2)


def _texture(shift=0):
    yy, xx = np.mgrid[0:64, 0:64].astype(float)
    xx = xx - shift
    return 0.5 + 0.2 * np.sin(xx / 3.1) * np.cos(yy / 4.3) + 0.1 * np.sin((xx + yy) / 5.7)


def test_identical_frames_zero_flow():
    f = _texture()
    ff = optical_flow(f, f)
    assert np.all(ff.flow == 0)
    assert ff.valid.mean() > 0.9


def test_flat_frames_invalid():
    ff = optical_flow(np.full((32, 32), 0.4), np.full((32, 32), 0.4))
    assert ff.valid.sum() == 0


def test_one_pixel_shift():
    a, b = _texture(), _texture(1)  # b(x) = a(x - 1), so a(x) = b(x + 1)
    ff = optical_flow(a, b)
    dx = ff.flow[..., 1][ff.valid > 0]
    assert np.median(dx) == pytest.approx(1.0, abs=0.2)
    assert np.abs(np.median(ff.flow[..., 0][ff.valid > 0])) < 0.2


def test_warp_identity():
    f = _texture()
    assert np.allclose(warp(f, np.zeros((64, 64, 2))), f)


def test_ti_static_and_noise():
    frame = generate_dataset(5, 1).videos[0][0]
    static = np.repeat(frame[None], 8, axis=0)
    assert abs(warping_error(static)) < 1e-6
    assert pair_error(frame, frame) == (0.0, False)
    rng = np.random.default_rng(0)
    tis = []
    for a in (0.01, 0.05, 0.1):
        v = np.clip(static + a * rng.standard_normal(static.shape), 0, 1)
        tis.append(warping_error(v))
    assert tis[0] < tis[1] < tis[2]
    with pytest.raises(ValueError):
        warping_error(static[:1])
