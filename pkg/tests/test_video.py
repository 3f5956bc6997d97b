import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from logoattack.video import (BadMagic, DimensionOverflow, RegionMask, ShapeMismatch,
                              TruncatedPayload, check_video, decode_video, encode_video,
                              read_video, resize, scaled_size, superimpose, write_video)


def test_scaled_size_floors():
    assert scaled_size(0.75, 32) == 24
    assert scaled_size(0.8125, 32) == 26
    assert scaled_size(1.0, 32) == 32
    assert scaled_size(0.0, 32) == 0


def test_masked_pixel_count():
    m = RegionMask(0, 0, 0.75, 32, 32, 64, 64)
    mat = m.materialize((2, 64, 64, 3))
    assert mat[0, :, :, 0].sum() == 576
    assert m.area == 576


def test_mask_bounds_checked():
    with pytest.raises(ValueError):
        RegionMask(40, 0, 1.0, 32, 32, 64, 64)
    with pytest.raises(ValueError):
        RegionMask(0, -1, 1.0, 32, 32, 64, 64)
    RegionMask(32, 32, 1.0, 32, 32, 64, 64)


def test_zero_area_mask_is_identity(rng):
    base = rng.random((3, 8, 8, 3)).astype(np.float32)
    m = RegionMask(2, 2, 0.0, 4, 4, 8, 8)
    out = superimpose(base, np.zeros((0, 0, 3)), m)
    assert np.array_equal(out, base)
    assert out is not base


def test_white_logo_on_black():
    base = np.zeros((4, 16, 16, 3), dtype=np.float32)
    logo = np.ones((8, 8, 3), dtype=np.float32)
    out = superimpose(base, logo, RegionMask(0, 0, 1.0, 8, 8, 16, 16))
    assert np.all(out[:, :8, :8] == 1)
    assert out.sum() == 4 * 64 * 3
    assert all(np.array_equal(out[0], out[t]) for t in range(4))


def test_superimpose_shape_errors():
    base = np.zeros((1, 16, 16, 3), dtype=np.float32)
    with pytest.raises(ShapeMismatch) as e:
        superimpose(base, np.ones((7, 8, 3)), RegionMask(0, 0, 1.0, 8, 8, 16, 16))
    assert e.value.axis == "h"
    with pytest.raises(ShapeMismatch):
        superimpose(base, np.ones((8, 8, 3)), RegionMask(0, 0, 1.0, 8, 8, 16, 17))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 24), st.integers(0, 24), st.sampled_from([0.5, 0.75, 1.0]))
def test_superimpose_only_touches_mask(u, v, k):
    base = np.full((2, 40, 40, 3), 0.25, dtype=np.float32)
    m = RegionMask(min(u, 40 - scaled_size(k, 16)), min(v, 40 - scaled_size(k, 16)), k, 16, 16, 40, 40)
    sh, sw = m.scaled_dims
    out = superimpose(base, np.full((sh, sw, 3), 0.75, dtype=np.float32), m)
    mat = m.materialize(base.shape).astype(bool)
    assert np.all(out[mat] == 0.75)
    assert np.all(out[~mat] == 0.25)


def test_resize_cases():
    x = np.random.default_rng(0).random((2, 2, 3))
    for mode in ("nearest", "bilinear"):
        assert np.allclose(resize(x, 2, 2, mode), x)
        assert np.allclose(resize(np.full((1, 1, 1), 0.5), 4, 4, mode), 0.5)
    cb = np.array([[0.0, 1.0], [1.0, 0.0]])[..., None]
    up = resize(cb, 4, 4, "nearest")[..., 0]
    assert np.array_equal(up, np.kron(cb[..., 0], np.ones((2, 2))))


def test_video_roundtrip(tmp_path, rng):
    x = rng.random((3, 5, 7, 3)).astype(np.float32)
    assert np.array_equal(decode_video(encode_video(x)), x)
    write_video(tmp_path / "a.lsfv", x)
    assert np.array_equal(read_video(tmp_path / "a.lsfv"), x)


def test_payload_length():
    buf = encode_video(np.zeros((16, 64, 64, 3), dtype=np.float32))
    assert len(buf) == 5 + 16 + 16 * 64 * 64 * 3 * 4


def test_decode_errors():
    good = encode_video(np.zeros((1, 2, 2, 3), dtype=np.float32))
    with pytest.raises(BadMagic):
        decode_video(b"XXXX" + good[4:])
    with pytest.raises(TruncatedPayload):
        decode_video(good[:21])
    with pytest.raises(TruncatedPayload):
        decode_video(good[:-1])
    import struct
    with pytest.raises(DimensionOverflow):
        decode_video(good[:5] + struct.pack("<4I", 1 << 16, 1 << 16, 1 << 16, 3))


def test_check_video():
    with pytest.raises(ValueError):
        check_video(np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        check_video(np.full((1, 2, 2, 3), 1.5))
