import colorsys
import pathlib

import numpy as np
import pytest

from dtspr.corrupt import (
    CorruptionSpec,
    brightness,
    combined,
    contrast,
    corrupt_dataset,
    hsv_to_rgb,
    hue_shift,
    rgb_to_hsv,
    to_u8,
)
from dtspr.frames import load_dataset, sequences_equal
from dtspr.synth import GenConfig, generate_dataset

DATA = pathlib.Path(__file__).parent / "data"


# ---------------------------------------------------------------------------
# HSV conversion against the stdlib oracle


def test_hsv_matches_colorsys():
    rng = np.random.default_rng(0)
    pix = rng.integers(0, 256, (500, 3)).astype(np.float64) / 255.0
    ours = rgb_to_hsv(pix)
    for k in range(len(pix)):
        ref = colorsys.rgb_to_hsv(*pix[k])
        assert np.allclose(ours[k], ref, atol=1e-12)
    assert np.allclose(hsv_to_rgb(ours), pix, atol=1e-12)


def test_to_u8_rounds_half_up():
    assert to_u8(np.array([0.1])) == 26  # 25.5 rounds up
    assert to_u8(np.array([0.0])) == 0
    assert to_u8(np.array([1.0])) == 255
    assert to_u8(np.array([2.0])) == 255  # clamped


# ---------------------------------------------------------------------------
# brightness


def test_brightness_black_severity1():
    img = np.zeros((2, 2, 3), np.uint8)
    out = brightness(img, 1)
    assert (out == 26).all()  # value channel 0 -> 0.1 -> (26, 26, 26)


def test_brightness_white_saturates():
    img = np.full((2, 2, 3), 255, np.uint8)
    for s in range(1, 6):
        assert np.array_equal(brightness(img, s), img)


def test_brightness_rejects_severity_out_of_range():
    img = np.zeros((1, 1, 3), np.uint8)
    for s in (0, 6):
        with pytest.raises(ValueError):
            brightness(img, s)


# ---------------------------------------------------------------------------
# contrast


def test_contrast_constant_image_fixed_point():
    img = np.full((3, 3, 3), 123, np.uint8)
    for s in range(1, 6):
        assert np.array_equal(contrast(img, s), img)


def test_contrast_two_pixel_formula():
    # pixels {0, 1} on the unit scale, severity 5 -> c = 0.05, mean 0.5
    img = np.zeros((1, 2, 3), np.uint8)
    img[0, 1] = 255
    out = contrast(img, 5)
    lo, hi = 0.475, 0.525
    assert (out[0, 0] == to_u8(np.array([lo]))[0]).all()
    assert (out[0, 1] == to_u8(np.array([hi]))[0]).all()
    assert out[0, 0, 0] == 121 and out[0, 1, 0] == 134


def test_contrast_variance_monotone_in_severity():
    rng = np.random.default_rng(1)
    for _ in range(5):
        img = rng.integers(0, 256, (16, 16, 3)).astype(np.uint8)
        variances = [np.var(contrast(img, s).astype(np.float64)) for s in range(1, 6)]
        assert all(a >= b - 1e-9 for a, b in zip(variances, variances[1:]))


# ---------------------------------------------------------------------------
# hue


def test_hue_grayscale_unchanged():
    img = np.full((4, 4, 3), 77, np.uint8)
    for s in range(1, 6):
        assert np.array_equal(hue_shift(img, s), img)


def test_hue_pure_red_90_degrees():
    img = np.zeros((1, 1, 3), np.uint8)
    img[0, 0] = (255, 0, 0)
    out = hue_shift(img, 5)  # severity 5 = 90 degrees
    assert tuple(out[0, 0]) == (128, 255, 0)


def test_hue_20_successive_18deg_shifts_return_within_1():
    rng = np.random.default_rng(2)
    img = rng.integers(0, 256, (32, 32, 3)).astype(np.uint8)
    cur = img.copy()
    for _ in range(20):
        cur = hue_shift(cur, 1)  # severity 1 = 18 degrees
    diff = np.abs(cur.astype(np.int64) - img.astype(np.int64))
    assert diff.max() <= 1


def test_hue_composition_on_saturated_palette():
    hs = np.linspace(0, 1, 64, endpoint=False).reshape(8, 8)
    img = to_u8(hsv_to_rgb(np.stack([hs, np.ones_like(hs), np.ones_like(hs)], -1)))
    cur = img.copy()
    for _ in range(20):
        cur = hue_shift(cur, 1)
    assert np.abs(cur.astype(np.int64) - img.astype(np.int64)).max() <= 1


# ---------------------------------------------------------------------------
# combined + spec


def test_spec_identity():
    rng = np.random.default_rng(3)
    img = rng.integers(0, 256, (8, 8, 3)).astype(np.uint8)
    out = combined(img, CorruptionSpec(0, 0, 0))
    assert np.array_equal(out, img)
    assert out is not img


def test_spec_single_transform_matches_direct_call():
    rng = np.random.default_rng(4)
    img = rng.integers(0, 256, (8, 8, 3)).astype(np.uint8)
    assert np.array_equal(combined(img, CorruptionSpec(3, 0, 0)), hue_shift(img, 3))
    assert np.array_equal(combined(img, CorruptionSpec(0, 2, 0)), brightness(img, 2))
    assert np.array_equal(combined(img, CorruptionSpec(0, 0, 4)), contrast(img, 4))


def test_spec_validation():
    with pytest.raises(ValueError):
        CorruptionSpec(6, 0, 0)
    with pytest.raises(ValueError):
        CorruptionSpec(0, -1, 0)


def test_combined_golden_333():
    rng = np.random.default_rng(5)
    img = rng.integers(0, 256, (16, 16, 3)).astype(np.uint8)
    out = combined(img, CorruptionSpec(3, 3, 3))
    golden_path = DATA / "combined_333.npy"
    if not golden_path.exists():  # pragma: no cover - first run freezes the golden
        np.save(golden_path, out)
        pytest.skip("golden frozen; rerun to compare")
    assert np.array_equal(out, np.load(golden_path))


def test_outputs_always_valid_u8():
    rng = np.random.default_rng(6)
    for _ in range(10):
        img = rng.integers(0, 256, (8, 8, 3)).astype(np.uint8)
        spec = CorruptionSpec(*rng.integers(0, 6, 3))
        out = combined(img, spec)
        assert out.dtype == np.uint8 and out.shape == img.shape


# ---------------------------------------------------------------------------
# dataset-level corruption


def test_corrupt_dataset_preserves_dt_payloads(tmp_path):
    cfg = GenConfig(videos=2, frames_min=14, frames_max=21, height=24, width=24, seed=9)
    generate_dataset(cfg, tmp_path / "clean")
    corrupt_dataset(tmp_path / "clean", tmp_path / "bad", CorruptionSpec(3, 3, 3))
    clean = load_dataset(tmp_path / "clean")
    bad = load_dataset(tmp_path / "bad")
    for a, b in zip(clean, bad):
        assert not np.array_equal(a.rgb, b.rgb)
        for fa, fb in zip(a.frames, b.frames):
            assert np.array_equal(fa.masks, fb.masks)
            assert np.array_equal(fa.disparity, fb.disparity)
            assert np.array_equal(fa.mask_tokens, fb.mask_tokens)
            assert np.array_equal(fa.depth_token, fb.depth_token)
            assert fa.phase == fb.phase


def test_corrupt_dataset_identity_is_byte_copy(tmp_path):
    cfg = GenConfig(videos=1, frames_min=14, frames_max=21, height=24, width=24, seed=10)
    generate_dataset(cfg, tmp_path / "clean")
    corrupt_dataset(tmp_path / "clean", tmp_path / "copy", CorruptionSpec(0, 0, 0))
    for f in sorted((tmp_path / "clean").iterdir()):
        assert f.read_bytes() == (tmp_path / "copy" / f.name).read_bytes()
