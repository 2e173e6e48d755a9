from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import ndimage

from w2svqa.media import VideoClip, quantize
from w2svqa.metrics import (
    METRIC_NAMES,
    MetricVector,
    blockiness,
    colourfulness,
    contrast,
    cpbd_blur,
    flicker,
    luminance,
    metric_vector,
    noise_estimate,
    read_metrics_csv,
    sample_indices,
    spatial_information,
    temporal_information,
    write_metrics_csv,
)
from w2svqa.synthetic import constant_clip, fixture_clips, moving_square_clip, textured_clip

KX = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)


def _brute_sobel_std(img):
    img = img.astype(np.float64)
    h, w = img.shape
    mags = []
    for y in range(1, h - 1):
        for x in range(1, w - 1):
            win = img[y - 1:y + 2, x - 1:x + 2]
            gx = (win * KX).sum()
            gy = (win * KX.T).sum()
            mags.append(np.hypot(gx, gy))
    return float(np.std(mags))


def _brute_blockiness(img, block=8):
    inner = outer = 0.0
    h, w = img.shape
    for y in range(h):
        for x in range(w - 1):
            d = abs(float(img[y, x]) - float(img[y, x + 1]))
            if (x + 1) % block == 0:
                outer += d
            else:
                inner += d
    return inner / outer


# -- blockiness -----------------------------------------------------------

def test_blockiness_constant_is_one():
    assert blockiness(np.full((32, 32), 90, np.uint8)) == 1.0


def test_blockiness_steps_only_at_boundaries_is_zero():
    cols = (np.arange(32) // 8) * 40
    img = np.tile(cols, (32, 1)).astype(np.uint8)
    assert blockiness(img) == 0.0


def test_blockiness_internal_only_hits_cap():
    img = np.zeros((16, 16), np.uint8)
    img[:, 3] = 50
    assert blockiness(img, cap=100.0) == 100.0


def test_blockiness_checkerboard_matches_enumeration():
    yy, xx = np.mgrid[0:16, 0:16]
    img = (((xx + yy) % 2) * 255).astype(np.uint8)
    assert blockiness(img) == pytest.approx(_brute_blockiness(img), abs=1e-6)


@settings(max_examples=30, deadline=None)
@given(arrays(np.uint8, (16, 24)))
def test_blockiness_matches_enumeration_property(img):
    if np.all(np.diff(img.astype(int), axis=1)[:, 7::8] == 0):
        return
    assert blockiness(img) == pytest.approx(_brute_blockiness(img), rel=1e-9)


# -- cpbd -----------------------------------------------------------------

def _step_image():
    img = np.full((64, 64), 40.0)
    img[:, 32:] = 200.0
    img[32:, :] = np.where(np.arange(64) < 16, 200.0, img[32:, :])
    return img


def test_cpbd_sharp_step_is_high():
    score, no_edge = cpbd_blur(quantize(_step_image()))
    assert not no_edge
    assert score > 0.8


def test_cpbd_blur_lowers_score():
    sharp = _step_image()
    blurred = quantize(ndimage.gaussian_filter(sharp, 5))
    assert cpbd_blur(blurred)[0] < cpbd_blur(quantize(sharp))[0]


def test_cpbd_constant_frame_flags_no_edge():
    assert cpbd_blur(np.full((64, 64), 128, np.uint8)) == (1.0, True)


@pytest.mark.parametrize("name", sorted(fixture_clips()))
def test_cpbd_blur_ordering_on_fixtures(name):
    frame = fixture_clips()[name].to_luma().frames[0].astype(np.float64)
    base = cpbd_blur(quantize(frame))[0]
    for sigma in (1, 2, 5):
        assert base >= cpbd_blur(quantize(ndimage.gaussian_filter(frame, sigma)))[0]


# -- contrast / noise -----------------------------------------------------

def test_contrast_cases():
    assert contrast(np.full((16, 16), 7, np.uint8)) == 0.0
    img = np.zeros((16, 16), np.uint8)
    img[:8] = 200
    assert contrast(img) == pytest.approx(100.0, abs=1e-6)


@settings(max_examples=50, deadline=None)
@given(arrays(np.uint8, (16, 16)))
def test_contrast_bound(img):
    assert 0.0 <= contrast(img) <= 127.5


def test_noise_constant_is_zero():
    assert noise_estimate(np.full((32, 32), 100, np.uint8)) == 0.0


def _smooth_fixture():
    yy, xx = np.mgrid[0:64, 0:64]
    return 100 + 0.8 * xx + 0.4 * yy


def test_noise_estimate_within_30_percent_of_sigma_10():
    base = _smooth_fixture()
    ests = [noise_estimate(quantize(base + np.random.default_rng(s).normal(0, 10, base.shape)))
            for s in range(20)]
    assert all(7.0 <= e <= 13.0 for e in ests)


def test_noise_estimate_monotone_in_sigma():
    base = _smooth_fixture()
    passes = 0
    for s in range(20):
        rng = np.random.default_rng(s)
        ests = [noise_estimate(quantize(base + rng.normal(0, sg, base.shape))) for sg in (2, 5, 10, 20)]
        passes += all(a <= b for a, b in zip(ests, ests[1:]))
    assert passes >= 19


# -- flicker ----------------------------------------------------------------

def _clip(frames, fps=25):
    return VideoClip(np.asarray(frames, np.uint8), fps)


def test_flicker_cases():
    assert flicker(constant_clip()) == 0.0
    alt = _clip([np.full((16, 16), 255 * (t % 2)) for t in range(4)])
    assert flicker(alt) == 1.0
    frames = []
    for t in range(4):
        f = np.full((16, 16), 100)
        f[:8, :8] += 50 * (t % 2)
        frames.append(f)
    assert flicker(_clip(frames)) == pytest.approx(0.25)


# -- colour -------------------------------------------------------------------

def test_colourfulness_cases():
    assert colourfulness(np.full((16, 16, 3), 77, np.uint8)) == 0.0
    red = np.zeros((16, 16, 3), np.uint8)
    red[..., 0] = 255
    assert colourfulness(red) == pytest.approx(0.3 * np.hypot(255, 127.5), abs=1e-6)
    assert colourfulness(red) == pytest.approx(85.5296, abs=1e-4)


@settings(max_examples=30, deadline=None)
@given(arrays(np.uint8, (16, 16, 3)), st.integers(0, 2**31 - 1))
def test_colourfulness_permutation_invariant(img, seed):
    flat = img.reshape(-1, 3)
    shuffled = flat[np.random.default_rng(seed).permutation(len(flat))].reshape(img.shape)
    assert colourfulness(shuffled) == pytest.approx(colourfulness(img), rel=1e-9, abs=1e-9)


def test_luminance_cases():
    assert luminance(np.zeros((16, 16, 3), np.uint8)) == 0.0
    assert luminance(np.full((16, 16, 3), 255, np.uint8)) == 765.0
    px = np.zeros((16, 16, 3), np.uint8)
    px[...] = (10, 20, 30)
    assert luminance(px) == 60.0


# -- SI / TI ---------------------------------------------------------------

def test_si_constant_is_zero():
    assert spatial_information(constant_clip()) == 0.0


def test_si_step_edge_matches_direct_sobel():
    img = np.zeros((32, 32), np.uint8)
    img[:, 13:] = 180
    clip = _clip([img, img])
    assert spatial_information(clip) == pytest.approx(_brute_sobel_std(img), abs=1e-6)


def test_si_decreases_with_blur():
    clip = textured_clip(seed=2)
    blurred = clip.replace_frames(quantize(ndimage.gaussian_filter(clip.frames.astype(float), (0, 5, 5, 0))))
    assert spatial_information(clip) >= spatial_information(blurred)


def test_ti_cases():
    assert temporal_information(constant_clip()) == 0.0
    alt = _clip([np.full((16, 16), 255 * (t % 2)) for t in range(4)])
    assert temporal_information(alt) == 0.0


def test_ti_moving_square_matches_enumeration():
    clip = moving_square_clip(n_frames=4, size=32, square=8, step=3)
    frames = clip.frames.astype(np.float64)
    expect = 0.0
    for t in range(1, len(frames)):
        d = [frames[t][y, x] - frames[t - 1][y, x] for y in range(32) for x in range(32)]
        expect = max(expect, float(np.std(d)))
    assert temporal_information(clip, all_frames=True) == pytest.approx(expect, abs=1e-6)


# -- aggregation -------------------------------------------------------------

def test_sampling_uses_two_frames_for_two_seconds():
    assert sample_indices(50, Fraction(25)) == [0, 25]


def test_constant_gray_vector():
    v = metric_vector(constant_clip(value=90, size=32))
    assert v.as_array() == pytest.approx([1.0, 1.0, 0, 0, 0, 0, 270.0, 0, 0], abs=1e-9)


@pytest.mark.parametrize("name", sorted(fixture_clips()))
def test_vectors_finite_on_fixtures(name):
    v = metric_vector(fixture_clips()[name])
    assert np.all(np.isfinite(v.as_array()))


def test_duplicate_last_frame_invariants():
    clip = textured_clip(seed=4, n_frames=5)
    longer = clip.replace_frames(np.concatenate([clip.frames, clip.frames[-1:]]))
    a = metric_vector(clip, _all())
    b = metric_vector(longer, _all())
    for name in ("blockiness", "contrast", "noise", "colourfulness", "luminance", "si"):
        assert a.as_dict()[name] == pytest.approx(b.as_dict()[name], rel=0.2)
    assert b.si == pytest.approx(a.si)
    assert b.ti <= a.ti + 1e-12
    assert b.flicker <= a.flicker + 1e-12


def _all():
    from w2svqa.metrics import MetricConfig

    return MetricConfig(all_frames=True)


def test_metrics_deterministic():
    clip = textured_clip(seed=9)
    assert metric_vector(clip) == metric_vector(clip)


def test_metric_csv_roundtrip(tmp_path):
    rows = {k: metric_vector(c) for k, c in list(fixture_clips().items())[:3]}
    path = tmp_path / "m.csv"
    write_metrics_csv(rows, path, header_comment="seed=0")
    header = path.read_text().splitlines()[1].split(",")
    assert header == ["clip_id", *METRIC_NAMES]
    assert read_metrics_csv(path) == rows


def test_metric_vector_range_checked():
    with pytest.raises(ValueError):
        MetricVector(1, 1.5, 0, 0, 0, 0, 0, 0, 0)
