import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from skimage.metrics import peak_signal_noise_ratio

from w2svqa.distortions import (
    FAMILIES,
    GRIDS,
    DistortionSpec,
    apply,
    brighten_curve,
    darken_curve,
    read_manifest,
    manifest_record,
    severity_ladder,
    write_manifest,
)
from w2svqa.errors import DomainError
from w2svqa.synthetic import textured_clip

ENCODED = ("h264", "h265")
LOCAL = tuple(f for f in FAMILIES if f not in ENCODED)


def _psnr(ref, clip):
    a, b = ref.to_luma().frames, clip.to_luma().frames
    with np.errstate(divide="ignore"):  # identical frames give inf
        return np.mean([peak_signal_noise_ratio(x, y, data_range=255) for x, y in zip(a, b)])


@pytest.fixture(scope="module")
def clip():
    return textured_clip(seed=21, n_frames=6, size=64)


def test_grid_lengths():
    assert [len(GRIDS[f]) for f in FAMILIES] == [5, 5, 5, 5, 5, 3, 3, 4, 4]
    assert GRIDS["h264"] == (24, 36, 48, 63)
    assert GRIDS["h265"] == (36, 40, 44, 48)
    assert GRIDS["resize"] == (2, 3, 4, 8, 16)


@pytest.mark.parametrize("family,level", [("gblur", 0), ("gblur", 6), ("jitter", 4), ("h264", 5), ("nope", 1)])
def test_level_out_of_grid(family, level):
    with pytest.raises(DomainError):
        DistortionSpec(family, level)


def test_spec_string_roundtrip():
    spec = DistortionSpec.parse("gblur:3:42")
    assert (spec.family, spec.level, spec.seed) == ("gblur", 3, 42)
    assert DistortionSpec.parse(str(spec)) == spec
    with pytest.raises(DomainError):
        DistortionSpec.parse("gblur")


@pytest.mark.parametrize("family", LOCAL)
def test_geometry_preserved(clip, family):
    for lvl in range(1, len(GRIDS[family]) + 1):
        out = apply(clip, DistortionSpec(family, lvl, seed=3))
        assert out.frames.shape == clip.frames.shape
        assert out.fps == clip.fps


@pytest.mark.parametrize("family", LOCAL)
def test_ladder_deterministic(clip, family):
    a = severity_ladder(clip, family, seed=5)
    b = severity_ladder(clip, family, seed=5)
    assert len(a) == len(GRIDS[family])
    assert all(x == y for x, y in zip(a, b))


def test_gnoise_sigma_limit_is_identity(clip):
    diffs = [np.abs(apply(clip, DistortionSpec("gnoise", 1, 0), parameter=s).frames.astype(float)
                    - clip.frames).mean() for s in (1e-2, 1e-3, 1e-4, 1e-6)]
    assert all(a >= b for a, b in zip(diffs, diffs[1:]))
    assert diffs[-1] == 0.0


def test_stutter_full_drop_freezes_first_frame(clip):
    out = apply(clip, DistortionSpec("stutter", 1, 0), parameter=1.0)
    assert all(np.array_equal(f, clip.frames[0]) for f in out.frames)


def test_stutter_repeats_previous_output_frame(clip):
    out = apply(clip, DistortionSpec("stutter", 3, 9))
    for t in range(1, clip.n_frames):
        assert np.array_equal(out.frames[t], clip.frames[t]) or np.array_equal(out.frames[t], out.frames[t - 1])


def test_resize_psnr_ordering(clip):
    assert _psnr(clip, apply(clip, DistortionSpec("resize", 5))) < _psnr(clip, apply(clip, DistortionSpec("resize", 1)))


@pytest.mark.parametrize("family", ["resize", "gblur", "gnoise"])
def test_psnr_strictly_decreasing(clip, family):
    ps = [_psnr(clip, c) for c in severity_ladder(clip, family, seed=1)]
    assert all(a > b for a, b in zip(ps, ps[1:]))


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 255), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_darken_monotone_in_strength(y, p, q):
    lo, hi = sorted((p, q))
    assert 0 <= darken_curve(y, hi) <= darken_curve(y, lo) <= y


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 255), st.floats(0.0, 2.0), st.floats(0.0, 2.0))
def test_brighten_monotone_in_strength(y, p, q):
    lo, hi = sorted((p, q))
    assert y - 1e-9 <= brighten_curve(y, lo) <= brighten_curve(y, hi) + 1e-9 <= 255 + 1e-9


def test_darken_brighten_mean_shift_grows(clip):
    base = clip.to_luma().frames.mean()
    for fam in ("darken", "brighten"):
        shifts = [abs(c.to_luma().frames.mean() - base) for c in severity_ladder(clip, fam)]
        assert all(a < b for a, b in zip(shifts, shifts[1:]))


def test_manifest_roundtrip(tmp_path):
    recs = [manifest_record("src0", DistortionSpec("gblur", k, 1), f"/x/{k}.y4m") for k in (1, 2)]
    path = tmp_path / "m.jsonl"
    write_manifest(recs, path, header={"config_digest": "abc", "seed": 1, "timestamp": "t"})
    assert read_manifest(path) == recs
    assert set(recs[0]) == {"source_id", "family", "level", "seed", "output_path"}


@pytest.mark.encoder
@pytest.mark.parametrize("family", ENCODED)
def test_compression_ladder(clip, family):
    ladder = severity_ladder(clip, family)
    assert all(c.frames.shape == clip.frames.shape for c in ladder)
    ps = [_psnr(clip, c) for c in ladder]
    assert all(a > b for a, b in zip(ps, ps[1:]))
