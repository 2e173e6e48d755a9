"""Synthetic distortion simulators and severity ladders.

Nine families: five spatial (resize, gblur, gnoise, darken, brighten), two
temporal (jitter, stutter) and two compression (h264, h265).  Every family
keeps geometry, frame count, fps and layout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from skimage.transform import resize as _sk_resize

from .artifacts import read_jsonl, write_jsonl
from .errors import DomainError
from .media import EncoderConfig, VideoClip, encode_roundtrip, quantize, rgb_to_ycbcr, ycbcr_to_rgb

GRIDS = {
    "resize": (2, 3, 4, 8, 16),
    "gblur": (0.1, 0.5, 1.0, 2.0, 5.0),
    "gnoise": (0.001, 0.002, 0.003, 0.005, 0.01),
    "darken": (0.05, 0.1, 0.2, 0.4, 0.8),
    "brighten": (0.1, 0.2, 0.4, 0.7, 1.1),
    "jitter": ((2, 0.02), (4, 0.04), (8, 0.08)),  # (max shift px, crop fraction)
    "stutter": (0.1, 0.25, 0.5),
    "h264": (24, 36, 48, 63),
    "h265": (36, 40, 44, 48),
}
PRESETS = {"h264": "fast", "h265": "veryslow"}
FAMILIES = tuple(GRIDS)
SPATIAL = ("resize", "gblur", "gnoise", "darken", "brighten")
TEMPORAL = ("jitter", "stutter")
COMPRESSION = ("h264", "h265")
STOCHASTIC = ("gnoise", "jitter", "stutter")


@dataclass(frozen=True)
class DistortionSpec:
    family: str
    level: int
    seed: int = 0

    def __post_init__(self):
        if self.family not in GRIDS:
            raise DomainError(f"unknown distortion family {self.family!r}; expected one of {FAMILIES}")
        n = len(GRIDS[self.family])
        if not isinstance(self.level, (int, np.integer)) or not 1 <= self.level <= n:
            raise DomainError(f"{self.family} level {self.level!r} outside 1..{n}")

    @property
    def parameter(self):
        return GRIDS[self.family][self.level - 1]

    @classmethod
    def parse(cls, text: str) -> "DistortionSpec":
        """Parse ``family:level[:seed]``, e.g. ``gblur:3:42``."""
        parts = text.strip().split(":")
        if len(parts) not in (2, 3):
            raise DomainError(f"bad distortion spec {text!r}; expected family:level[:seed]")
        try:
            level = int(parts[1])
            seed = int(parts[2]) if len(parts) == 3 else 0
        except ValueError as exc:
            raise DomainError(f"bad distortion spec {text!r}") from exc
        return cls(parts[0], level, seed)

    def __str__(self):
        return f"{self.family}:{self.level}:{self.seed}"


# -- per-frame helpers -----------------------------------------------------

def _per_channel(frame, fn):
    if frame.ndim == 2:
        return fn(frame)
    return np.stack([fn(frame[..., c]) for c in range(frame.shape[2])], axis=-1)


def _bilinear(plane, shape):
    return _sk_resize(plane, shape, order=1, mode="edge", anti_aliasing=False, preserve_range=True)


def resize_frame(frame: np.ndarray, factor: int) -> np.ndarray:
    h, w = frame.shape[:2]
    small = (max(1, round(h / factor)), max(1, round(w / factor)))
    img = frame.astype(np.float64)
    return quantize(_per_channel(img, lambda p: _bilinear(_bilinear(p, small), (h, w))))


def gaussian_blur_frame(frame: np.ndarray, sigma: float) -> np.ndarray:
    radius = max(1, math.ceil(3 * sigma))
    img = frame.astype(np.float64)
    return quantize(_per_channel(img, lambda p: ndimage.gaussian_filter(p, sigma, radius=radius, mode="reflect")))


def _adjust_luma(frame, fn):
    if frame.ndim == 2:
        return quantize(fn(frame.astype(np.float64)))
    ycc = rgb_to_ycbcr(frame)
    ycc[..., 0] = fn(ycc[..., 0])
    return quantize(ycbcr_to_rgb(ycc))


def darken_curve(luma, p):
    return luma * (1.0 - p)


def brighten_curve(luma, p):
    return 255.0 - (255.0 - luma) / (1.0 + p)


def _jitter_frame(frame, rng, max_shift, crop):
    h, w = frame.shape[:2]
    dx, dy = rng.uniform(-max_shift, max_shift, 2)
    img = frame.astype(np.float64)
    shift = (dy, dx) if frame.ndim == 2 else (dy, dx, 0)
    moved = ndimage.shift(img, shift, order=1, mode="nearest")
    my, mx = round(h * crop), round(w * crop)
    cropped = moved[my:h - my, mx:w - mx] if my or mx else moved
    return quantize(_per_channel(cropped, lambda p: _bilinear(p, (h, w))))


# -- clip-level ------------------------------------------------------------

def _gnoise(clip, sigma, seed):
    rng = np.random.default_rng(seed)
    unit = clip.frames.astype(np.float64) / 255.0
    noisy = np.clip(unit + rng.normal(0.0, sigma, unit.shape), 0.0, 1.0)
    return quantize(noisy * 255.0)


def _stutter(clip, p_drop, seed):
    rng = np.random.default_rng(seed)
    draws = rng.random(clip.n_frames)
    out = np.array(clip.frames)
    for t in range(1, clip.n_frames):
        if draws[t] < p_drop:
            out[t] = out[t - 1]
    return out


def apply(clip: VideoClip, spec: DistortionSpec, encoder: EncoderConfig | None = None,
          parameter=None) -> VideoClip:
    """Degrade ``clip`` per ``spec``.

    ``parameter`` overrides the grid value of the level (used by tests to
    probe limits such as a stutter drop rate of 1).
    """
    fam = spec.family
    p = spec.parameter if parameter is None else parameter
    if fam == "resize":
        out = [resize_frame(f, p) for f in clip.frames]
    elif fam == "gblur":
        out = [gaussian_blur_frame(f, p) for f in clip.frames]
    elif fam == "gnoise":
        out = _gnoise(clip, p, spec.seed)
    elif fam == "darken":
        out = [_adjust_luma(f, lambda y: darken_curve(y, p)) for f in clip.frames]
    elif fam == "brighten":
        out = [_adjust_luma(f, lambda y: brighten_curve(y, p)) for f in clip.frames]
    elif fam == "jitter":
        rng = np.random.default_rng(spec.seed)
        max_shift, crop = p
        out = [_jitter_frame(f, rng, max_shift, crop) for f in clip.frames]
    elif fam == "stutter":
        out = _stutter(clip, p, spec.seed)
    else:
        return encode_roundtrip(clip, fam, int(p), PRESETS[fam], config=encoder)
    return clip.replace_frames(np.asarray(out))


def severity_ladder(clip: VideoClip, family: str, seed: int = 0,
                    encoder: EncoderConfig | None = None) -> list[VideoClip]:
    """All levels of one family, mildest first."""
    if family not in GRIDS:
        raise DomainError(f"unknown distortion family {family!r}")
    return [apply(clip, DistortionSpec(family, lvl, seed), encoder) for lvl in range(1, len(GRIDS[family]) + 1)]


def manifest_record(source_id: str, spec: DistortionSpec, output_path) -> dict:
    return {
        "source_id": source_id,
        "family": spec.family,
        "level": spec.level,
        "seed": spec.seed,
        "output_path": str(output_path),
    }


def read_manifest(path) -> list[dict]:
    return read_jsonl(path)


def write_manifest(records, path, header=None) -> None:
    write_jsonl(path, records, header)
