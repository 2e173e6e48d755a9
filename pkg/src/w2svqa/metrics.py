"""The nine low-level perceptual metrics and their per-clip aggregation."""

from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass, field

import numpy as np
from scipy import ndimage

from .artifacts import read_jsonl, write_jsonl
from .cpbd import CPBDConfig, cpbd
from .errors import DomainError
from .media import LUMA, VideoClip, frame_layout, to_luma

METRIC_NAMES = (
    "blockiness", "blur", "contrast", "noise", "flicker",
    "colourfulness", "luminance", "si", "ti",
)


@dataclass(frozen=True)
class MetricVector:
    blockiness: float
    blur_cpbd: float
    contrast: float
    noise: float
    flicker: float
    colourfulness: float
    luminance: float
    si: float
    ti: float

    def __post_init__(self):
        vals = astuple(self)
        if not all(math.isfinite(v) for v in vals):
            raise DomainError(f"non-finite metric in {self}")
        if min(vals) < 0 or self.blur_cpbd > 1 or self.flicker > 1:
            raise DomainError(f"metric out of range in {self}")

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)

    @classmethod
    def from_array(cls, values) -> "MetricVector":
        return cls(*(float(v) for v in values))

    def as_dict(self) -> dict:
        return dict(zip(METRIC_NAMES, astuple(self)))


@dataclass(frozen=True)
class MetricConfig:
    block: int = 8
    blockiness_cap: float = 100.0
    flicker_threshold: float = 10.0
    all_frames: bool = False
    cpbd: CPBDConfig = field(default_factory=CPBDConfig)


def _luma_f64(frame):
    return to_luma(frame).astype(np.float64)


def blockiness(frame: np.ndarray, block: int = 8, cap: float = 100.0) -> float:
    """Internal over external horizontal neighbour difference.

    A pair ``(x, x+1)`` is external when ``x + 1`` is a multiple of
    ``block``.  ``0/0`` gives 1.0 and ``x/0`` gives ``cap``.
    """
    img = _luma_f64(frame)
    h, w = img.shape
    if w < 2 * block or h < 2 * block:
        raise DomainError(f"frame {w}x{h} too small for {block}-pixel blocks")
    diffs = np.abs(np.diff(img, axis=1))
    external = (np.arange(1, w) % block) == 0
    ext = diffs[:, external].sum()
    internal = diffs[:, ~external].sum()
    if ext == 0:
        return 1.0 if internal == 0 else cap
    return float(internal / ext)


def cpbd_blur(frame: np.ndarray, config: CPBDConfig = CPBDConfig()):
    """Return ``(score, no_edge)``; see :mod:`w2svqa.cpbd`."""
    res = cpbd(to_luma(frame), config)
    return res.value, res.no_edge


def contrast(frame: np.ndarray) -> float:
    return float(_luma_f64(frame).std())


# Second-difference mask; cancels locally linear content.
_NOISE_MASK = np.array([[1, -2, 1], [-2, 4, -2], [1, -2, 1]], dtype=np.float64)
_MAD_TO_SIGMA = 1.4826


def noise_estimate(frame: np.ndarray) -> float:
    """Gaussian noise sigma from the MAD of a Laplacian-filtered frame."""
    img = _luma_f64(frame)
    if min(img.shape) < 3:
        raise DomainError("noise estimate needs at least 3x3 pixels")
    resp = ndimage.correlate(img, _NOISE_MASK, mode="nearest")[1:-1, 1:-1]
    mad = np.median(np.abs(resp - np.median(resp)))
    # response std of white noise is sigma * ||mask||_2 = 6 sigma
    return float(_MAD_TO_SIGMA * mad / np.sqrt((_NOISE_MASK**2).sum()))


def flicker_frames(frames, threshold: float = 10.0) -> float:
    """Mean fraction of pixels whose luma jumps by more than ``threshold``."""
    lum = [_luma_f64(f) for f in frames]
    if len(lum) < 2:
        raise DomainError("flicker needs at least two frames")
    fractions = [np.mean(np.abs(b - a) > threshold) for a, b in zip(lum, lum[1:])]
    return float(np.mean(fractions))


def flicker(clip: VideoClip, t_f: float = 10.0) -> float:
    return flicker_frames(clip.frames, t_f)


def _as_rgb(frame):
    if frame_layout(frame) == LUMA:
        return np.repeat(frame[..., None].astype(np.float64), 3, axis=-1)
    return frame.astype(np.float64)


def colourfulness(frame: np.ndarray) -> float:
    rgb = _as_rgb(frame)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    rg = r - g
    yb = 0.5 * (r + g) - b
    return float(np.hypot(rg.std(), yb.std()) + 0.3 * np.hypot(rg.mean(), yb.mean()))


def luminance(frame: np.ndarray) -> float:
    """Mean of R + G + B (gray frames count their value three times)."""
    return float(_as_rgb(frame).sum(axis=-1).mean())


def sobel_magnitude(luma: np.ndarray) -> np.ndarray:
    """Sobel gradient magnitude over interior pixels only."""
    img = luma.astype(np.float64)
    gx = ndimage.sobel(img, axis=1)[1:-1, 1:-1]
    gy = ndimage.sobel(img, axis=0)[1:-1, 1:-1]
    return np.hypot(gx, gy)


def spatial_information_frames(frames) -> float:
    return float(max(sobel_magnitude(_luma_f64(f)).std() for f in frames))


def temporal_information_frames(frames) -> float:
    lum = [_luma_f64(f) for f in frames]
    if len(lum) < 2:
        raise DomainError("temporal information needs at least two frames")
    return float(max((b - a).std() for a, b in zip(lum, lum[1:])))


def sample_indices(n_frames: int, fps) -> list[int]:
    """Frame indices ``floor(k * fps)`` for k = 0, 1, ... below ``n_frames``."""
    out = []
    k = 0
    while True:
        idx = math.floor(k * fps)
        if idx >= n_frames:
            break
        if not out or idx != out[-1]:
            out.append(idx)
        k += 1
    return out


def spatial_information(clip: VideoClip, all_frames: bool = False) -> float:
    return spatial_information_frames(_sampled(clip, all_frames))


def temporal_information(clip: VideoClip, all_frames: bool = False) -> float:
    return temporal_information_frames(_temporal_frames(clip, all_frames))


def _sampled(clip, all_frames):
    if all_frames:
        return list(clip.frames)
    return [clip.frames[i] for i in sample_indices(clip.n_frames, clip.fps)]


def _temporal_frames(clip, all_frames):
    frames = _sampled(clip, all_frames)
    # clips shorter than two sampling periods fall back to every frame
    return frames if len(frames) >= 2 else list(clip.frames)


def metric_vector(clip: VideoClip, config: MetricConfig = MetricConfig()) -> MetricVector:
    frames = _sampled(clip, config.all_frames)
    temporal = _temporal_frames(clip, config.all_frames)
    return MetricVector(
        blockiness=float(np.mean([blockiness(f, config.block, config.blockiness_cap) for f in frames])),
        blur_cpbd=float(np.mean([cpbd_blur(f, config.cpbd)[0] for f in frames])),
        contrast=float(np.mean([contrast(f) for f in frames])),
        noise=float(np.mean([noise_estimate(f) for f in frames])),
        flicker=flicker_frames(temporal, config.flicker_threshold),
        colourfulness=float(np.mean([colourfulness(f) for f in frames])),
        luminance=float(np.mean([luminance(f) for f in frames])),
        si=spatial_information_frames(frames),
        ti=temporal_information_frames(temporal),
    )


# -- serialisation ---------------------------------------------------------

def write_metrics_csv(rows: dict, path, header_comment: str | None = None) -> None:
    """``rows`` maps clip id to MetricVector; ids are written in sorted order."""
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("clip_id",) + METRIC_NAMES)
        for clip_id in sorted(rows):
            writer.writerow([clip_id] + [repr(v) for v in rows[clip_id].as_array().tolist()])


def read_metrics_csv(path) -> dict:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    missing = set(METRIC_NAMES) - set(reader.fieldnames or ())
    if missing or "clip_id" not in (reader.fieldnames or ()):
        raise DomainError(f"{path}: metric table lacks columns {sorted(missing | {'clip_id'})}")
    return {row["clip_id"]: MetricVector(*(float(row[m]) for m in METRIC_NAMES)) for row in reader}


def write_metrics_jsonl(rows: dict, path, header=None) -> None:
    write_jsonl(path, ({"clip_id": cid, **rows[cid].as_dict()} for cid in sorted(rows)), header)


def read_metrics_jsonl(path) -> dict:
    return {r["clip_id"]: MetricVector(*(float(r[m]) for m in METRIC_NAMES)) for r in read_jsonl(path)}
