"""Cumulative probability of blur detection (no-reference sharpness).

Canny edges decide which blocks count as edge blocks and supply the
pixels whose widths are measured.  Each width is the distance between the
intensity extrema on either side of the edge along its row.  A block's just-noticeable-blur
width depends on its contrast; the blur probability of an edge of width
``w`` is ``1 - exp(-(w / w_jnb) ** beta)``.  The score is the fraction of
edges whose blur probability does not exceed ``p_jnb``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from skimage.feature import canny


@dataclass(frozen=True)
class CPBDConfig:
    beta: float = 3.6
    p_jnb: float = 0.63
    block: int = 64
    edge_block_fraction: float = 0.002
    jnb_low_contrast: float = 5.0
    jnb_high_contrast: float = 3.0
    contrast_split: int = 50
    max_margin: int = 100
    # Canny runs on the 0..255 float image, so these are intensity units
    canny_sigma: float = 1.0
    canny_low: float = 0.1
    canny_high: float = 0.2
    histogram_bins: int = 101


@dataclass(frozen=True)
class CPBDResult:
    value: float
    no_edge: bool
    n_edges: int


def _runs(steps, reverse):
    """Monotone run length at each index of a row-wise step-sign array.

    ``steps`` holds +1 (continuing), 0 (flat) or -1 (reversing).  The run
    ending (or, with ``reverse``, starting) at an index counts continuing
    steps plus any flat steps bridged by a later continuing step; a
    reversing step ends it.  Bridging keeps 8-bit quantisation plateaus
    on gentle ramps from truncating the width.
    """
    rows, n = steps.shape
    out = np.zeros(steps.shape, np.int64)
    last = np.zeros(rows, np.int64)      # run value at the most recent +1
    flats = np.zeros(rows, np.int64)     # flat steps since that +1
    has_pos = np.zeros(rows, bool)
    cols = range(n - 1, -1, -1) if reverse else range(n)
    for c in cols:
        s = steps[:, c]
        up, flat = s > 0, s == 0
        val = np.where(up, 1 + np.where(has_pos, last + flats, 0), 0)
        val = np.where(flat & has_pos, last + flats + 1, val)
        out[:, c] = val
        last = np.where(up, val, last)
        flats = np.where(up, 0, np.where(flat, flats + 1, 0))
        has_pos = np.where(up, True, np.where(flat, has_pos, False))
    return out


def edge_widths(img: np.ndarray, edges: np.ndarray, max_margin: int = 100) -> np.ndarray:
    """Edge widths at ``edges`` pixels; 0 where no width is defined.

    Only edges whose gradient is (quantised) horizontal get a width: the
    search walks left and right along the row until the intensity stops
    changing monotonically, capped at ``max_margin`` + 1 pixels per side.
    Widths are measured at ``edges`` pixels.
    """
    h, w = img.shape
    gy, gx = np.gradient(img)
    angle = np.degrees(np.arctan2(gy, gx))
    angle[(gx == 0) & (gy == 0)] = 0.0
    q = 45.0 * np.round(angle / 45.0)
    rising = q == 0
    falling = np.abs(q) == 180

    d = np.diff(img, axis=1)  # d[:, x] = I[x+1] - I[x]
    cap = max_margin
    widths = np.zeros(img.shape)
    for sign, sel in ((1, rising), (-1, falling)):
        steps = np.sign(d * sign).astype(np.int8)
        run_left = _runs(steps, reverse=False)
        run_right = _runs(steps, reverse=True)
        rows, cols = np.nonzero(edges & sel)
        left_idx = cols - 2
        right_idx = cols + 1
        left = np.where(left_idx >= 0, run_left[rows, np.clip(left_idx, 0, w - 2)], 0)
        right = np.where(right_idx <= w - 2, run_right[rows, np.clip(right_idx, 0, w - 2)], 0)
        widths[rows, cols] = np.minimum(left, cap) + 1 + np.minimum(right, cap) + 1
    return widths


def cpbd(frame: np.ndarray, config: CPBDConfig = CPBDConfig()) -> CPBDResult:
    """Sharpness of a luma frame in [0, 1]; higher is sharper.

    A frame with no edge block scores 1.0 and carries ``no_edge=True``.
    """
    img = np.asarray(frame, dtype=np.float64)
    h, w = img.shape
    canny_edges = canny(
        img, sigma=config.canny_sigma,
        low_threshold=config.canny_low, high_threshold=config.canny_high,
    )
    widths = edge_widths(img, canny_edges, config.max_margin)

    bh, bw = min(config.block, h), min(config.block, w)
    hist = np.zeros(config.histogram_bins)
    total = 0
    for r0 in range(0, h - bh + 1, bh):
        for c0 in range(0, w - bw + 1, bw):
            rows, cols = slice(r0, r0 + bh), slice(c0, c0 + bw)
            if np.count_nonzero(canny_edges[rows, cols]) <= config.edge_block_fraction * bh * bw:
                continue
            block = img[rows, cols]
            bw_vals = widths[rows, cols]
            bw_vals = bw_vals[bw_vals > 0]
            if bw_vals.size == 0:
                continue
            contrast = int(block.max() - block.min())
            jnb = config.jnb_low_contrast if contrast <= config.contrast_split else config.jnb_high_contrast
            p_blur = 1.0 - np.exp(-np.abs(bw_vals / jnb) ** config.beta)
            buckets = np.rint(p_blur * (config.histogram_bins - 1)).astype(int)
            hist += np.bincount(buckets, minlength=config.histogram_bins)
            total += bw_vals.size
    if total == 0:
        return CPBDResult(1.0, True, 0)
    cutoff = int(round(config.p_jnb * (config.histogram_bins - 1)))
    return CPBDResult(float(hist[:cutoff + 1].sum() / total), False, total)
