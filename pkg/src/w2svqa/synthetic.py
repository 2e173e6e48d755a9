"""Procedural test content.

These clips stand in for pristine source videos in tests, the acceptance
suite, and the ``run-all`` demo.  Every generator is deterministic given
its arguments.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np
from scipy import ndimage

from .media import VideoClip, quantize


def gray_ramp(n_frames=8, size=64, fps=25) -> VideoClip:
    """Horizontal 0..255 luma ramp, identical in every frame."""
    row = np.linspace(0, 255, size)
    frame = np.rint(np.tile(row, (size, 1))).astype(np.uint8)
    return VideoClip(np.repeat(frame[None], n_frames, axis=0), Fraction(fps))


def constant_clip(value=128, n_frames=4, size=32, fps=25, rgb=False) -> VideoClip:
    shape = (n_frames, size, size, 3) if rgb else (n_frames, size, size)
    return VideoClip(np.full(shape, value, np.uint8), Fraction(fps))


def _fractal_texture(rng, h, w, beta=1.6):
    """1/f^beta noise normalised to [0, 1]."""
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    radius = np.sqrt(fx**2 + fy**2)
    radius[0, 0] = 1.0
    spectrum = (rng.normal(size=(h, w)) + 1j * rng.normal(size=(h, w))) / radius**beta
    spectrum[0, 0] = 0
    tex = np.real(np.fft.ifft2(spectrum))
    tex -= tex.min()
    return tex / max(tex.max(), 1e-12)


def _pan(canvas, n_frames, h, w, dx, dy):
    # negative motion starts from the far side of the canvas
    oy = max(0, -int(round((n_frames - 1) * dy)))
    ox = max(0, -int(round((n_frames - 1) * dx)))
    frames = []
    for t in range(n_frames):
        y0, x0 = oy + int(round(t * dy)), ox + int(round(t * dx))
        frames.append(canvas[y0:y0 + h, x0:x0 + w])
    return frames


def textured_clip(seed=0, n_frames=8, size=64, fps=25, rgb=True, motion=(1.0, 0.5)) -> VideoClip:
    """Panning fractal texture with a few hard-edged shapes on top."""
    rng = np.random.default_rng(seed)
    pad = int(np.ceil(max(abs(motion[0]), abs(motion[1])) * n_frames)) + 2
    big = size + pad
    channels = []
    base = _fractal_texture(rng, big, big)
    for _ in range(3 if rgb else 1):
        tint = 0.6 * base + 0.4 * _fractal_texture(rng, big, big, beta=1.2)
        channels.append(tint)
    canvas = np.stack(channels, axis=-1) * 200.0 + 20.0
    yy, xx = np.mgrid[0:big, 0:big]
    for _ in range(3):
        cy, cx = rng.uniform(0, big, 2)
        r = rng.uniform(size * 0.08, size * 0.2)
        mask = (yy - cy) ** 2 + (xx - cx) ** 2 < r**2
        canvas[mask] = rng.uniform(0, 255, canvas.shape[-1])
    x0, y0 = rng.integers(0, size // 4, 2)
    canvas[y0:y0 + size // 5, x0:x0 + size // 3] = rng.uniform(0, 255, canvas.shape[-1])
    canvas = quantize(canvas)
    if not rgb:
        canvas = canvas[..., 0]
    frames = _pan(canvas, n_frames, size, size, *motion)
    return VideoClip.from_frames(frames, Fraction(fps))


def moving_square_clip(n_frames=8, size=64, square=12, step=3, fps=25, bg=40, fg=220) -> VideoClip:
    """Bright square sliding right across a flat background (luma)."""
    frames = []
    for t in range(n_frames):
        f = np.full((size, size), bg, np.uint8)
        x = (4 + t * step) % (size - square)
        f[size // 3:size // 3 + square, x:x + square] = fg
        frames.append(f)
    return VideoClip.from_frames(frames, Fraction(fps))


def grating_clip(seed=0, n_frames=8, size=64, fps=25) -> VideoClip:
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    freq = rng.uniform(0.12, 0.25)
    theta = rng.uniform(0, np.pi)
    frames = []
    for t in range(n_frames):
        phase = 0.7 * t
        g = np.sin(freq * (np.cos(theta) * xx + np.sin(theta) * yy) + phase)
        rgb = np.stack([128 + 90 * g, 128 + 60 * np.roll(g, 3, axis=1), 128 - 80 * g], axis=-1)
        rgb += ndimage.gaussian_filter(rng.normal(0, 25, (size, size, 3)), (1, 1, 0))
        frames.append(quantize(rgb))
    return VideoClip.from_frames(frames, Fraction(fps))


def checker_clip(n_frames=8, size=64, cell=8, fps=25, seed=3) -> VideoClip:
    """Scrolling checkerboard with mild sensor-like texture (RGB)."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size]
    frames = []
    for t in range(n_frames):
        board = (((xx + t) // cell + yy // cell) % 2).astype(np.float64)
        frame = 30 + 190 * board + ndimage.gaussian_filter(rng.normal(0, 12, (size, size)), 0.7)
        frames.append(quantize(np.stack([frame, frame * 0.8 + 20, 255 - frame], axis=-1)))
    return VideoClip.from_frames(frames, Fraction(fps))


def fixture_clips(size=64, n_frames=8, fps=25) -> dict[str, VideoClip]:
    """The ten-clip fixture set used by ladder and metric tests."""
    clips = {}
    for i in range(6):
        clips[f"texture{i}"] = textured_clip(
            seed=100 + i, n_frames=n_frames, size=size, fps=fps, rgb=i % 3 != 2,
            motion=(1.0 + 0.5 * (i % 2), 0.5 * (i % 3)),
        )
    clips["grating0"] = grating_clip(seed=7, n_frames=n_frames, size=size, fps=fps)
    clips["grating1"] = grating_clip(seed=8, n_frames=n_frames, size=size, fps=fps)
    clips["checker"] = checker_clip(n_frames=n_frames, size=size, fps=fps)
    clips["square"] = _with_texture(moving_square_clip(n_frames=n_frames, size=size, fps=fps), seed=11)
    return clips


def _with_texture(clip, seed):
    rng = np.random.default_rng(seed)
    tex = ndimage.gaussian_filter(rng.normal(0, 20, clip.frames.shape[1:]), 0.8)
    return clip.replace_frames(quantize(clip.frames.astype(np.float64) + tex))


def corpus_source(seed: int, size=64, n_frames=4, fps=25) -> VideoClip:
    """One pristine source for the desk-scale corpus; content type cycles with ``seed``."""
    rng = np.random.default_rng(seed)
    kind = seed % 3
    if kind == 0:
        return textured_clip(seed, n_frames, size, fps, rgb=True, motion=tuple(rng.uniform(-1.5, 1.5, 2)))
    if kind == 1:
        return grating_clip(seed, n_frames, size, fps)
    base = textured_clip(seed, n_frames, size, fps, rgb=True, motion=(0.0, 0.0))
    shade = np.linspace(0.6, 1.2, size)[None, None, :, None]
    return base.replace_frames(quantize(base.frames * shade))
