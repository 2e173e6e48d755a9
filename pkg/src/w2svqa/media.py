"""Clip containers, y4m / raw-planar I/O, and the external encoder bridge.

Frames are numpy ``uint8`` arrays: ``(H, W)`` for luma, ``(H, W, 3)`` for
interleaved RGB.  A :class:`VideoClip` stacks them as ``(T, H, W)`` or
``(T, H, W, 3)`` and is read-only once built.
"""

from __future__ import annotations

import json
import os
import shlex
import shutil
import subprocess
import tempfile
import threading
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import (
    ClipInvariantError,
    DomainError,
    EncoderError,
    EncoderNotFoundError,
    ParseError,
    TruncationError,
)

MIN_SIDE = 16
MIN_FRAMES = 2

LUMA = "luma"
RGB = "rgb"


def frame_layout(frame: np.ndarray) -> str:
    if frame.ndim == 2:
        return LUMA
    if frame.ndim == 3 and frame.shape[2] == 3:
        return RGB
    raise ClipInvariantError(f"unsupported frame shape {frame.shape}")


def check_frame(frame: np.ndarray) -> np.ndarray:
    """Validate a single frame and return it unchanged."""
    if not isinstance(frame, np.ndarray) or frame.dtype != np.uint8:
        raise ClipInvariantError("frames must be uint8 numpy arrays")
    frame_layout(frame)
    h, w = frame.shape[:2]
    if h < MIN_SIDE or w < MIN_SIDE:
        raise ClipInvariantError(f"frame {w}x{h} is smaller than {MIN_SIDE}x{MIN_SIDE}")
    return frame


@dataclass(frozen=True, eq=False)
class VideoClip:
    frames: np.ndarray
    fps: Fraction

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.dtype != np.uint8:
            raise ClipInvariantError(f"frames must be uint8, got {frames.dtype}")
        if frames.ndim not in (3, 4) or (frames.ndim == 4 and frames.shape[3] != 3):
            raise ClipInvariantError(f"unsupported clip array shape {frames.shape}")
        if frames.shape[0] < MIN_FRAMES:
            raise ClipInvariantError(f"clip has {frames.shape[0]} frame(s); at least {MIN_FRAMES} required")
        check_frame(frames[0])
        fps = Fraction(self.fps).limit_denominator(1_000_000)
        if fps <= 0:
            raise ClipInvariantError(f"fps must be positive, got {fps}")
        frames = np.array(frames, copy=True, order="C")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "fps", fps)

    @classmethod
    def from_frames(cls, frames, fps) -> "VideoClip":
        frames = list(frames)
        if not frames:
            raise ClipInvariantError("clip has no frames")
        shapes = {f.shape for f in frames}
        if len(shapes) != 1:
            raise ClipInvariantError(f"frames disagree on geometry/layout: {sorted(shapes)}")
        return cls(np.stack(frames), fps)

    @property
    def layout(self) -> str:
        return RGB if self.frames.ndim == 4 else LUMA

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    def __len__(self):
        return self.n_frames

    def __iter__(self):
        return iter(self.frames)

    def __eq__(self, other):
        if not isinstance(other, VideoClip):
            return NotImplemented
        return (
            self.fps == other.fps
            and self.frames.shape == other.frames.shape
            and np.array_equal(self.frames, other.frames)
        )

    __hash__ = None

    def replace_frames(self, frames) -> "VideoClip":
        return VideoClip(np.asarray(frames), self.fps)

    def to_luma(self) -> "VideoClip":
        if self.layout == LUMA:
            return self
        return VideoClip(rgb_to_luma(self.frames), self.fps)


# -- colour ---------------------------------------------------------------

def rgb_to_luma(rgb: np.ndarray) -> np.ndarray:
    """BT.601 luma rounded half-up, computed in exact integer arithmetic."""
    rgb = rgb.astype(np.int32)
    y = (299 * rgb[..., 0] + 587 * rgb[..., 1] + 114 * rgb[..., 2] + 500) // 1000
    return y.astype(np.uint8)


def to_luma(frame: np.ndarray) -> np.ndarray:
    """Convert an RGB frame to BT.601 luma; luma frames pass through."""
    if frame_layout(frame) == LUMA:
        return frame
    return rgb_to_luma(frame)


def rgb_to_ycbcr(rgb: np.ndarray) -> np.ndarray:
    """Full-range BT.601 YCbCr as float64 (no rounding)."""
    rgb = rgb.astype(np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b
    cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b
    return np.stack([y, cb, cr], axis=-1)


def ycbcr_to_rgb(ycc: np.ndarray) -> np.ndarray:
    """Inverse of :func:`rgb_to_ycbcr`; returns float64, unclipped."""
    y, cb, cr = ycc[..., 0], ycc[..., 1] - 128.0, ycc[..., 2] - 128.0
    r = y + 1.402 * cr
    g = y - 0.344136 * cb - 0.714136 * cr
    b = y + 1.772 * cb
    return np.stack([r, g, b], axis=-1)


def quantize(values: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(values), 0, 255).astype(np.uint8)


# -- y4m ------------------------------------------------------------------

_Y4M_MAGIC = b"YUV4MPEG2"
_CHROMA_420 = {"420", "420jpeg", "420paldv", "420mpeg2"}


def _parse_y4m_header(line: bytes):
    tokens = line.split(b" ")
    if tokens[0] != _Y4M_MAGIC:
        raise ParseError("missing YUV4MPEG2 signature", 0)
    width = height = None
    fps = None
    chroma = "420jpeg"
    offset = len(_Y4M_MAGIC) + 1
    for tok in tokens[1:]:
        if not tok:
            offset += 1
            continue
        key, val = chr(tok[0]), tok[1:].decode("ascii", "replace")
        try:
            if key == "W":
                width = int(val)
            elif key == "H":
                height = int(val)
            elif key == "F":
                num, den = val.split(":")
                fps = Fraction(int(num), int(den))
            elif key == "C":
                chroma = val
            elif key == "I" and val not in ("p", "?"):
                raise ParseError(f"interlaced y4m ({val!r}) not supported", offset)
        except (ValueError, ZeroDivisionError) as exc:
            raise ParseError(f"bad y4m header token {tok!r}", offset) from exc
        offset += len(tok) + 1
    if width is None or height is None or fps is None:
        raise ParseError("y4m header lacks W, H or F", 0)
    if chroma not in _CHROMA_420 | {"444", "mono"}:
        raise ParseError(f"unsupported y4m colourspace C{chroma}", 0)
    return width, height, fps, chroma


def _plane_shapes(width, height, chroma):
    if chroma == "mono":
        return [(height, width)]
    if chroma == "444":
        return [(height, width)] * 3
    cw, ch = (width + 1) // 2, (height + 1) // 2
    return [(height, width), (ch, cw), (ch, cw)]


def read_y4m(path, luma_only: bool = False) -> VideoClip:
    """Parse a y4m file.

    ``Cmono`` files (and any file when ``luma_only``) load as luma clips with
    the Y plane preserved bit-exactly.  Colour files are converted to RGB via
    full-range BT.601, with 4:2:0 chroma upsampled by pixel replication.
    """
    data = Path(path).read_bytes()
    if not data:
        raise ParseError(f"{path}: empty file", 0)
    nl = data.find(b"\n")
    if nl < 0:
        raise ParseError(f"{path}: unterminated y4m header", len(data))
    width, height, fps, chroma = _parse_y4m_header(data[:nl])
    shapes = _plane_shapes(width, height, chroma)
    frame_bytes = sum(h * w for h, w in shapes)
    pos = nl + 1
    frames = []
    while pos < len(data):
        end = data.find(b"\n", pos)
        if end < 0 or not data.startswith(b"FRAME", pos):
            raise ParseError(f"{path}: expected FRAME marker", pos)
        pos = end + 1
        if pos + frame_bytes > len(data):
            raise TruncationError(
                f"{path}: frame {len(frames)} needs {frame_bytes} bytes, {len(data) - pos} remain", pos
            )
        planes = []
        for h, w in shapes:
            planes.append(np.frombuffer(data, np.uint8, h * w, pos).reshape(h, w))
            pos += h * w
        frames.append(_planes_to_frame(planes, chroma, luma_only))
    if not frames:
        raise ClipInvariantError(f"{path}: no frames")
    return VideoClip.from_frames(frames, fps)


def _planes_to_frame(planes, chroma, luma_only):
    y = planes[0]
    if chroma == "mono" or luma_only:
        return y.copy()
    h, w = y.shape
    cb, cr = planes[1], planes[2]
    if chroma != "444":
        cb = np.repeat(np.repeat(cb, 2, axis=0), 2, axis=1)[:h, :w]
        cr = np.repeat(np.repeat(cr, 2, axis=0), 2, axis=1)[:h, :w]
    ycc = np.stack([y, cb, cr], axis=-1).astype(np.float64)
    return quantize(ycbcr_to_rgb(ycc))


def write_y4m(clip: VideoClip, path, chroma: str | None = None) -> None:
    """Write a clip as y4m.

    Luma clips default to ``Cmono`` (lossless); RGB clips are written as
    full-range ``C444`` YCbCr, which is not bit-exact on reload.  Passing
    ``chroma="420jpeg"`` for a luma clip pads neutral chroma planes, which
    is the form external encoders accept.
    """
    if chroma is None:
        chroma = "mono" if clip.layout == LUMA else "444"
    h, w = clip.height, clip.width
    header = f"YUV4MPEG2 W{w} H{h} F{clip.fps.numerator}:{clip.fps.denominator} Ip A1:1 C{chroma}"
    if chroma != "mono":
        header += " XCOLORRANGE=FULL"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii") + b"\n")
        for frame in clip.frames:
            fh.write(b"FRAME\n")
            for plane in _frame_to_planes(frame, chroma):
                fh.write(np.ascontiguousarray(plane).tobytes())


def _frame_to_planes(frame, chroma):
    if frame.ndim == 2:
        y = frame
        cb = cr = np.full_like(frame, 128)
    else:
        ycc = rgb_to_ycbcr(frame)
        y, cb, cr = (quantize(ycc[..., i]) for i in range(3))
    if chroma == "mono":
        return [y]
    if chroma == "444":
        return [y, cb, cr]
    if chroma in _CHROMA_420:
        return [y, _decimate(cb), _decimate(cr)]
    raise DomainError(f"unsupported y4m colourspace C{chroma}")


def _decimate(plane):
    h, w = plane.shape
    padded = np.pad(plane.astype(np.float64), ((0, h % 2), (0, w % 2)), mode="edge")
    avg = padded.reshape(padded.shape[0] // 2, 2, padded.shape[1] // 2, 2).mean(axis=(1, 3))
    return quantize(avg)


# -- raw planar ------------------------------------------------------------

def _sidecar(path) -> Path:
    return Path(str(path) + ".json")


def write_raw(clip: VideoClip, path) -> None:
    """Planar raw dump plus a JSON sidecar header; lossless for both layouts."""
    meta = {
        "width": clip.width,
        "height": clip.height,
        "layout": clip.layout,
        "fps": f"{clip.fps.numerator}/{clip.fps.denominator}",
        "frames": clip.n_frames,
    }
    frames = clip.frames
    if clip.layout == RGB:
        frames = np.moveaxis(frames, -1, 1)  # T, C, H, W
    with open(path, "wb") as fh:
        fh.write(np.ascontiguousarray(frames).tobytes())
    _sidecar(path).write_text(json.dumps(meta, sort_keys=True))


def read_raw(path) -> VideoClip:
    side = _sidecar(path)
    try:
        meta = json.loads(side.read_text())
        w, h, layout = int(meta["width"]), int(meta["height"]), meta["layout"]
        fps = Fraction(meta["fps"])
    except FileNotFoundError:
        raise
    except (KeyError, ValueError, TypeError, ZeroDivisionError) as exc:
        raise ParseError(f"{side}: malformed sidecar header: {exc}", 0) from exc
    if layout not in (LUMA, RGB):
        raise ParseError(f"{side}: unknown layout {layout!r}", 0)
    channels = 3 if layout == RGB else 1
    data = Path(path).read_bytes()
    if not data:
        raise ParseError(f"{path}: empty file", 0)
    frame_bytes = w * h * channels
    n = len(data) // frame_bytes
    if len(data) % frame_bytes:
        raise TruncationError(f"{path}: trailing partial frame", n * frame_bytes)
    if "frames" in meta and int(meta["frames"]) != n:
        raise TruncationError(f"{path}: header declares {meta['frames']} frames, found {n}", len(data))
    arr = np.frombuffer(data, np.uint8).reshape(n, channels, h, w)
    arr = np.moveaxis(arr, 1, -1) if layout == RGB else arr[:, 0]
    return VideoClip(arr, fps)


FORMATS = ("y4m", "raw")


def _resolve_format(path, fmt):
    if fmt is None:
        fmt = "y4m" if str(path).lower().endswith(".y4m") else "raw"
    if fmt not in FORMATS:
        raise DomainError(f"unknown clip format {fmt!r}; expected one of {FORMATS}")
    return fmt


def load_clip(path, format: str | None = None, luma_only: bool = False) -> VideoClip:
    fmt = _resolve_format(path, format)
    if fmt == "y4m":
        return read_y4m(path, luma_only=luma_only)
    clip = read_raw(path)
    return clip.to_luma() if luma_only else clip


def save_clip(clip: VideoClip, path, format: str | None = None) -> None:
    fmt = _resolve_format(path, format)
    try:
        if fmt == "y4m":
            write_y4m(clip, path)
        else:
            write_raw(clip, path)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write clip to {path}: {exc.strerror}") from exc


# -- external encoder ------------------------------------------------------

CRF_RANGES = {"h264": (0, 63), "h265": (0, 51)}

ENCODE_TEMPLATES = {
    "h264": "{exe} -hide_banner -loglevel error -nostdin -y -i {input} -c:v libx264 "
            "-preset {preset} -crf {crf} -pix_fmt {pix_fmt} -threads 1 {output}",
    "h265": "{exe} -hide_banner -loglevel error -nostdin -y -i {input} -c:v libx265 "
            "-preset {preset} -crf {crf} -pix_fmt {pix_fmt} "
            "-x265-params log-level=error:pools=1:frame-threads=1 {output}",
}
DECODE_TEMPLATE = "{exe} -hide_banner -loglevel error -nostdin -y -i {input} -f yuv4mpegpipe -pix_fmt {pix_fmt} {output}"

_REMEDIATION = (
    "no encoder executable found; set W2S_ENCODER to an ffmpeg binary, put ffmpeg on PATH, "
    "or `pip install imageio-ffmpeg`"
)


@dataclass(frozen=True)
class EncoderConfig:
    """Where the encoder lives and how it is invoked.

    Templates accept ``{exe}``, ``{input}``, ``{output}``, ``{crf}``,
    ``{preset}`` and ``{pix_fmt}`` (yuv420p for luma clips, yuv444p for
    RGB clips so chroma subsampling does not leak into luma).
    ``W2S_ENCODER`` overrides ``executable``; if its value contains
    ``{input}`` it replaces the encode template instead.
    """

    executable: str | None = None
    templates: tuple = ()
    decode_template: str = DECODE_TEMPLATE

    def template_for(self, codec: str) -> str:
        env = os.environ.get("W2S_ENCODER", "")
        if "{input}" in env:
            return env
        return dict(self.templates).get(codec, ENCODE_TEMPLATES[codec])


def find_encoder(config: EncoderConfig | None = None) -> str:
    env = os.environ.get("W2S_ENCODER")
    candidates = []
    if env and "{input}" not in env:
        candidates.append(env)
    if config is not None and config.executable:
        candidates.append(config.executable)
    candidates.append("ffmpeg")
    for cand in candidates:
        found = shutil.which(cand)
        if found:
            return found
    try:
        import imageio_ffmpeg
    except ImportError:
        raise EncoderNotFoundError(_REMEDIATION) from None
    try:
        return imageio_ffmpeg.get_ffmpeg_exe()
    except RuntimeError as exc:
        raise EncoderNotFoundError(_REMEDIATION) from exc


def normalize_preset(preset: str) -> str:
    return preset.replace(" ", "").replace("_", "").lower()


_path_locks: dict[str, threading.Lock] = {}
_path_locks_guard = threading.Lock()


def _lock_for(path) -> threading.Lock:
    key = os.path.abspath(str(path))
    with _path_locks_guard:
        return _path_locks.setdefault(key, threading.Lock())


def _run(argv, what):
    try:
        proc = subprocess.run(argv, capture_output=True, text=True, check=False)
    except FileNotFoundError as exc:
        raise EncoderNotFoundError(f"{_REMEDIATION} ({exc})") from exc
    if proc.returncode != 0:
        raise EncoderError(f"{what} failed with exit code {proc.returncode}", proc.returncode, proc.stderr)


def _format_argv(template, **fields):
    return [tok.format(**fields) for tok in shlex.split(template)]


def encode_roundtrip(
    clip: VideoClip,
    codec: str,
    crf: int,
    preset: str = "fast",
    config: EncoderConfig | None = None,
    keep_bitstream=None,
) -> VideoClip:
    """Compress ``clip`` with the external encoder and decode it back.

    The result has the same geometry, frame count, fps and layout.  When
    ``keep_bitstream`` names a path the compressed file is copied there.
    """
    codec = codec.lower()
    if codec not in CRF_RANGES:
        raise DomainError(f"unknown codec {codec!r}; expected one of {sorted(CRF_RANGES)}")
    lo, hi = CRF_RANGES[codec]
    if not isinstance(crf, (int, np.integer)) or not lo <= crf <= hi:
        raise DomainError(f"crf {crf!r} outside {codec} range [{lo}, {hi}]")
    config = config or EncoderConfig()
    exe = find_encoder(config)
    preset = normalize_preset(preset)
    with tempfile.TemporaryDirectory(prefix="w2svqa-enc-") as tmp:
        src = os.path.join(tmp, "src.y4m")
        bitstream = os.path.join(tmp, "enc.mp4")
        dec = os.path.join(tmp, "dec.y4m")
        if clip.layout == LUMA:
            write_y4m(clip, src, chroma="420jpeg")
            pix_fmt = "yuv420p"
        else:
            write_y4m(clip, src, chroma="444")
            pix_fmt = "yuv444p"
        _run(_format_argv(config.template_for(codec), exe=exe, input=src, output=bitstream,
                          crf=int(crf), preset=preset, pix_fmt=pix_fmt), f"{codec} encode")
        _run(_format_argv(config.decode_template, exe=exe, input=bitstream, output=dec,
                          pix_fmt=pix_fmt), f"{codec} decode")
        out = read_y4m(dec, luma_only=clip.layout == LUMA)
        if keep_bitstream is not None:
            with _lock_for(keep_bitstream):
                shutil.copyfile(bitstream, keep_bitstream)
    if out.frames.shape != clip.frames.shape:
        raise EncoderError(f"decoded clip shape {out.frames.shape} differs from input {clip.frames.shape}")
    return VideoClip(out.frames, clip.fps)
