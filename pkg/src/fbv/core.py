"""Frame primitives and raw video I/O.

Frames are 8-bit Y'CbCr at full (4:4:4) resolution internally; 4:2:0 input
is upsampled by sample duplication at ingest and downsampled by 2x2 mean at
export. A frame's pixel data is immutable once constructed.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import BinaryIO, Iterable, Sequence

import numpy as np

MIN_DIM = 16


class FbvError(Exception):
    """Base for all package errors."""


class VideoFormatError(FbvError):
    """Malformed or unsupported raw-video input."""


def round_half_up(x: np.ndarray) -> np.ndarray:
    """Round to nearest integer, halves toward +infinity. Returns int64."""
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5).astype(np.int64)


def clip_u8(x: np.ndarray) -> np.ndarray:
    return np.clip(x, 0, 255).astype(np.uint8)


@dataclass(frozen=True)
class Frame:
    """One Y'CbCr 4:4:4 frame: planes shaped (3, height, width), dtype uint8."""

    planes: np.ndarray
    frame_index: int = 0

    def __post_init__(self) -> None:
        p = self.planes
        if p.ndim != 3 or p.shape[0] != 3:
            raise ValueError(f"planes must be (3, H, W), got {p.shape}")
        if p.dtype != np.uint8:
            raise ValueError(f"planes must be uint8, got {p.dtype}")
        if p.shape[1] < MIN_DIM or p.shape[2] < MIN_DIM:
            raise ValueError(f"frame dimensions must be >= {MIN_DIM}, got {p.shape[2]}x{p.shape[1]}")
        if self.frame_index < 0:
            raise ValueError("frame_index must be >= 0")
        p.setflags(write=False)

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def width(self) -> int:
        return self.planes.shape[2]

    def with_index(self, frame_index: int) -> "Frame":
        return Frame(self.planes, frame_index)


def frame_from_planes(y: np.ndarray, cb: np.ndarray, cr: np.ndarray, frame_index: int = 0) -> Frame:
    return Frame(np.stack([y, cb, cr]).astype(np.uint8), frame_index)


def to_luma(frame: Frame) -> np.ndarray:
    """The Y' plane, unchanged, shaped (height, width)."""
    return frame.planes[0]


@dataclass(frozen=True)
class Region:
    """Axis-aligned rectangle: x/y top-left, w/h extent, all in pixels."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self) -> None:
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"region extent must be positive: {self}")
        if self.x < 0 or self.y < 0:
            raise ValueError(f"region origin must be >= 0: {self}")

    @property
    def x2(self) -> int:  # exclusive
        return self.x + self.w

    @property
    def y2(self) -> int:  # exclusive
        return self.y + self.h

    @property
    def area(self) -> int:
        return self.w * self.h

    def overlaps(self, other: "Region") -> bool:
        """Strict interior overlap."""
        return self.x < other.x2 and other.x < self.x2 and self.y < other.y2 and other.y < self.y2

    def touches(self, other: "Region") -> bool:
        """Overlapping or edge/corner adjacent (closed-interval intersection)."""
        return self.x <= other.x2 and other.x <= self.x2 and self.y <= other.y2 and other.y <= self.y2

    def union(self, other: "Region") -> "Region":
        x1 = min(self.x, other.x)
        y1 = min(self.y, other.y)
        return Region(x1, y1, max(self.x2, other.x2) - x1, max(self.y2, other.y2) - y1)

    def contains(self, other: "Region") -> bool:
        return self.x <= other.x and self.y <= other.y and self.x2 >= other.x2 and self.y2 >= other.y2

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x, self.y, self.w, self.h)


def crop(frame: Frame, region: Region) -> np.ndarray:
    """Copy of the region's samples, shaped (3, region.h, region.w)."""
    if region.x2 > frame.width or region.y2 > frame.height:
        raise ValueError(f"region {region} exceeds frame {frame.width}x{frame.height}")
    return frame.planes[:, region.y:region.y2, region.x:region.x2].copy()


def paste(frame: Frame, region: Region, patch: np.ndarray) -> Frame:
    """New frame with the region's samples replaced by patch (3, h, w)."""
    if patch.shape != (3, region.h, region.w):
        raise ValueError(f"patch shape {patch.shape} does not match region {region}")
    if region.x2 > frame.width or region.y2 > frame.height:
        raise ValueError(f"region {region} exceeds frame {frame.width}x{frame.height}")
    planes = frame.planes.copy()
    planes[:, region.y:region.y2, region.x:region.x2] = patch
    return Frame(planes, frame.frame_index)


@dataclass(frozen=True)
class VideoSequence:
    """Ordered frames with a common geometry and frame rate."""

    frames: tuple[Frame, ...]
    fps_num: int = 25
    fps_den: int = 1

    def __post_init__(self) -> None:
        if not self.frames:
            raise ValueError("sequence must contain at least one frame")
        if self.fps_num <= 0 or self.fps_den <= 0:
            raise ValueError("frame rate must be positive")
        w, h = self.frames[0].width, self.frames[0].height
        for f in self.frames:
            if f.width != w or f.height != h:
                raise ValueError("all frames must share one geometry")

    @property
    def width(self) -> int:
        return self.frames[0].width

    @property
    def height(self) -> int:
        return self.frames[0].height

    @property
    def fps(self) -> Fraction:
        return Fraction(self.fps_num, self.fps_den)

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self) -> Iterable[Frame]:
        return iter(self.frames)


def sequence_from_arrays(planes: Sequence[np.ndarray], fps_num: int = 25, fps_den: int = 1) -> VideoSequence:
    return VideoSequence(tuple(Frame(np.ascontiguousarray(p, dtype=np.uint8), i) for i, p in enumerate(planes)),
                         fps_num, fps_den)


def _upsample_420(chroma: np.ndarray) -> np.ndarray:
    """Quarter-resolution plane to full resolution by sample duplication."""
    return np.repeat(np.repeat(chroma, 2, axis=0), 2, axis=1)


def _downsample_420(chroma: np.ndarray) -> np.ndarray:
    """Full-resolution plane to quarter resolution by 2x2 mean, half up."""
    h, w = chroma.shape
    c = chroma.astype(np.uint32).reshape(h // 2, 2, w // 2, 2)
    return ((c.sum(axis=(1, 3)) + 2) >> 2).astype(np.uint8)


_Y4M_MAGIC = b"YUV4MPEG2"


def _parse_y4m_header(line: bytes) -> tuple[int, int, int, int, str]:
    tokens = line.split(b" ")
    if tokens[0] != _Y4M_MAGIC:
        raise VideoFormatError("not a YUV4MPEG2 stream (bad magic)")
    width = height = 0
    fps_num, fps_den = 25, 1
    chroma = "420"
    for tok in tokens[1:]:
        if not tok:
            continue
        key, val = tok[:1], tok[1:].decode("ascii", "replace")
        if key == b"W":
            width = int(val)
        elif key == b"H":
            height = int(val)
        elif key == b"F":
            m = re.fullmatch(r"(\d+):(\d+)", val)
            if not m:
                raise VideoFormatError(f"bad frame-rate token F{val}")
            fps_num, fps_den = int(m.group(1)), int(m.group(2))
        elif key == b"C":
            chroma = val
        # interlacing / aspect tokens are accepted and ignored
    if width <= 0 or height <= 0:
        raise VideoFormatError("header missing W or H")
    return width, height, fps_num, fps_den, chroma


def read_y4m(source: str | bytes | BinaryIO) -> VideoSequence:
    """Parse a YUV4MPEG2 stream into a 4:4:4 sequence.

    Supports C420* (upsampled by duplication) and C444 tags. A frame payload
    cut short raises an error naming the last complete frame.
    """
    stream = _as_stream(source)
    header = _read_line(stream, "stream header")
    width, height, fps_num, fps_den, chroma = _parse_y4m_header(header)
    if chroma.startswith("420"):
        subsampled = True
        if width % 2 or height % 2:
            raise VideoFormatError("4:2:0 requires even dimensions")
    elif chroma == "444":
        subsampled = False
    else:
        raise VideoFormatError(f"unsupported chroma mode C{chroma}")

    frames: list[Frame] = []
    while True:
        marker = stream.readline()
        if marker == b"":
            break
        if not marker.startswith(b"FRAME"):
            raise VideoFormatError(f"expected FRAME marker before frame {len(frames)}")
        frames.append(_read_frame_payload(stream, width, height, subsampled, len(frames)))
    if not frames:
        raise VideoFormatError("stream contains no frames")
    return VideoSequence(tuple(frames), fps_num, fps_den)


def read_raw_420(source: str | bytes | BinaryIO, width: int, height: int,
                 fps_num: int = 25, fps_den: int = 1) -> VideoSequence:
    """Parse headerless planar 4:2:0 given an explicit geometry descriptor."""
    if width % 2 or height % 2:
        raise VideoFormatError("4:2:0 requires even dimensions")
    stream = _as_stream(source)
    frames: list[Frame] = []
    while True:
        probe = stream.read(1)
        if probe == b"":
            break
        stream.seek(-1, io.SEEK_CUR)
        frames.append(_read_frame_payload(stream, width, height, True, len(frames)))
    if not frames:
        raise VideoFormatError("stream contains no frames")
    return VideoSequence(tuple(frames), fps_num, fps_den)


def read_raw_video(source: str | bytes | BinaryIO, width: int | None = None, height: int | None = None,
                   fps_num: int = 25, fps_den: int = 1) -> VideoSequence:
    """Read a Y4M stream, or headerless 4:2:0 when a geometry is supplied."""
    if width is None or height is None:
        return read_y4m(source)
    return read_raw_420(source, width, height, fps_num, fps_den)


def _as_stream(source: str | bytes | BinaryIO) -> BinaryIO:
    if isinstance(source, str):
        return open(source, "rb")
    if isinstance(source, (bytes, bytearray)):
        return io.BytesIO(bytes(source))
    return source


def _read_line(stream: BinaryIO, what: str) -> bytes:
    line = stream.readline()
    if not line.endswith(b"\n"):
        raise VideoFormatError(f"truncated {what}")
    return line[:-1]


def _read_frame_payload(stream: BinaryIO, width: int, height: int,
                        subsampled: bool, index: int) -> Frame:
    ysize = width * height
    csize = ysize // 4 if subsampled else ysize
    need = ysize + 2 * csize
    buf = stream.read(need)
    if len(buf) != need:
        prev = f"frame {index - 1}" if index else "no complete frame"
        raise VideoFormatError(f"truncated payload in frame {index}; last complete: {prev}")
    y = np.frombuffer(buf, np.uint8, ysize).reshape(height, width)
    if subsampled:
        cb = np.frombuffer(buf, np.uint8, csize, ysize).reshape(height // 2, width // 2)
        cr = np.frombuffer(buf, np.uint8, csize, ysize + csize).reshape(height // 2, width // 2)
        cb, cr = _upsample_420(cb), _upsample_420(cr)
    else:
        cb = np.frombuffer(buf, np.uint8, csize, ysize).reshape(height, width)
        cr = np.frombuffer(buf, np.uint8, csize, ysize + csize).reshape(height, width)
    return frame_from_planes(y.copy(), cb.copy(), cr.copy(), index)


def write_y4m(seq: VideoSequence, target: str | BinaryIO, force_444: bool = False) -> None:
    """Serialize to YUV4MPEG2; 4:2:0 for even geometries unless force_444."""
    own = isinstance(target, str)
    stream: BinaryIO = open(target, "wb") if own else target  # type: ignore[assignment]
    try:
        subsample = not force_444 and seq.width % 2 == 0 and seq.height % 2 == 0
        ctag = "C420jpeg" if subsample else "C444"
        stream.write(f"YUV4MPEG2 W{seq.width} H{seq.height} F{seq.fps_num}:{seq.fps_den} Ip A1:1 {ctag}\n"
                     .encode("ascii"))
        for frame in seq.frames:
            stream.write(b"FRAME\n")
            stream.write(frame.planes[0].tobytes())
            for c in (1, 2):
                plane = frame.planes[c]
                stream.write((_downsample_420(plane) if subsample else plane).tobytes())
    finally:
        if own:
            stream.close()
