"""Background template chain: gated updates, residual coding, interpolation.

A new template is admitted when the luma MS-SSIM between the current
template and the candidate background drops below the updating threshold
gamma (default 0.98). Templates are residual-coded against the previous
reconstructed template; the first template (and periodic anchors) code
against a constant mid-gray 128 plane so the dependency chain can be
re-entered without replaying the whole stream. Template coding always uses
a fine fixed quality point: background fidelity is prioritized over rate
because every interpolated frame inherits the template's errors.

Backgrounds between two templates are never coded. Both sides recompute
them by per-pixel linear interpolation

    value = prev + (next - prev) * k / m,   k = 1 .. m-1

with round-half-up, evaluated in exact integer arithmetic, so encoder and
decoder agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Frame, FbvError
from .metrics import ms_ssim
from .residual import QualityPoint, decode_residual, encode_residual

TEMPLATE_QUALITY = QualityPoint(1.0, 6)
ANCHOR_VALUE = 128
DEFAULT_GAMMA = 0.98


@dataclass(frozen=True)
class BackgroundTemplate:
    """One stored template: reconstructed image plus its coded payload."""

    frame_index: int
    image: Frame
    payload: bytes
    anchor: bool


def should_update(current_template: Frame, candidate: Frame, gamma: float = DEFAULT_GAMMA) -> bool:
    """True when the candidate drifted enough (luma MS-SSIM below gamma)."""
    if current_template.planes.shape != candidate.planes.shape:
        raise ValueError("template and candidate dimensions differ")
    if not (0.0 < gamma < 1.0):
        raise ValueError("gamma must be in (0, 1)")
    return ms_ssim(current_template, candidate) < gamma


def _pad_residual(res: np.ndarray) -> np.ndarray:
    h, w = res.shape[1:]
    ph = (-h) % 8
    pw = (-w) % 8
    if not ph and not pw:
        return res
    return np.pad(res, ((0, 0), (0, ph), (0, pw)), mode="edge")


def _base_planes(prev: BackgroundTemplate | None, shape: tuple[int, ...]) -> np.ndarray:
    if prev is None:
        return np.full(shape, ANCHOR_VALUE, dtype=np.int64)
    return prev.image.planes.astype(np.int64)


def encode_template(prev: BackgroundTemplate | None, candidate: Frame,
                    quality: QualityPoint = TEMPLATE_QUALITY) -> BackgroundTemplate:
    """Code candidate against prev (or the mid-gray anchor when prev is None)."""
    base = _base_planes(prev, candidate.planes.shape)
    residual = candidate.planes.astype(np.int64) - base
    payload, decoded = encode_residual([_pad_residual(residual)], quality)
    h, w = candidate.planes.shape[1:]
    rec = np.clip(base + decoded[0][:, :h, :w], 0, 255).astype(np.uint8)
    return BackgroundTemplate(frame_index=candidate.frame_index,
                              image=Frame(rec, candidate.frame_index),
                              payload=payload, anchor=prev is None)


def decode_template(prev: BackgroundTemplate | None, payload: bytes,
                    frame_index: int, height: int, width: int,
                    quality: QualityPoint = TEMPLATE_QUALITY) -> BackgroundTemplate:
    """Decoder mirror of encode_template; bit-identical reconstruction."""
    base = _base_planes(prev, (3, height, width))
    ph = height + ((-height) % 8)
    pw = width + ((-width) % 8)
    decoded = decode_residual(payload, [(ph, pw)], quality)[0]
    rec = np.clip(base + decoded[:, :height, :width], 0, 255).astype(np.uint8)
    return BackgroundTemplate(frame_index=frame_index,
                              image=Frame(rec, frame_index),
                              payload=payload, anchor=prev is None)


def interpolate_backgrounds(b_prev: Frame, b_next: Frame, m: int) -> list[Frame]:
    """The m-1 intermediate backgrounds between two templates, oldest first."""
    if m < 1:
        raise ValueError("interval must be >= 1")
    if b_prev.planes.shape != b_next.planes.shape:
        raise ValueError("template dimensions differ")
    prev = b_prev.planes.astype(np.int64)
    delta = b_next.planes.astype(np.int64) - prev
    out = []
    for k in range(1, m):
        # prev + delta*k/m, round half up, exact in integers
        planes = prev + (2 * delta * k + m) // (2 * m)
        out.append(Frame(planes.astype(np.uint8), b_prev.frame_index + k))
    return out


def interpolated_background(b_prev: Frame, b_next: Frame, m: int, j: int) -> Frame:
    """Single background at offset j templates back from b_next (j=0 -> b_next)."""
    if not (0 <= j <= m):
        raise ValueError("offset j must be in [0, m]")
    if j == 0:
        return b_next
    if j == m:
        return b_prev
    prev = b_prev.planes.astype(np.int64)
    delta = b_next.planes.astype(np.int64) - prev
    k = m - j
    planes = prev + (2 * delta * k + m) // (2 * m)
    return Frame(planes.astype(np.uint8), b_next.frame_index - j)


@dataclass
class TemplateChain:
    """Ordered templates plus the gate threshold that grew the chain."""

    gamma: float = DEFAULT_GAMMA
    anchor_interval: int = 16
    templates: list[BackgroundTemplate] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not (0.0 < self.gamma < 1.0):
            raise ValueError("gamma must be in (0, 1)")
        if self.anchor_interval < 1:
            raise ValueError("anchor_interval must be >= 1")

    @property
    def current(self) -> BackgroundTemplate | None:
        return self.templates[-1] if self.templates else None

    def admit(self, candidate: Frame) -> BackgroundTemplate | None:
        """Gate the candidate; append and return a new template if admitted."""
        cur = self.current
        if cur is not None and not should_update(cur.image, candidate, self.gamma):
            return None
        if cur is not None and candidate.frame_index <= cur.frame_index:
            raise FbvError("template frame indices must increase strictly")
        use_anchor = len(self.templates) % self.anchor_interval == 0
        tmpl = encode_template(None if use_anchor else cur, candidate)
        self.templates.append(tmpl)
        return tmpl

    def bracket(self, frame_no: int) -> tuple[BackgroundTemplate, BackgroundTemplate, int, int]:
        """(prev, next, m, j): bracketing templates, their spacing, and the back-offset of frame_no."""
        if not self.templates:
            raise FbvError("empty template chain")
        ts = self.templates
        if frame_no <= ts[0].frame_index:
            return ts[0], ts[0], 1, 0
        for prev, nxt in zip(ts, ts[1:]):
            if prev.frame_index <= frame_no <= nxt.frame_index:
                m = nxt.frame_index - prev.frame_index
                return prev, nxt, m, nxt.frame_index - frame_no
        return ts[-1], ts[-1], 1, 0

    def background_for(self, frame_no: int) -> Frame:
        prev, nxt, m, j = self.bracket(frame_no)
        return interpolated_background(prev.image, nxt.image, m, j)
