"""Block residual codec: integer lifting transform + center quantization.

Normative transform
-------------------
The 8-point transform is a bijective integer lifting realization of the
type-II cosine transform. Every step is either a Haar lifting pair

    s = a + b;  d = b - (s >> 1)          (undone by b = d + (s >> 1); a = s - b)

or a plane rotation realized as three dyadic shears

    x += (p*y + 128) >> 8;  y += (u*x + 128) >> 8;  x += (p*y + 128) >> 8

with 16-bit constants p = round(256*tan(theta/2)), u = round(-256*sin(theta)).
Shifts are arithmetic (floor), so the integer inverse undoes each step
exactly: inverse(forward(x)) == x and forward(inverse(X)) == X for every
integer block. Per-axis output scales relative to the orthonormal cosine
transform are approximately [1.414, 0.707, 1.0, 0.707, 2.828, 0.707, 1.0,
0.707] by band; quantization operates on these lifted coefficients directly.

Quantization
------------
Each coefficient is split into sign and magnitude. The magnitude, divided
by delta * band_weight (the affine map the codec owns: offset 0, step
delta * weight), is hard-quantized against the centers {0..2^L - 1} with
midpoints resolved toward the smaller center. A magnitude that saturates
the top center carries an exp-Golomb escape extension (level - top), so
arbitrarily large coefficients stay representable at every L. Dequantization
is level * delta * weight rounded half up, computed in exact integer
arithmetic on the 8.8 fixed-point delta.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .entropy import (ContextModel, RangeDecoder, RangeEncoder,
                      EntropyDecodeError, decode_unary_eg0, encode_unary_eg0)

# rotation schedule for the odd half: ('rot', j, i, p, u) or ('neg2', j, i)
_ODD_OPS = (
    ("rot", 2, 3, 94, -166),
    ("rot", 1, 3, -53, 102),
    ("neg2", 1, 2),
    ("rot", 1, 2, 142, -217),
    ("rot", 0, 3, 18, -35),
    ("rot", 0, 2, 53, -102),
    ("neg2", 0, 1),
    ("rot", 0, 1, -94, 166),
)
_EVEN_P, _EVEN_U = 51, -98  # rotation by pi/8 for bands 2 and 6


def _shear(x: np.ndarray, k: int, y: np.ndarray) -> np.ndarray:
    return x + ((k * y + 128) >> 8)


def fwd8(x: np.ndarray) -> np.ndarray:
    """Forward lifting transform along the last axis (int64 in, int64 out)."""
    x0, x1, x2, x3, x4, x5, x6, x7 = (np.ascontiguousarray(x[..., i]) for i in range(8))
    s0 = x0 + x7; o0 = x7 - (s0 >> 1)
    s1 = x1 + x6; o1 = x6 - (s1 >> 1)
    s2 = x2 + x5; o2 = x5 - (s2 >> 1)
    s3 = x3 + x4; o3 = x4 - (s3 >> 1)
    c0 = s0 + s3; e0 = s3 - (c0 >> 1)
    c1 = s1 + s2; e1 = s2 - (c1 >> 1)
    b4 = c0 - c1; b0 = c1 + (b4 >> 1)
    e0 = _shear(e0, _EVEN_P, e1); e1 = _shear(e1, _EVEN_U, e0); e0 = _shear(e0, _EVEN_P, e1)
    b2 = -e0; b6 = e1
    v = [o0, o1, o2, o3]
    for op in _ODD_OPS:
        if op[0] == "neg2":
            _, j, i = op
            v[j] = -v[j]; v[i] = -v[i]
        else:
            _, j, i, p, u = op
            v[j] = _shear(v[j], p, v[i]); v[i] = _shear(v[i], u, v[j]); v[j] = _shear(v[j], p, v[i])
    return np.stack([b0, v[0], b2, v[1], b4, v[2], b6, v[3]], axis=-1)


def inv8(t: np.ndarray) -> np.ndarray:
    """Exact inverse of fwd8."""
    b0, x1, b2, x3, b4, x5, b6, x7 = (np.ascontiguousarray(t[..., i]) for i in range(8))
    v = [x1, x3, x5, x7]
    for op in reversed(_ODD_OPS):
        if op[0] == "neg2":
            _, j, i = op
            v[j] = -v[j]; v[i] = -v[i]
        else:
            _, j, i, p, u = op
            v[j] = v[j] - ((p * v[i] + 128) >> 8)
            v[i] = v[i] - ((u * v[j] + 128) >> 8)
            v[j] = v[j] - ((p * v[i] + 128) >> 8)
    o0, o1, o2, o3 = v
    e0 = -b2; e1 = b6
    e0 = e0 - ((_EVEN_P * e1 + 128) >> 8)
    e1 = e1 - ((_EVEN_U * e0 + 128) >> 8)
    e0 = e0 - ((_EVEN_P * e1 + 128) >> 8)
    c1 = b0 - (b4 >> 1); c0 = b4 + c1
    s3 = e0 + (c0 >> 1); s0 = c0 - s3
    s2 = e1 + (c1 >> 1); s1 = c1 - s2
    x7_ = o0 + (s0 >> 1); x0_ = s0 - x7_
    x6_ = o1 + (s1 >> 1); x1_ = s1 - x6_
    x5_ = o2 + (s2 >> 1); x2_ = s2 - x5_
    x4_ = o3 + (s3 >> 1); x3_ = s3 - x4_
    return np.stack([x0_, x1_, x2_, x3_, x4_, x5_, x6_, x7_], axis=-1)


def fwd2d(blocks: np.ndarray) -> np.ndarray:
    """Separable 2D forward over the trailing (8, 8) axes."""
    t = fwd8(blocks.astype(np.int64))
    t = np.swapaxes(t, -1, -2)
    t = fwd8(t)
    return np.swapaxes(t, -1, -2)


def inv2d(coefs: np.ndarray) -> np.ndarray:
    t = np.swapaxes(coefs.astype(np.int64), -1, -2)
    t = inv8(t)
    t = np.swapaxes(t, -1, -2)
    return inv8(t)


def _zigzag_order() -> np.ndarray:
    order = sorted(((r + c, c if (r + c) % 2 else r, r, c)
                    for r in range(8) for c in range(8)))
    return np.array([r * 8 + c for _, _, r, c in order], dtype=np.int64)


ZIGZAG = _zigzag_order()

# band group per zigzag position: DC, low, mid, high
_BAND_GROUP = np.array([0] + [1] * 5 + [2] * 15 + [3] * 43, dtype=np.int64)

FLAT_WEIGHTS = np.ones((8, 8), dtype=np.int64)


@dataclass(frozen=True)
class QualityPoint:
    """Rate-distortion operating point: step delta_q and center bits levels."""

    delta_q: float
    levels: int

    def __post_init__(self) -> None:
        if not (self.delta_q > 0):
            raise ValueError("delta_q must be > 0")
        if not (1 <= self.levels <= 12):
            raise ValueError("levels must be in 1..12")
        if self.delta_fp < 1:
            raise ValueError("delta_q too small for 8.8 fixed point")

    @property
    def delta_fp(self) -> int:
        """delta_q in 8.8 fixed point, the form carried by the container."""
        return int(round(self.delta_q * 256))

    @property
    def top_center(self) -> int:
        return (1 << self.levels) - 1


# context layout for one residual payload
_CTX_ZERO_BLOCK = 0            # +cc (2)
_CTX_SIG = 2                   # +cc*8 + band_group*2 + prev_sig (16)
_CTX_LAST = 18                 # +cc*4 + band_group (8)
_CTX_SIGN = 26                 # +cc (2)
_CTX_MAG_PREFIX = 28           # +cc*4, span 3 prefix + 1 suffix (8)
_CTX_ESC_PREFIX = 36           # +cc*3, span 2 prefix + 1 suffix (6)
NUM_RESIDUAL_CONTEXTS = 42


def residual_context_model() -> ContextModel:
    return ContextModel(NUM_RESIDUAL_CONTEXTS)


def _quantize_magnitudes(coefs: np.ndarray, denom: np.ndarray) -> np.ndarray:
    """Half-down rounding of |coef| / denom in exact integer arithmetic."""
    mag = np.abs(coefs)
    return (2 * mag * 256 + denom - 1) // (2 * denom)


def _dequantize(levels: np.ndarray, signs: np.ndarray, denom: np.ndarray) -> np.ndarray:
    return signs * ((levels * denom + 128) >> 8)


def _check_patch(patch: np.ndarray) -> None:
    if patch.ndim != 3 or patch.shape[0] != 3:
        raise ValueError("residual patch must be (3, h, w)")
    if patch.shape[1] % 8 or patch.shape[2] % 8:
        raise ValueError("residual patch dims must be multiples of 8")


def _blocks_of(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    return plane.reshape(h // 8, 8, w // 8, 8).swapaxes(1, 2).reshape(-1, 8, 8)


def _unblock(blocks: np.ndarray, h: int, w: int) -> np.ndarray:
    return blocks.reshape(h // 8, w // 8, 8, 8).swapaxes(1, 2).reshape(h, w)


def encode_residual(patches: Sequence[np.ndarray], q: QualityPoint,
                    weights: np.ndarray = FLAT_WEIGHTS) -> tuple[bytes, list[np.ndarray]]:
    """Code residual patches into one entropy payload.

    Returns (payload, decoded_patches): the decoded side is produced through
    the identical dequantize/inverse path the decoder runs, so the encoder's
    reconstruction references match the decoder bit for bit.
    """
    enc = RangeEncoder(residual_context_model())
    denom = weights.astype(np.int64) * q.delta_fp
    denom_zz = denom.reshape(64)[ZIGZAG]
    top = q.top_center
    decoded: list[np.ndarray] = []
    for patch in patches:
        _check_patch(patch)
        out = np.empty_like(patch, dtype=np.int64)
        for ch in range(3):
            cc = 0 if ch == 0 else 1
            blocks = _blocks_of(np.asarray(patch[ch], dtype=np.int64))
            coefs = fwd2d(blocks)
            flat = coefs.reshape(-1, 64)[:, ZIGZAG]
            levels = _quantize_magnitudes(flat, denom_zz)
            signs = np.sign(flat)
            for b in range(flat.shape[0]):
                _encode_block(enc, levels[b], signs[b], cc, top)
            rec = np.zeros_like(flat)
            nz = levels > 0
            rec[nz] = _dequantize(levels[nz], signs[nz], np.broadcast_to(denom_zz, flat.shape)[nz])
            tback = np.zeros_like(coefs).reshape(-1, 64)
            tback[:, ZIGZAG] = rec
            spatial = inv2d(tback.reshape(-1, 8, 8))
            out[ch] = _unblock(np.clip(spatial, -255, 255), patch.shape[1], patch.shape[2])
        decoded.append(out)
    return enc.finish(), decoded


def _encode_block(enc: RangeEncoder, levels: np.ndarray, signs: np.ndarray,
                  cc: int, top: int) -> None:
    nz = np.flatnonzero(levels)
    if nz.size == 0:
        enc.encode(_CTX_ZERO_BLOCK + cc, 1)
        return
    enc.encode(_CTX_ZERO_BLOCK + cc, 0)
    last = int(nz[-1])
    prev_sig = 0
    for i in range(last + 1):
        lev = int(levels[i])
        band = int(_BAND_GROUP[i])
        sig = 1 if lev else 0
        enc.encode(_CTX_SIG + cc * 8 + band * 2 + prev_sig, sig)
        prev_sig = sig
        if not sig:
            continue
        enc.encode(_CTX_SIGN + cc, 0 if signs[i] > 0 else 1)
        c = min(lev, top)
        if top > 1:
            base = _CTX_MAG_PREFIX + cc * 4
            encode_unary_eg0(enc, c - 1, base, base + 3, prefix_span=3)
        if c == top:
            base = _CTX_ESC_PREFIX + cc * 3
            encode_unary_eg0(enc, lev - top, base, base + 2, prefix_span=2)
        if i < 63:
            enc.encode(_CTX_LAST + cc * 4 + band, 1 if i == last else 0)


def decode_residual(data: bytes, shapes: Sequence[tuple[int, int]], q: QualityPoint,
                    weights: np.ndarray = FLAT_WEIGHTS) -> list[np.ndarray]:
    """Inverse of encode_residual; shapes lists each patch's (h, w)."""
    dec = RangeDecoder(data, residual_context_model())
    denom = weights.astype(np.int64) * q.delta_fp
    denom_zz = denom.reshape(64)[ZIGZAG]
    top = q.top_center
    patches: list[np.ndarray] = []
    for (h, w) in shapes:
        if h % 8 or w % 8:
            raise ValueError("residual patch dims must be multiples of 8")
        patch = np.empty((3, h, w), dtype=np.int64)
        nblocks = (h // 8) * (w // 8)
        for ch in range(3):
            cc = 0 if ch == 0 else 1
            flat = np.zeros((nblocks, 64), dtype=np.int64)
            for b in range(nblocks):
                _decode_block(dec, flat[b], cc, top, denom_zz)
            tback = np.zeros((nblocks, 64), dtype=np.int64)
            tback[:, ZIGZAG] = flat
            spatial = inv2d(tback.reshape(-1, 8, 8))
            patch[ch] = _unblock(np.clip(spatial, -255, 255), h, w)
        patches.append(patch)
    dec.finish()
    return patches


def _decode_block(dec: RangeDecoder, out_zz: np.ndarray, cc: int, top: int,
                  denom_zz: np.ndarray) -> None:
    if dec.decode(_CTX_ZERO_BLOCK + cc):
        return
    prev_sig = 0
    seen_any = False
    for i in range(64):
        band = int(_BAND_GROUP[i])
        sig = dec.decode(_CTX_SIG + cc * 8 + band * 2 + prev_sig)
        prev_sig = sig
        if not sig:
            if i == 63 and not seen_any:
                raise EntropyDecodeError("non-zero block decoded with no coefficients")
            continue
        seen_any = True
        sign = -1 if dec.decode(_CTX_SIGN + cc) else 1
        if top > 1:
            base = _CTX_MAG_PREFIX + cc * 4
            c = decode_unary_eg0(dec, base, base + 3, prefix_span=3) + 1
            if c > top:
                raise EntropyDecodeError("magnitude exceeds center range")
        else:
            c = 1
        lev = c
        if c == top:
            base = _CTX_ESC_PREFIX + cc * 3
            lev = top + decode_unary_eg0(dec, base, base + 2, prefix_span=2)
        out_zz[i] = sign * ((lev * int(denom_zz[i]) + 128) >> 8)
        if i < 63 and dec.decode(_CTX_LAST + cc * 4 + band):
            return


def reconstruct_foreground(predicted: np.ndarray, residual: np.ndarray,
                           mask: np.ndarray) -> np.ndarray:
    """clamp(predicted + residual, 0, 255) inside the mask, zero outside."""
    rec = np.clip(predicted.astype(np.int64) + residual.astype(np.int64), 0, 255)
    return np.where(mask[None, :, :], rec, 0).astype(np.uint8)
