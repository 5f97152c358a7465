"""Scalar quantization against an integer center grid.

The center set for L bits is {0, 1, ..., 2^L - 1}. Hard quantization snaps
to the nearest center with midpoints resolved toward the smaller index; the
soft variant is the softmax-weighted mixture of centers that approaches the
hard rule as sigma grows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CenterSet:
    """Integer centers 0..2^levels_log2 - 1."""

    levels_log2: int

    def __post_init__(self) -> None:
        if self.levels_log2 < 1:
            raise ValueError("levels_log2 must be >= 1")

    @property
    def count(self) -> int:
        return 1 << self.levels_log2

    @property
    def top(self) -> int:
        return self.count - 1

    def values(self) -> np.ndarray:
        return np.arange(self.count, dtype=np.float64)


def quantize_hard(omega: np.ndarray | float, centers: CenterSet) -> np.ndarray:
    """Nearest center; an exact midpoint resolves to the smaller index.

    Equivalent to ceil(omega - 0.5) clamped to [0, top]: values at k + 0.5
    land on k, which is the nearest-center argmin with the smaller-index
    tie rule on a unit grid.
    """
    w = np.asarray(omega, dtype=np.float64)
    q = np.ceil(w - 0.5)
    return np.clip(q, 0.0, float(centers.top))


def quantize_soft(omega: np.ndarray | float, centers: CenterSet, sigma: float) -> np.ndarray:
    """Softmax relaxation: sum_j softmax_j(-sigma * |omega - c_j|) * c_j.

    Computed with max-subtraction so large sigma stays finite. Output lies
    within [0, top] for any input.
    """
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    w = np.asarray(omega, dtype=np.float64)
    c = centers.values()
    logits = -sigma * np.abs(w[..., None] - c)
    logits -= logits.max(axis=-1, keepdims=True)
    e = np.exp(logits)
    return (e * c).sum(axis=-1) / e.sum(axis=-1)
