"""Shared synthetic fixtures: textured stills and moving-object sequences."""

import numpy as np
import pytest

from fbv.core import Frame, VideoSequence


def smooth_texture(h, w, seed=3, lo=40, hi=200):
    """Blocky random field smoothed twice; enough detail to cost real bits."""
    r = np.random.default_rng(seed)
    base = r.integers(lo, hi, (3, h // 8 + 2, w // 8 + 2)).astype(np.float64)
    out = np.empty((3, h, w))
    for c in range(3):
        big = np.kron(base[c], np.ones((8, 8)))[: h + 8, : w + 8]
        for _ in range(2):
            big = (big[:-1, :-1] + big[1:, :-1] + big[:-1, 1:] + big[1:, 1:]) / 4.0
        out[c] = big[:h, :w]
    return np.clip(out, 0, 255).astype(np.uint8)


def gradient_background(h, w):
    """Smooth, cheap-to-code scenery: vertical ramp plus one soft blob."""
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    base = 60 + 120 * yy / max(h - 1, 1)
    blob = 40 * np.exp(-(((yy - h / 3) ** 2 + (xx - w / 2) ** 2) / (0.02 * h * w)))
    plane = np.clip(base + blob, 0, 255)
    return np.stack([plane, np.full((h, w), 128.0), np.full((h, w), 128.0)]).astype(np.uint8)


def paint_square(planes, y, x, size, color=(230, 60, 120)):
    out = planes.copy()
    for c in range(3):
        out[c, y : y + size, x : x + size] = color[c]
    return out


def moving_square_video(h=64, w=64, n=30, size=12, bg=None, fps=(25, 1),
                        step=2, hold_first=0):
    """One square gliding over a static background; optional still prefix."""
    if bg is None:
        bg = smooth_texture(h, w)
    frames = []
    for t in range(n):
        if t < hold_first:
            frames.append(Frame(bg.copy(), t))
            continue
        k = t - hold_first
        y = 10 + (3 * k) % max(h - size - 14, 1)
        x = (8 + step * k) % max(w - size - 8, 1)
        frames.append(Frame(paint_square(bg, y, x, size), t))
    return VideoSequence(tuple(frames), *fps)


def static_video(h=64, w=64, n=20, bg=None, fps=(25, 1)):
    if bg is None:
        bg = smooth_texture(h, w)
    return VideoSequence(tuple(Frame(bg.copy(), t) for t in range(n)), *fps)


@pytest.fixture(scope="session")
def square_clip():
    return moving_square_video()


@pytest.fixture(scope="session")
def static_clip():
    return static_video()
