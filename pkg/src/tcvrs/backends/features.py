"""Low-level visual features: global motion, intensity histogram, texture.

Pure numpy so outputs are bit-reproducible; these run locally rather than
behind the wire protocol.
"""

from __future__ import annotations

import numpy as np

from ..dt_model import FrameFeatures
from ..video import Frame

HIST_BINS = 16
MAX_FLOW_SHIFT = 3


def to_gray(pixels: np.ndarray) -> np.ndarray:
    """Luma conversion, float64 HxW."""
    rgb = pixels.astype(np.float64)
    return 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]


def estimate_translation(prev_gray: np.ndarray, cur_gray: np.ndarray) -> tuple[float, float]:
    """Dominant integer (dx, dy) such that cur(y, x) ~ prev(y - dy, x - dx).

    Exhaustive search over small shifts with central-crop comparison; ties
    resolve toward the smaller displacement, so identical frames give (0, 0).
    """
    h, w = prev_gray.shape
    margin = min(MAX_FLOW_SHIFT, (h - 1) // 2, (w - 1) // 2)
    if margin == 0:
        return (0.0, 0.0)
    core = cur_gray[margin : h - margin, margin : w - margin]
    best = None
    best_err = None
    shifts = sorted(
        (
            (dx, dy)
            for dx in range(-margin, margin + 1)
            for dy in range(-margin, margin + 1)
        ),
        key=lambda s: (abs(s[0]) + abs(s[1]), abs(s[0]), abs(s[1]), s[0], s[1]),
    )
    for dx, dy in shifts:
        ref = prev_gray[margin - dy : h - margin - dy, margin - dx : w - margin - dx]
        err = float(np.abs(core - ref).mean())
        if best_err is None or err < best_err:
            best_err = err
            best = (float(dx), float(dy))
    return best


def color_histogram(gray: np.ndarray) -> tuple[float, ...]:
    """Normalized intensity histogram over HIST_BINS equal-width bins."""
    bins = np.clip(np.rint(gray), 0, 255).astype(np.uint8) >> 4
    counts = np.bincount(bins.reshape(-1), minlength=HIST_BINS).astype(np.float64)
    return tuple(float(c) for c in counts / counts.sum())


def texture_descriptor(gray: np.ndarray) -> tuple[float, ...]:
    """[mean |dI/dx|, mean |dI/dy|, intensity stdev, mean |laplacian|]."""
    gx = np.abs(np.diff(gray, axis=1)).mean() if gray.shape[1] > 1 else 0.0
    gy = np.abs(np.diff(gray, axis=0)).mean() if gray.shape[0] > 1 else 0.0
    lap = 0.0
    if gray.shape[0] > 2 and gray.shape[1] > 2:
        core = gray[1:-1, 1:-1]
        lap = float(
            np.abs(
                gray[:-2, 1:-1] + gray[2:, 1:-1] + gray[1:-1, :-2] + gray[1:-1, 2:] - 4 * core
            ).mean()
        )
    return (float(gx), float(gy), float(gray.std()), lap)


def extract_features(prev: Frame, frame: Frame) -> FrameFeatures:
    """Features for one frame given its predecessor (pass the frame itself at t=0)."""
    if prev.pixels.shape != frame.pixels.shape:
        raise ValueError(
            f"frame dims differ: {prev.pixels.shape} vs {frame.pixels.shape}"
        )
    prev_gray = to_gray(prev.pixels)
    cur_gray = to_gray(frame.pixels)
    return FrameFeatures(
        frame=frame.index,
        flow_summary=estimate_translation(prev_gray, cur_gray),
        color_histogram=color_histogram(cur_gray),
        texture_descriptor=texture_descriptor(cur_gray),
    )
