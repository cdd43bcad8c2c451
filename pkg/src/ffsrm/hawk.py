"""Haar-wavelet temporal expansion of a stack (HAWK preprocessing).

Level ``l`` uses an undecimated sliding window of ``2**l`` frames and takes
the difference between the mean of its first and second half.  The signed
details are then rectified, either into two frames (positive and negative
part) or by absolute value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import ImageStack, check_stack


@dataclass(frozen=True)
class HawkParams:
    levels: int = 5
    negatives: str = "separate"
    order: str = "level"

    def __post_init__(self):
        if self.levels not in (3, 4, 5):
            raise ValueError(f"levels must be 3, 4 or 5, got {self.levels}")
        if self.negatives not in ("separate", "absolute"):
            raise ValueError("negatives must be 'separate' or 'absolute'")
        if self.order not in ("level", "time"):
            raise ValueError("order must be 'level' or 'time'")


def hawk_frame_count(n_frames: int, levels: int = 5, negatives: str = "separate") -> int:
    """Closed-form number of output frames."""
    n = sum(n_frames - 2**lv + 1 for lv in range(1, levels + 1))
    return 2 * n if negatives == "separate" else n


def haar_details(frames: np.ndarray, level: int) -> np.ndarray:
    """Sliding half-mean difference over windows of ``2**level`` frames.

    Returns ``T - 2**level + 1`` signed detail frames. Each half is averaged
    independently, so a temporally constant stack gives exact zeros.
    """
    half = 2 ** (level - 1)
    means = sliding_window_view(frames, half, axis=0).mean(axis=-1)
    n = frames.shape[0] - 2 * half + 1
    return means[:n] - means[half:half + n]


def hawk_transform(stack, params: HawkParams | None = None) -> ImageStack:
    """Expand ``stack`` into rectified Haar-detail frames.

    ``level`` order emits all frames of level 1, then level 2, and so on;
    ``time`` order interleaves levels by window start. In ``separate`` mode the
    positive part of each detail frame directly precedes its negative part.
    """
    params = params or HawkParams()
    stack = check_stack(stack)
    t = stack.n_frames
    if t < 2**params.levels:
        raise ValueError(f"{params.levels}-level HAWK needs at least {2 ** params.levels} "
                         f"frames, got {t}")
    details = [haar_details(stack.frames, lv) for lv in range(1, params.levels + 1)]

    def rectified(d):
        if params.negatives == "separate":
            out = np.empty((2 * d.shape[0],) + d.shape[1:])
            out[0::2] = np.maximum(d, 0.0)
            out[1::2] = np.maximum(-d, 0.0)
            return out
        return np.abs(d)

    if params.order == "level":
        out = np.concatenate([rectified(d) for d in details])
    else:
        chunks = []
        for start in range(t - 1):
            for d in details:
                if start < d.shape[0]:
                    chunks.append(rectified(d[start:start + 1]))
        out = np.concatenate(chunks)
    prov = (f"{stack.provenance}+hawk(levels={params.levels},negatives={params.negatives},"
            f"order={params.order})")
    return stack.with_frames(out, provenance=prov, allow_negative=False)
