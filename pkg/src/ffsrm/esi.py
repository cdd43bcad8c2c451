"""Entropy-weighted central-moment imaging (ESI).

Every pixel trace is scored by ``H(trace) * |m_n(trace)|`` where ``H`` is
the Shannon entropy (bits) of the trace histogram over the stack's global
intensity range and ``m_n`` the n-th central moment.  In-between pixels
are scored on a virtual trace, the per-frame geometric mean of the
neighbouring traces, which yields a ``(2H - 1) x (2W - 1)`` image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Image, ReconstructionResult, check_stack


@dataclass(frozen=True)
class EsiParams:
    order: int = 4
    bins: int = 100
    n_images: int = 1

    def __post_init__(self):
        if self.order < 2:
            raise ValueError("ESI moment order must be >= 2")
        if self.bins < 2:
            raise ValueError("ESI needs at least 2 histogram bins")
        if self.n_images < 1:
            raise ValueError("n_images must be >= 1")


def trace_entropy(traces, bins: int = 100, value_range: tuple[float, float] | None = None):
    """Shannon entropy in bits of each trace's histogram.

    ``traces`` has time on the last axis. Bins are equal-width over
    ``value_range`` (default: min and max of ``traces``). A degenerate
    range gives zero entropy.
    """
    x = np.asarray(traces, dtype=np.float64)
    if x.shape[-1] < 2:
        raise ValueError("entropy needs traces of length >= 2")
    lo, hi = value_range if value_range is not None else (x.min(), x.max())
    lead = x.shape[:-1]
    if not hi > lo:
        return np.zeros(lead) if lead else 0.0
    flat = x.reshape(-1, x.shape[-1])
    idx = np.floor((flat - lo) / (hi - lo) * bins).astype(np.int64)
    np.clip(idx, 0, bins - 1, out=idx)
    idx += (np.arange(flat.shape[0]) * bins)[:, None]
    counts = np.bincount(idx.ravel(), minlength=flat.shape[0] * bins)
    p = counts.reshape(flat.shape[0], bins) / flat.shape[1]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log2(p), 0.0)
    h = terms.sum(axis=1)
    return h.reshape(lead) if lead else float(h[0])


def central_moment(traces, n: int):
    """``mean((x - mean(x))**n)`` along the last axis."""
    x = np.asarray(traces, dtype=np.float64)
    if x.shape[-1] < 2:
        raise ValueError("central moment needs traces of length >= 2")
    d = x - x.mean(axis=-1, keepdims=True)
    return np.mean(d**n, axis=-1)


def _esi_score(traces, order, bins, value_range):
    return trace_entropy(traces, bins, value_range) * np.abs(central_moment(traces, order))


def esi_image(frames: np.ndarray, order: int = 4, bins: int = 100,
              value_range: tuple[float, float] | None = None) -> np.ndarray:
    """One ESI application on a ``(T, H, W)`` array, returning ``(2H-1, 2W-1)``."""
    frames = np.asarray(frames, dtype=np.float64)
    t, h, w = frames.shape
    if value_range is None:
        value_range = (frames.min(), frames.max())
    tr = np.moveaxis(frames, 0, -1)
    out = np.empty((2 * h - 1, 2 * w - 1))
    out[0::2, 0::2] = _esi_score(tr, order, bins, value_range)
    if w > 1:
        v = np.sqrt(tr[:, :-1] * tr[:, 1:])
        out[0::2, 1::2] = _esi_score(v, order, bins, value_range)
    if h > 1:
        v = np.sqrt(tr[:-1] * tr[1:])
        out[1::2, 0::2] = _esi_score(v, order, bins, value_range)
    if h > 1 and w > 1:
        v = np.sqrt(np.sqrt(tr[:-1, :-1] * tr[:-1, 1:] * tr[1:, :-1] * tr[1:, 1:]))
        out[1::2, 1::2] = _esi_score(v, order, bins, value_range)
    return out


def esi_reconstruct(stack, params: EsiParams | None = None) -> ReconstructionResult:
    """Run ESI on ``params.n_images`` consecutive equal sub-stacks.

    The histogram range is the min/max of each sub-stack. Trailing frames
    that do not fill a whole sub-stack are dropped.
    """
    params = params or EsiParams()
    stack = check_stack(stack, min_frames=2)
    t = stack.n_frames
    per = t // params.n_images
    if per < 2:
        raise ValueError(f"{params.n_images} output images need at least "
                         f"{2 * params.n_images} frames, got {t}")
    images = []
    for k in range(params.n_images):
        sub = stack.frames[k * per:(k + 1) * per]
        data = esi_image(sub, params.order, params.bins)
        images.append(Image(data, stack.pixel_size_nm / 2, 2))
    return ReconstructionResult(tuple(images), "esi",
                                {"order": params.order, "bins": params.bins,
                                 "n_images": params.n_images,
                                 "frames_per_image": per,
                                 "cross_pixel": "geometric_mean"},
                                t)
