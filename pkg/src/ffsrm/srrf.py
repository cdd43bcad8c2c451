"""Radiality mapping and temporal combination (SRRF).

For every centre ``c`` on the magnified grid, ``2 * axes`` gradient samples
are taken on a ring of radius ``ring_radius`` (input pixels) around ``c``.
Each sample contributes ``s_k (1 - d_k / r)**2`` where ``d_k`` is the
distance from ``c`` to the line through the sample along its gradient and
``s_k`` is +1 when the gradient points towards ``c``.  Because the sample
sits on the ring, ``d_k / r`` is just ``|sin|`` of the angle between the
gradient and the ring direction.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.ndimage import uniform_filter

from ._interp import bicubic_matrix
from .core import Image, ReconstructionResult, check_stack, subdivided_origin
from .sofi import cumulant

TEMPORAL_MODES = ("TRA", "TRPPM", "TRAC2", "TRAC3", "TRAC4")


@dataclass(frozen=True)
class SrrfParams:
    ring_radius: float = 0.5
    axes: int = 6
    magnification: int = 5
    temporal_mode: str = "TRAC2"
    intensity_weighting: bool = True
    gradient_smoothing: bool = False
    minimize_patterning: bool = False

    def __post_init__(self):
        if not self.ring_radius > 0:
            raise ValueError("ring radius must be positive")
        if self.axes < 2:
            raise ValueError("need at least 2 axes")
        if self.magnification < 1:
            raise ValueError("magnification must be >= 1")
        mode = self.temporal_mode.upper()
        if mode not in TEMPORAL_MODES:
            raise ValueError(f"temporal mode must be one of {TEMPORAL_MODES}")
        object.__setattr__(self, "temporal_mode", mode)


def magnified_centers(shape, magnification: int, offset=(0.0, 0.0)):
    """Input-grid coordinates of every magnified pixel centre (rows, cols)."""
    h, w = shape
    m = magnification
    r = (np.arange(h * m) + 0.5 + offset[0]) / m - 0.5
    c = (np.arange(w * m) + 0.5 + offset[1]) / m - 0.5
    return np.meshgrid(r, c, indexing="ij")


@lru_cache(maxsize=8)
def _operators(shape, magnification, ring_radius, axes, offset):
    rows, cols = magnified_centers(shape, magnification, offset)
    k = 2 * axes
    theta = 2 * np.pi * np.arange(k) / k
    ring = [bicubic_matrix(shape, rows + ring_radius * np.sin(t), cols + ring_radius * np.cos(t))
            for t in theta]
    center = bicubic_matrix(shape, rows, cols)
    return theta, ring, center


def radiality_at(frame: np.ndarray, rows, cols, ring_radius: float = 0.5, axes: int = 6,
                 intensity_weighting: bool = True, gradient_smoothing: bool = False):
    """Radiality of a single frame at arbitrary input-grid points."""
    frame = np.asarray(frame, dtype=float)
    rows = np.asarray(rows, dtype=float)
    cols = np.asarray(cols, dtype=float)
    gy, gx = _gradients(frame[None], gradient_smoothing)
    k = 2 * axes
    acc = np.zeros(rows.size)
    for t in 2 * np.pi * np.arange(k) / k:
        a = bicubic_matrix(frame.shape, rows + ring_radius * np.sin(t),
                           cols + ring_radius * np.cos(t))
        acc += _ring_term(a @ gx[0].ravel(), a @ gy[0].ravel(), t)
    r = acc / k
    if intensity_weighting:
        r *= bicubic_matrix(frame.shape, rows, cols) @ frame.ravel()
    return r.reshape(rows.shape)


def _gradients(frames, smoothing):
    gy = np.gradient(frames, axis=1) if frames.shape[1] > 1 else np.zeros_like(frames)
    gx = np.gradient(frames, axis=2) if frames.shape[2] > 1 else np.zeros_like(frames)
    if smoothing:
        gy = uniform_filter(gy, size=(1, 3, 3), mode="nearest")
        gx = uniform_filter(gx, size=(1, 3, 3), mode="nearest")
    return gy, gx


def _ring_term(gx, gy, theta):
    norm = np.hypot(gx, gy)
    c, s = np.cos(theta), np.sin(theta)
    with np.errstate(invalid="ignore", divide="ignore"):
        sin_dev = np.abs(c * gy - s * gx) / norm
        inward = -(c * gx + s * gy) > 0
        term = np.where(inward, 1.0, -1.0) * (1.0 - np.minimum(sin_dev, 1.0)) ** 2
    return np.where(norm > 0, term, 0.0)


def radiality_stack(frames: np.ndarray, params: SrrfParams, chunk: int = 32) -> np.ndarray:
    """Radiality maps for every frame of a ``(T, H, W)`` array."""
    frames = np.asarray(frames, dtype=float)
    t, h, w = frames.shape
    m = params.magnification
    k = 2 * params.axes
    if params.minimize_patterning:
        q = 0.25
        offsets = ((-q, -q), (-q, q), (q, -q), (q, q))
    else:
        offsets = ((0.0, 0.0),)
    out = np.zeros((t, h * m, w * m))
    for s in range(0, t, chunk):
        block = frames[s:s + chunk]
        gy, gx = _gradients(block, params.gradient_smoothing)
        n = block.shape[0]
        gx_f = gx.reshape(n, -1).T
        gy_f = gy.reshape(n, -1).T
        img_f = block.reshape(n, -1).T
        acc = np.zeros((h * m * w * m, n))
        for off in offsets:
            theta, ring, center = _operators((h, w), m, float(params.ring_radius),
                                             int(params.axes), off)
            r = np.zeros_like(acc)
            for th, a in zip(theta, ring):
                r += _ring_term(a @ gx_f, a @ gy_f, th)
            r /= k
            if params.intensity_weighting:
                r *= center @ img_f
            acc += r
        acc /= len(offsets)
        out[s:s + n] = acc.T.reshape(n, h * m, w * m)
    return out


def radiality_map(frame, params: SrrfParams | None = None) -> Image:
    """Radiality of one frame on the magnified grid."""
    params = params or SrrfParams()
    frame = np.asarray(getattr(frame, "data", frame), dtype=float)
    if frame.ndim != 2 or min(frame.shape) < 3:
        raise ValueError("radiality needs a 2D frame of at least 3 x 3 pixels")
    data = radiality_stack(frame[None], params)[0]
    m = params.magnification
    return Image(data, 1.0 / m, m, subdivided_origin(m))


def temporal_combine(radiality, mode: str = "TRAC2") -> np.ndarray:
    """Collapse a ``(T, ...)`` radiality stack into one image.

    TRA is the mean, TRPPM the mean of ``sqrt(max(R_t R_{t+1}, 0))`` over
    consecutive pairs, TRAC-n the magnitude of the distinct-frame order-n
    cumulant.
    """
    r = np.asarray(radiality, dtype=float)
    mode = mode.upper()
    t = r.shape[0]
    if mode not in TEMPORAL_MODES:
        raise ValueError(f"unknown temporal mode {mode!r}")
    if t < 2:
        raise ValueError("temporal combination needs at least 2 frames")
    if mode == "TRA":
        return r.mean(axis=0)
    if mode == "TRPPM":
        return np.sqrt(np.maximum(r[:-1] * r[1:], 0.0)).mean(axis=0)
    order = int(mode[-1])
    if t < order + 1:
        raise ValueError(f"{mode} needs at least {order + 1} frames, got {t}")
    return np.abs(cumulant(r, order, "distinct_frames"))


def srrf_reconstruct(stack, params: SrrfParams | None = None) -> ReconstructionResult:
    params = params or SrrfParams()
    stack = check_stack(stack, min_frames=2)
    if min(stack.shape[1:]) < 3:
        raise ValueError("SRRF needs frames of at least 3 x 3 pixels")
    r = radiality_stack(stack.frames, params)
    img = temporal_combine(r, params.temporal_mode)
    m = params.magnification
    return ReconstructionResult(
        Image(img, stack.pixel_size_nm / m, m, subdivided_origin(m)), "srrf",
        {"ring_radius": params.ring_radius, "axes": params.axes, "magnification": m,
         "temporal_mode": params.temporal_mode,
         "intensity_weighting": params.intensity_weighting,
         "gradient_smoothing": params.gradient_smoothing,
         "minimize_patterning": params.minimize_patterning},
        stack.n_frames)
