"""Sparse interpolation operators on a regular 2D grid."""

from __future__ import annotations

import numpy as np
from scipy import sparse


def keys_kernel(s: np.ndarray, a: float = -0.5) -> np.ndarray:
    """Keys cubic convolution kernel (Catmull-Rom for ``a = -0.5``)."""
    s = np.abs(s)
    out = np.zeros_like(s)
    near = s <= 1
    far = (s > 1) & (s < 2)
    out[near] = (a + 2) * s[near] ** 3 - (a + 3) * s[near] ** 2 + 1
    out[far] = a * s[far] ** 3 - 5 * a * s[far] ** 2 + 8 * a * s[far] - 4 * a
    return out


def bicubic_matrix(shape: tuple[int, int], rows, cols) -> sparse.csr_matrix:
    """Matrix ``A`` with ``A @ image.ravel()`` = bicubic samples at ``(rows, cols)``.

    Coordinates are in pixel units (pixel centres at integers). Taps outside
    the grid are clamped to the edge.
    """
    h, w = shape
    rows = np.asarray(rows, dtype=float).ravel()
    cols = np.asarray(cols, dtype=float).ravel()
    n = rows.size
    r0 = np.floor(rows).astype(np.int64)
    c0 = np.floor(cols).astype(np.int64)
    taps = np.arange(-1, 3)
    rt = r0[:, None] + taps[None, :]
    ct = c0[:, None] + taps[None, :]
    wr = keys_kernel(rows[:, None] - rt)
    wc = keys_kernel(cols[:, None] - ct)
    np.clip(rt, 0, h - 1, out=rt)
    np.clip(ct, 0, w - 1, out=ct)
    idx = (rt[:, :, None] * w + ct[:, None, :]).reshape(n, 16)
    wts = (wr[:, :, None] * wc[:, None, :]).reshape(n, 16)
    point = np.repeat(np.arange(n), 16)
    m = sparse.csr_matrix((wts.ravel(), (point, idx.ravel())), shape=(n, h * w))
    m.sum_duplicates()
    return m
