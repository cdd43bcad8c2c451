"""Independent reference computations used by the tests.

Each oracle is written the slow, obvious way and shares no code with the
package, so agreement is evidence rather than tautology.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import integrate, optimize, special


def histogram_entropy(trace, bins, lo, hi):
    """Shannon entropy in bits via np.histogram and an explicit loop."""
    counts, _ = np.histogram(np.clip(trace, lo, hi), bins=bins, range=(lo, hi))
    p = counts / counts.sum()
    h = 0.0
    for q in p:
        if q > 0:
            h -= q * math.log2(q)
    return h


def moment_cumulant(trace, order):
    """Zero-lag cumulant from raw moments via the classical moment-cumulant relations."""
    x = np.asarray(trace, dtype=float)
    m = [np.mean(x**k) for k in range(order + 1)]
    if order == 1:
        return m[1]
    if order == 2:
        return m[2] - m[1] ** 2
    if order == 3:
        return m[3] - 3 * m[2] * m[1] + 2 * m[1] ** 3
    if order == 4:
        return m[4] - 4 * m[3] * m[1] - 3 * m[2] ** 2 + 12 * m[2] * m[1] ** 2 - 6 * m[1] ** 4
    raise ValueError(order)


def _set_partitions(items):
    if len(items) == 1:
        yield [items]
        return
    first, rest = items[0], items[1:]
    for smaller in _set_partitions(rest):
        for i in range(len(smaller)):
            yield smaller[:i] + [[first] + smaller[i]] + smaller[i + 1:]
        yield [[first]] + smaller


def lagged_cumulant(trace, order):
    """Distinct-frame cumulant by explicit loops over windows and partitions."""
    x = np.asarray(trace, dtype=float)
    d = x - x.mean()
    n_win = len(x) - order + 1

    def joint(block):
        total = 0.0
        for t in range(n_win):
            p = 1.0
            for j in block:
                p *= d[t + j]
            total += p
        return total / n_win

    out = 0.0
    for part in _set_partitions(list(range(order))):
        if any(len(b) == 1 for b in part):
            continue
        k = len(part)
        term = (-1) ** (k - 1) * math.factorial(k - 1)
        for b in part:
            term *= joint(b)
        out += term
    return out


def covariance_eigenvalues(frames, origin, side):
    """Eigenvalues of A A^T for the window matrix, descending."""
    r0, c0 = origin
    t = frames.shape[0]
    a = np.empty((side * side, t))
    for k in range(t):
        a[:, k] = frames[k, r0:r0 + side, c0:c0 + side].reshape(-1)
    ev = np.linalg.eigvalsh(a @ a.T)
    return np.sort(np.clip(ev, 0, None))[::-1]


def direct_lag1_product(frames):
    """sum_t d_t d_{t+1} / (T - 1) by an explicit loop."""
    f = np.asarray(frames, dtype=float)
    d = f - f.mean(axis=0)
    acc = np.zeros(f.shape[1:])
    for t in range(f.shape[0] - 1):
        acc += d[t] * d[t + 1]
    return acc / (f.shape[0] - 1)


def bilinear_ramp(a, b, c):
    """Image and closed form of f(x, y) = a x + b y + c (x = column)."""
    def f(x, y):
        return a * np.asarray(x, float) + b * np.asarray(y, float) + c
    return f


def airy_fwhm_nm(wavelength_nm, na):
    """FWHM of (2 J1(v)/v)^2 by root finding."""
    v = optimize.brentq(lambda v: (2 * special.j1(v) / v) ** 2 - 0.5, 0.5, 3.0)
    return 2 * v * wavelength_nm / (2 * np.pi * na)


def born_wolf_focal_profile(wavelength_nm, na, n_medium, r_nm):
    """In-focus |int_0^1 J0(k NA r rho) rho drho|^2 by dense quadrature, 1 nm sampling."""
    k = 2 * np.pi / wavelength_nm
    out = np.empty(len(r_nm))
    for i, r in enumerate(r_nm):
        val, _ = integrate.quad(lambda rho: special.j0(k * na * r * rho) * rho, 0, 1,
                                epsabs=1e-13, limit=200)
        out[i] = val**2
    return out


def exhaustive_dip(values):
    """Dip between the two highest strict interior-or-edge local maxima by brute force."""
    v = list(values)
    n = len(v)
    peaks = []
    for i in range(n):
        left = v[i - 1] if i > 0 else -np.inf
        right = v[i + 1] if i < n - 1 else -np.inf
        if v[i] > left and v[i] > right:
            peaks.append(i)
    if len(peaks) < 2:
        return None
    best = sorted(peaks, key=lambda i: (-v[i], i))[:2]
    a, b = sorted(best)
    between = min(v[a:b + 1])
    return max(0.0, min(1.0, 1 - between / ((v[a] + v[b]) / 2)))


def trpp_mean(stack):
    """Mean of sqrt(max(R_t R_{t+1}, 0)) by explicit pairs."""
    r = np.asarray(stack, float)
    pairs = [np.sqrt(np.maximum(r[t] * r[t + 1], 0)) for t in range(r.shape[0] - 1)]
    return np.mean(pairs, axis=0)


def all_pairs(n):
    return list(itertools.combinations(range(n), 2))


def gaussian_spot(shape, center, sigma, amplitude=1.0):
    """2D Gaussian with ``center`` given as (row, col)."""
    rr, cc = np.mgrid[0:shape[0], 0:shape[1]]
    return amplitude * np.exp(-((rr - center[0]) ** 2 + (cc - center[1]) ** 2) / (2 * sigma**2))
