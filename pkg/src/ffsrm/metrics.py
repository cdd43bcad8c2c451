"""Line profiles, Gaussian FWHM fits, SBR, two-peak dips and gamma display.

Points are ``(x, y)`` in pixel units of the image being measured, with
pixel centres at integer coordinates (``x`` = column, ``y`` = row).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.ndimage import map_coordinates

FWHM_PER_SIGMA = 2.0 * np.sqrt(2.0 * np.log(2.0))


class FitError(RuntimeError):
    def __init__(self, message: str, residual: float | None = None):
        self.residual = residual
        super().__init__(message)


@dataclass(frozen=True)
class LineProfile:
    start: tuple[float, float]
    end: tuple[float, float]
    spacing: float
    values: np.ndarray
    width: int = 1

    @property
    def positions(self) -> np.ndarray:
        """Distance of each sample from ``start``, in pixels."""
        return np.arange(self.values.size) * self.spacing


@dataclass(frozen=True)
class FwhmResult:
    fwhm_nm: float
    amplitude: float
    center: float
    sigma: float
    offset: float
    residual_norm: float


def line_profile(image, p0, p1, width: int = 1) -> LineProfile:
    """Bilinear samples at ~1 pixel spacing from ``p0`` to ``p1`` (both included).

    ``width`` parallel lines, offset perpendicular to the segment by whole
    pixels and centred on it, are averaged.
    """
    img = np.asarray(getattr(image, "data", image), dtype=float)
    h, w = img.shape
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    for p in (p0, p1):
        if not (0 <= p[0] <= w - 1 and 0 <= p[1] <= h - 1):
            raise ValueError(f"endpoint {tuple(p)} lies outside the {w}x{h} image")
    if width < 1:
        raise ValueError("line width must be >= 1")
    length = float(np.hypot(*(p1 - p0)))
    n = max(int(round(length)), 1) + 1
    t = np.linspace(0.0, 1.0, n)
    xs = p0[0] + t * (p1[0] - p0[0])
    ys = p0[1] + t * (p1[1] - p0[1])
    if length > 0:
        normal = np.array([-(p1[1] - p0[1]), p1[0] - p0[0]]) / length
    else:
        normal = np.array([0.0, 1.0])
    vals = np.zeros(n)
    for k in range(width):
        o = k - (width - 1) / 2
        vals += map_coordinates(img, [ys + o * normal[1], xs + o * normal[0]], order=1,
                                mode="nearest")
    vals /= width
    return LineProfile(tuple(p0), tuple(p1), length / (n - 1), vals, width)


def _gauss(x, amp, center, sigma, offset):
    return amp * np.exp(-0.5 * ((x - center) / sigma) ** 2) + offset


def gaussian_fit_fwhm(profile, pixel_to_nm: float = 1.0, max_nfev: int = 2000) -> FwhmResult:
    """Least-squares Gaussian-plus-offset fit; FWHM = 2.3548 sigma in nm.

    ``profile`` is a :class:`LineProfile` or a 1D array sampled at unit
    spacing. ``pixel_to_nm`` converts one sample step to nm.
    """
    if isinstance(profile, LineProfile):
        y = np.asarray(profile.values, dtype=float)
        x = profile.positions
    else:
        y = np.asarray(profile, dtype=float)
        x = np.arange(y.size, dtype=float)
    if y.size < 4:
        raise FitError("need at least 4 samples to fit a Gaussian")
    if not (y.max() > y[0] and y.max() > y[-1]):
        raise FitError("profile has no peak above its endpoints")

    offset0 = y.min()
    wts = y - offset0
    center0 = float(np.sum(wts * x) / wts.sum())
    sigma0 = float(np.sqrt(max(np.sum(wts * (x - center0) ** 2) / wts.sum(), 1e-12)))
    span = x[-1] - x[0]
    sigma0 = min(max(sigma0, 1e-3 * span), span)
    amp0 = y.max() - offset0
    scale = max(amp0, 1e-300)

    def resid(p):
        return (_gauss(x, *p) - y) / scale

    lo = [0.0, x[0], 1e-6 * span, -np.inf]
    hi = [np.inf, x[-1], 2 * span, np.inf]
    res = optimize.least_squares(resid, [amp0, center0, sigma0, offset0], bounds=(lo, hi),
                                 x_scale=[scale, 1.0, 1.0, scale], method="trf",
                                 xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_nfev)
    rnorm = float(np.linalg.norm(res.fun) * scale)
    if res.status <= 0:
        raise FitError(f"Gaussian fit did not converge ({res.message})", rnorm)
    amp, center, sigma, offset = res.x
    return FwhmResult(float(FWHM_PER_SIGMA * sigma * pixel_to_nm), float(amp), float(center),
                      float(sigma), float(offset), rnorm)


def sbr(image, object_region, background_region) -> float:
    """Mean of the object region divided by mean of the background region.

    Regions are boolean masks or anything usable as an index into the image.
    """
    img = np.asarray(getattr(image, "data", image), dtype=float)
    obj = np.asarray(img[object_region], dtype=float)
    bg = np.asarray(img[background_region], dtype=float)
    if obj.size == 0 or bg.size == 0:
        raise ValueError("regions must be non-empty")
    om, bm = _as_mask(img.shape, object_region), _as_mask(img.shape, background_region)
    if np.any(om & bm):
        raise ValueError("object and background regions overlap")
    bg_mean = bg.mean()
    if bg_mean <= 0:
        raise ValueError("background mean must be positive")
    return float(obj.mean() / bg_mean)


def _as_mask(shape, region) -> np.ndarray:
    m = np.zeros(shape, dtype=bool)
    m[region] = True
    return m


def local_maxima(values, include_endpoints: bool = True) -> list[int]:
    """Indices of local maxima; plateaus report their first index.

    Endpoints count when they exceed their single neighbour, unless
    ``include_endpoints`` is false.
    """
    v = np.asarray(values, dtype=float)
    n = v.size
    out = []
    i = 0
    while i < n:
        j = i
        while j + 1 < n and v[j + 1] == v[i]:
            j += 1
        left_ok = i == 0 or v[i - 1] < v[i]
        right_ok = j == n - 1 or v[j + 1] < v[i]
        at_end = i == 0 or j == n - 1
        if left_ok and right_ok and not (i == 0 and j == n - 1) \
                and (include_endpoints or not at_end):
            out.append(i)
        i = j + 1
    return out


def dip_ratio(profile, include_endpoints: bool = True) -> float | None:
    """``1 - min_between / mean(peaks)`` for the two highest local maxima.

    Equal peak heights are ranked by position, lowest index first.
    Returns ``None`` when the profile has fewer than two local maxima. The
    result is clipped to [0, 1]; signed images (odd-order cumulants) can
    otherwise dip below zero between peaks.
    """
    v = np.asarray(getattr(profile, "values", profile), dtype=float)
    if v.size < 3:
        raise ValueError("need at least 3 samples")
    peaks = local_maxima(v, include_endpoints)
    if len(peaks) < 2:
        return None
    top = sorted(sorted(peaks, key=lambda i: -v[i])[:2])
    a, b = top
    between = v[a:b + 1].min()
    mean_peak = 0.5 * (v[a] + v[b])
    if mean_peak <= 0:
        return None
    return float(np.clip(1.0 - between / mean_peak, 0.0, 1.0))


def intensity_adjust(image, gamma: float = 0.5) -> np.ndarray:
    """Normalise to [0, 1] by the maximum and raise to ``gamma``."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    img = np.clip(np.asarray(getattr(image, "data", image), dtype=float), 0.0, None)
    peak = img.max()
    if peak <= 0:
        raise ValueError("cannot adjust an all-zero image")
    return (img / peak) ** gamma


def normalized_l2_difference(a, b) -> float:
    """``|| a/||a|| - b/||b|| ||`` for two images of the same shape."""
    a = np.asarray(getattr(a, "data", a), dtype=float)
    b = np.asarray(getattr(b, "data", b), dtype=float)
    if a.shape != b.shape:
        raise ValueError("images must have the same shape")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cannot normalise an all-zero image")
    return float(np.linalg.norm(a / na - b / nb))
