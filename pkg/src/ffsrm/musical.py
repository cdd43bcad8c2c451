"""Windowed-SVD subspace imaging (MUSICAL).

The stack is cut into overlapping square windows.  Each window's frames
form an ``N x T`` matrix (``N = side**2``) whose left singular vectors are
the eigenimages.  Eigenimages with ``log10(s_i / s_1) >= threshold`` span
the signal subspace, the rest (including the null space when ``T < N``)
the noise subspace.  For a hypothesised emitter position the in-focus PSF
sampled on the window pixels, ``g``, gives the indicator

    f = (||P_signal g|| / ||P_noise g||) ** alpha

evaluated on a sub-pixel grid and averaged where windows overlap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Image, OpticalConfig, ReconstructionResult, check_stack, subdivided_origin
from .optics import Psf3D, abbe_limits, lateral_slice, sample_lateral


THRESHOLD_RULES = ("low", "mid", "high")


class EmptySignalSpaceError(ValueError):
    """The threshold leaves no eigenimage in the signal subspace."""


def default_window_side(config: OpticalConfig | None = None) -> int:
    """Smallest odd integer >= 2 * (lateral Abbe limit / pixel) + 1."""
    config = config or OpticalConfig()
    lateral, _ = abbe_limits(config)
    side = int(np.ceil(2 * lateral / config.pixel_size_nm + 1))
    return side if side % 2 else side + 1


@dataclass(frozen=True)
class MusicalParams:
    threshold: float | str = "mid"
    alpha: float = 4.0
    subpixels: int = 10
    window_side: int | None = None
    ratio_cap: float = 1e3
    config: OpticalConfig = field(default_factory=OpticalConfig)

    def __post_init__(self):
        if self.subpixels < 1:
            raise ValueError("subpixels must be >= 1")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.window_side is not None and (self.window_side < 3 or self.window_side % 2 == 0):
            raise ValueError("window side must be odd and >= 3")
        if not (self.threshold in THRESHOLD_RULES or isinstance(self.threshold, (int, float))):
            raise ValueError("threshold must be a number (log10 units) or one of "
                             f"{THRESHOLD_RULES}")
        if not self.ratio_cap > 1:
            raise ValueError("ratio cap must exceed 1")

    @property
    def side(self) -> int:
        return self.window_side or default_window_side(self.config)


@dataclass(frozen=True)
class WindowSvd:
    """SVD of one window; ``eigenimages`` holds all ``N`` left singular vectors as columns."""

    origin: tuple[int, int]
    side: int
    singular_values: np.ndarray
    eigenimages: np.ndarray

    def log_spectrum(self) -> np.ndarray:
        """``log10(s_i / s_1)``, with ``-inf`` for zero singular values."""
        s = self.singular_values
        if s[0] <= 0:
            return np.full(s.shape, -np.inf)
        with np.errstate(divide="ignore"):
            return np.log10(s / s[0])

    def signal_mask(self, threshold: float) -> np.ndarray:
        if threshold > 0:
            raise EmptySignalSpaceError(f"threshold {threshold} > 0 leaves an empty signal space")
        mask = self.log_spectrum() >= threshold
        if not mask.any():
            raise EmptySignalSpaceError("no eigenimage passes the threshold")
        return mask


def window_svd(stack, origin: tuple[int, int], side: int) -> WindowSvd:
    """SVD of the ``side**2 x T`` matrix of vectorised window frames.

    Singular values are padded with zeros to length ``side**2`` so that the
    eigenimage basis is always complete.
    """
    frames = np.asarray(getattr(stack, "frames", stack), dtype=float)
    t, h, w = frames.shape
    r0, c0 = origin
    if r0 < 0 or c0 < 0 or r0 + side > h or c0 + side > w:
        raise ValueError(f"window at {origin} of side {side} leaves the {h}x{w} frame")
    if t < 2:
        raise ValueError("window SVD needs at least 2 frames")
    a = frames[:, r0:r0 + side, c0:c0 + side].reshape(t, side * side).T
    u, s, _ = np.linalg.svd(a, full_matrices=True)
    n = side * side
    sv = np.zeros(n)
    sv[:s.size] = s
    return WindowSvd((r0, c0), side, sv, u)


def window_origins(length: int, side: int, stride: int) -> list[int]:
    if length < side:
        raise ValueError(f"frame dimension {length} is smaller than the window ({side})")
    origins = list(range(0, length - side + 1, stride))
    if origins[-1] != length - side:
        origins.append(length - side)
    return origins


@dataclass(frozen=True)
class SpectrumReport:
    """Per-window log spectra and the range of the second singular values."""

    windows: tuple[tuple[int, int], ...]
    log_spectra: np.ndarray
    second_min: float
    second_mid: float
    second_max: float

    @property
    def second_values(self) -> np.ndarray:
        return self.log_spectra[:, 1]

    def threshold(self, rule: str) -> float:
        """``'low'``, ``'mid'`` or ``'high'`` end of the second-value range."""
        try:
            return {"low": self.second_min, "mid": self.second_mid,
                    "high": self.second_max}[rule]
        except KeyError:
            raise ValueError(f"threshold rule must be one of {THRESHOLD_RULES}") from None


def singular_value_spectrum(stack, params: MusicalParams | None = None) -> SpectrumReport:
    """Sorted log10 singular values (normalised per window) for every window."""
    params = params or MusicalParams()
    frames = np.asarray(getattr(stack, "frames", stack), dtype=float)
    side = params.side
    stride = max(side // 2, 1)
    _, h, w = frames.shape
    wins, spectra = [], []
    for r0 in window_origins(h, side, stride):
        for c0 in window_origins(w, side, stride):
            ws = window_svd(frames, (r0, c0), side)
            wins.append((r0, c0))
            spectra.append(ws.log_spectrum())
    spectra = np.array(spectra)
    second = spectra[:, 1]
    return SpectrumReport(tuple(wins), spectra, float(np.min(second)),
                          float(np.median(second)), float(np.max(second)))


def _psf_vectors(psf: Psf3D, pixel_size_nm: float, side: int, rows, cols) -> np.ndarray:
    """Unit-norm PSF vectors (``side**2 x P``) for emitters at window-relative points."""
    plane = lateral_slice(psf, 0.0)
    pr, pc = np.mgrid[0:side, 0:side]
    dy = (pr.ravel()[:, None] - np.ravel(rows)[None, :]) * pixel_size_nm
    dx = (pc.ravel()[:, None] - np.ravel(cols)[None, :]) * pixel_size_nm
    g = sample_lateral(psf, 0.0, dx, dy, plane=plane)
    norm = np.linalg.norm(g, axis=0)
    return g / np.where(norm > 0, norm, 1.0)


def _indicator_from_vectors(wsvd: WindowSvd, g: np.ndarray, threshold: float, alpha: float,
                            ratio_cap: float) -> np.ndarray:
    mask = wsvd.signal_mask(threshold)
    proj = wsvd.eigenimages.T @ g
    d_signal = np.sqrt(np.sum(proj[mask] ** 2, axis=0))
    d_noise = np.sqrt(np.sum(proj[~mask] ** 2, axis=0))
    ratio = np.minimum(d_signal / np.maximum(d_noise, d_signal / ratio_cap), ratio_cap)
    ratio = np.where(d_signal > 0, ratio, 0.0)
    return ratio**alpha


def musical_indicator(wsvd: WindowSvd, psf: Psf3D, test_point, threshold: float,
                      alpha: float = 4.0, pixel_size_nm: float = 80.0,
                      ratio_cap: float = 1e3):
    """Indicator for emitters hypothesised at ``test_point`` (row, col in frame pixels).

    ``test_point`` may be an array of shape ``(..., 2)``. The signal/noise
    distance ratio is capped at ``ratio_cap`` before raising to ``alpha``.
    """
    pts = np.asarray(test_point, dtype=float)
    lead = pts.shape[:-1]
    pts = pts.reshape(-1, 2)
    rows = pts[:, 0] - wsvd.origin[0]
    cols = pts[:, 1] - wsvd.origin[1]
    g = _psf_vectors(psf, pixel_size_nm, wsvd.side, rows, cols)
    f = _indicator_from_vectors(wsvd, g, threshold, alpha, ratio_cap)
    return f.reshape(lead) if lead else float(f[0])


def _region(origin: int, side: int, length: int) -> tuple[int, int]:
    """Pixel rows (inclusive) whose sub-pixels a window evaluates."""
    lo = 0 if origin == 0 else origin + 1
    hi = length - 1 if origin + side == length else origin + side - 2
    return lo, hi


def musical_reconstruct(stack, psf: Psf3D, params: MusicalParams | None = None
                        ) -> ReconstructionResult:
    """MUSICAL image on a ``subpixels``-times finer grid.

    Windows move with stride ``side // 2``. Each evaluates the sub-pixels of
    its interior (the window minus its outer pixel ring, extended to the
    frame edge for border windows); overlapping evaluations are averaged.
    A threshold rule (``'low'``, ``'mid'``, ``'high'``) picks the minimum,
    median or maximum of the per-window ``log10(s2/s1)`` values.
    """
    params = params or MusicalParams()
    stack = check_stack(stack, min_frames=2)
    frames = stack.frames
    _, h, w = frames.shape
    side, s = params.side, params.subpixels
    stride = max(side // 2, 1)
    px = stack.pixel_size_nm

    threshold = params.threshold
    spectrum = None
    if threshold in THRESHOLD_RULES:
        spectrum = singular_value_spectrum(stack, params)
        threshold = spectrum.threshold(params.threshold)
    threshold = float(threshold)

    acc = np.zeros((h * s, w * s))
    count = np.zeros((h * s, w * s))
    sub = (np.arange(max(h, w) * s) + 0.5) / s - 0.5
    vec_cache: dict = {}
    for r0 in window_origins(h, side, stride):
        rlo, rhi = _region(r0, side, h)
        for c0 in window_origins(w, side, stride):
            clo, chi = _region(c0, side, w)
            ws = window_svd(frames, (r0, c0), side)
            u0, u1 = rlo * s, (rhi + 1) * s
            v0, v1 = clo * s, (chi + 1) * s
            key = (rlo - r0, rhi - r0, clo - c0, chi - c0)
            if key not in vec_cache:
                rr, cc = np.meshgrid(sub[u0:u1] - r0, sub[v0:v1] - c0, indexing="ij")
                vec_cache[key] = _psf_vectors(psf, px, side, rr, cc)
            f = _indicator_from_vectors(ws, vec_cache[key], threshold, params.alpha,
                                        params.ratio_cap)
            acc[u0:u1, v0:v1] += f.reshape(u1 - u0, v1 - v0)
            count[u0:u1, v0:v1] += 1
    img = acc / count
    info = {"threshold": threshold, "alpha": params.alpha, "subpixels": s,
            "window_side": side, "stride": stride, "ratio_cap": params.ratio_cap,
            "normalisation": "per-window",
            "wavelength_nm": params.config.emission_wavelength_nm,
            "numerical_aperture": params.config.numerical_aperture}
    if spectrum is not None:
        info["threshold_rule"] = params.threshold
    return ReconstructionResult(Image(img, px / s, s, subdivided_origin(s)), "musical", info, stack.n_frames)
