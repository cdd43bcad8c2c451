"""Measurements placed from the ground truth rather than by hand.

All functions take an :class:`~ffsrm.core.Image` whose ``to_pixel`` maps
sample coordinates (nm) onto its grid, so the same probe lands on the same
physical line for every method regardless of magnification.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates
from scipy.spatial import cKDTree

from .core import Image
from .metrics import FitError, LineProfile, dip_ratio, gaussian_fit_fwhm, line_profile, local_maxima
from .simulator import EmitterSet, Strand, Torus

RESOLVED_DIP = 0.2
# Maxima below this fraction of the profile maximum are background ripple.
# A torus's inner wall carries half the per-angle emitters of the outer one
# (radius R - r vs R + r), so genuine wall peaks stay well above it.
PEAK_FLOOR = 0.25


@dataclass(frozen=True)
class ProbeResult:
    name: str
    profile: LineProfile
    spacing_nm: float
    dip: float | None
    n_maxima: int
    peak_separation_nm: float | None

    @property
    def resolved(self) -> bool:
        return self.dip is not None and self.dip >= RESOLVED_DIP


def _clip_point(image: Image, p):
    h, w = image.shape
    return (float(np.clip(p[0], 0, w - 1)), float(np.clip(p[1], 0, h - 1)))


def _summarise(name, image, prof: LineProfile) -> ProbeResult:
    step_nm = prof.spacing * image.pixel_size_nm
    v = prof.values
    peaks = local_maxima(v, include_endpoints=False)
    if peaks:
        top = max(v[i] for i in peaks)
        peaks = [i for i in peaks if v[i] >= PEAK_FLOOR * top]
    sep = dip = None
    if len(peaks) >= 2:
        a, b = sorted(sorted(peaks, key=lambda i: -v[i])[:2])
        sep = (b - a) * step_nm
        dip = dip_ratio(v[a:b + 1])
    return ProbeResult(name, prof, step_nm, dip, len(peaks), sep)


def pair_probe(image: Image, emitters: EmitterSet, extension: float = 1.0) -> ProbeResult:
    """Profile along the axis through a two-emitter sample.

    Probe summaries count interior maxima only: the line is built to extend
    past the structure, so an endpoint maximum is noise, not a peak.

    The line is centred on the pair midpoint and extends ``extension``
    separations beyond each emitter.
    """
    if len(emitters) != 2:
        raise ValueError("pair probe needs exactly two emitters")
    p = emitters.positions[:, :2]
    d = p[1] - p[0]
    a = p[0] - extension * d
    b = p[1] + extension * d
    xs, ys = image.to_pixel([a[0], b[0]], [a[1], b[1]])
    prof = line_profile(image, _clip_point(image, (xs[0], ys[0])),
                        _clip_point(image, (xs[1], ys[1])))
    return _summarise("pair", image, prof)


def torus_radial_probe(image: Image, torus: Torus, n_angles: int = 8,
                       margin_nm: float | None = None, name: str = "torus") -> ProbeResult:
    """Mean of ``n_angles`` width-1 radial profiles across the torus tube.

    Each runs from ``R - r - margin`` to ``R + r + margin`` (margin defaults
    to ``1.5 r``) along equally spaced directions from the centre. Lines are
    cut short at the image border, so profiles are averaged over their
    common length.
    """
    cx, cy, _ = torus.center
    big, small = torus.major_radius_nm, torus.minor_radius_nm
    margin = 1.5 * small if margin_nm is None else margin_nm
    r0, r1 = max(big - small - margin, 0.0), big + small + margin
    profiles = []
    for th in 2 * np.pi * np.arange(n_angles) / n_angles:
        c, s = np.cos(th), np.sin(th)
        xs, ys = image.to_pixel([cx + r0 * c, cx + r1 * c], [cy + r0 * s, cy + r1 * s])
        profiles.append(line_profile(image, _clip_point(image, (xs[0], ys[0])),
                                     _clip_point(image, (xs[1], ys[1]))))
    n = min(p.values.size for p in profiles)
    vals = np.mean([p.values[:n] for p in profiles], axis=0)
    first = profiles[0]
    prof = LineProfile(first.start, first.end, first.spacing, vals, 1)
    return _summarise(name, image, prof)


def _segment_distance_xy(points: np.ndarray, strand: Strand) -> np.ndarray:
    a = np.asarray(strand.start[:2], float)
    b = np.asarray(strand.end[:2], float)
    d = b - a
    t = np.clip(((points - a) @ d) / (d @ d), 0.0, 1.0)
    return np.linalg.norm(points - (a + t[:, None] * d), axis=1)


def strand_samples(image: Image, strands, index: int, exclusion_nm: float = 400.0,
                   step_nm: float | None = None) -> np.ndarray:
    """Bilinear image values along strand ``index``, skipping crossings.

    Samples closer (in the xy projection) than ``exclusion_nm`` to any other
    strand are dropped.
    """
    s = strands[index]
    step = step_nm or image.pixel_size_nm / 2
    n = max(int(np.ceil(s.length_nm / step)), 1) + 1
    t = np.linspace(0.0, 1.0, n)
    pts = np.asarray(s.start[:2]) + t[:, None] * (np.subtract(s.end[:2], s.start[:2]))
    keep = np.ones(n, bool)
    for j, other in enumerate(strands):
        if j != index:
            keep &= _segment_distance_xy(pts, other) > exclusion_nm
    pts = pts[keep]
    xs, ys = image.to_pixel(pts[:, 0], pts[:, 1])
    h, w = image.shape
    inside = (xs >= 0) & (xs <= w - 1) & (ys >= 0) & (ys <= h - 1)
    return map_coordinates(image.data, [ys[inside], xs[inside]], order=1)


def out_of_focus_ratio(image: Image, strands, focus_tol_nm: float = 1.0,
                       exclusion_nm: float = 400.0) -> float:
    """Mean intensity along constant-depth defocused strands over the in-focus ones."""
    in_focus, defocus = [], []
    for i, s in enumerate(strands):
        z0, z1 = s.start[2], s.end[2]
        if abs(z0 - z1) > focus_tol_nm:
            continue
        (in_focus if abs(z0) <= focus_tol_nm else defocus).append(i)
    if not in_focus or not defocus:
        raise ValueError("need at least one in-focus and one defocused constant-depth strand")
    num = np.concatenate([strand_samples(image, strands, i, exclusion_nm) for i in defocus])
    den = np.concatenate([strand_samples(image, strands, i, exclusion_nm) for i in in_focus])
    return float(num.mean() / den.mean())


def strand_fwhm(image: Image, strand: Strand, half_length_nm: float = 600.0,
                at: float = 0.25) -> float | None:
    """Gaussian FWHM (nm) across a strand, ``at`` of the way along it.

    Returns ``None`` if the fit fails.
    """
    a = np.asarray(strand.start[:2], float)
    b = np.asarray(strand.end[:2], float)
    c = a + at * (b - a)
    d = (b - a) / np.linalg.norm(b - a)
    nrm = np.array([-d[1], d[0]])
    p0, p1 = c - half_length_nm * nrm, c + half_length_nm * nrm
    xs, ys = image.to_pixel([p0[0], p1[0]], [p0[1], p1[1]])
    prof = line_profile(image, _clip_point(image, (xs[0], ys[0])),
                        _clip_point(image, (xs[1], ys[1])))
    try:
        return gaussian_fit_fwhm(prof, image.pixel_size_nm).fwhm_nm
    except FitError:
        return None


def background_mask(image: Image, emitters: EmitterSet, distance_nm: float) -> np.ndarray:
    """Output pixels farther than ``distance_nm`` (xy) from every emitter."""
    h, w = image.shape
    src = image.pixel_size_nm * image.upscale_factor
    m = image.upscale_factor
    cols = (np.arange(w) / m + image.origin_px + 0.5) * src
    rows = (np.arange(h) / m + image.origin_px + 0.5) * src
    yy, xx = np.meshgrid(rows, cols, indexing="ij")
    tree = cKDTree(emitters.positions[:, :2])
    dist, _ = tree.query(np.column_stack([xx.ravel(), yy.ravel()]),
                         distance_upper_bound=distance_nm)
    return np.isinf(dist).reshape(h, w)


def relative_background(image: Image, emitters: EmitterSet, distance_nm: float) -> float | None:
    """Mean over the emitter-free region divided by the image maximum."""
    mask = background_mask(image, emitters, distance_nm)
    peak = float(np.max(image.data))
    if not mask.any() or peak <= 0:
        return None
    return float(image.data[mask].mean() / peak)
