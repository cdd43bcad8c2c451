"""Autocorrelation two-step deconvolution (SACD).

Pipeline: Fourier upsampling of every frame, Richardson-Lucy deconvolution
per frame, a multi-plane autocorrelation (MPAC) statistic over time, and a
second Richardson-Lucy pass with the PSF raised to a power.

MPAC here averages the magnitude of the distinct-frame cumulant computed on
the stack itself and on copies binned by 2 and 4 frames, which keeps the
statistic usable when only a few frames are available.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft, signal

from .core import Image, OpticalConfig, ReconstructionResult, check_stack
from .optics import Psf3D, abbe_limits, focal_kernel, psf_power
from .sofi import MAX_KERNEL_ORDER, cumulant


@dataclass(frozen=True)
class SacdParams:
    magnification: int = 8
    lr_iterations: int = 10
    mpac_order: int = 2
    psf_power: float | None = None
    planes: tuple[int, ...] = (1, 2, 4)

    def __post_init__(self):
        if self.magnification < 1:
            raise ValueError("magnification must be >= 1")
        if self.lr_iterations < 0:
            raise ValueError("iteration count must be >= 0")
        if not 2 <= self.mpac_order <= MAX_KERNEL_ORDER:
            raise ValueError(f"MPAC order must be in 2..{MAX_KERNEL_ORDER}")
        if self.psf_power is not None and self.psf_power < 1:
            raise ValueError("PSF power must be >= 1")
        if not self.planes or 1 not in self.planes:
            raise ValueError("MPAC planes must include the unbinned stack (1)")

    @property
    def effective_psf_power(self) -> float:
        return float(self.mpac_order if self.psf_power is None else self.psf_power)


def fourier_interpolate(data, magnification: int) -> np.ndarray:
    """Upsample the last two axes by zero-padding the spectrum.

    Output sample ``j`` sits at input coordinate ``j / magnification``.
    Ringing negatives are clamped to zero.
    """
    x = np.asarray(data, dtype=float)
    if magnification < 1:
        raise ValueError("magnification must be >= 1")
    if magnification == 1:
        return np.clip(x.copy(), 0.0, None)
    h, w = x.shape[-2:]
    out = signal.resample(x, h * magnification, axis=-2)
    out = signal.resample(out, w * magnification, axis=-1)
    return np.clip(out, 0.0, None)


class _FftConvolver:
    """Linear 'same' convolution of a batch of images with a fixed odd kernel."""

    def __init__(self, kernel: np.ndarray, image_shape: tuple[int, int]):
        kh, kw = kernel.shape
        if kh % 2 == 0 or kw % 2 == 0:
            raise ValueError("kernel dimensions must be odd")
        h, w = image_shape
        self.shape = (fft.next_fast_len(h + kh - 1, real=True),
                      fft.next_fast_len(w + kw - 1, real=True))
        self.crop = (slice(kh // 2, kh // 2 + h), slice(kw // 2, kw // 2 + w))
        self.k = fft.rfft2(kernel, self.shape)
        self.k_flip = fft.rfft2(kernel[::-1, ::-1], self.shape)

    def __call__(self, x, flipped=False):
        spec = fft.rfft2(x, self.shape, axes=(-2, -1))
        spec *= self.k_flip if flipped else self.k
        full = fft.irfft2(spec, self.shape, axes=(-2, -1))
        return full[(...,) + self.crop]


def lucy_richardson(image, kernel, iterations: int = 10, chunk: int = 8) -> np.ndarray:
    """Richardson-Lucy deconvolution of one image or a ``(T, H, W)`` batch.

    ``kernel`` must be non-negative with unit sum. The estimate starts at the
    data; the ratio denominator is floored at ``1e-12 * max(data)``.
    """
    data = np.asarray(image, dtype=float)
    kernel = np.asarray(kernel, dtype=float)
    if np.any(kernel < 0) or abs(kernel.sum() - 1.0) > 1e-6:
        raise ValueError(f"kernel must be non-negative with unit sum (sum={kernel.sum():.6g})")
    if np.any(data < 0):
        raise ValueError("Richardson-Lucy needs non-negative data")
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    if iterations == 0:
        return data.copy()
    squeeze = data.ndim == 2
    batch = data[None] if squeeze else data.reshape((-1,) + data.shape[-2:])
    conv = _FftConvolver(kernel, batch.shape[-2:])
    out = np.empty_like(batch)
    for s in range(0, batch.shape[0], chunk):
        d = batch[s:s + chunk]
        eps = 1e-12 * max(d.max(), 1e-300)
        est = d.copy()
        for _ in range(iterations):
            ratio = d / np.maximum(conv(est), eps)
            est = np.maximum(est * conv(ratio, flipped=True), 0.0)
        out[s:s + chunk] = est
    return out[0] if squeeze else out.reshape(data.shape)


def _bin_frames(frames: np.ndarray, b: int) -> np.ndarray:
    if b == 1:
        return frames
    n = frames.shape[0] // b
    return frames[:n * b].reshape((n, b) + frames.shape[1:]).mean(axis=1)


def mpac(stack, order: int = 2, planes=(1, 2, 4), return_planes: bool = False):
    """Multi-plane autocorrelation image.

    Averages ``|distinct-frame cumulant|`` over the stack binned by each
    factor in ``planes``; binned copies too short for the order (fewer
    than ``order + 1`` frames) are skipped. Requires ``T >= 2 * order``.
    """
    frames = np.asarray(getattr(stack, "frames", stack), dtype=float)
    t = frames.shape[0]
    if t < 2 * order:
        raise ValueError(f"order-{order} MPAC needs at least {2 * order} frames, got {t}")
    used, acc = [], None
    for b in planes:
        binned = _bin_frames(frames, b)
        if binned.shape[0] < order + 1:
            continue
        mag = np.abs(cumulant(binned, order, "distinct_frames"))
        acc = mag if acc is None else acc + mag
        used.append(b)
    out = acc / len(used)
    return (out, tuple(used)) if return_planes else out


def sacd_kernel(psf: Psf3D, pixel_size_nm: float, config: OpticalConfig | None = None):
    """In-focus unit-sum kernel on the magnified grid, cropped to +-3 lateral Abbe limits."""
    lateral, _ = abbe_limits(config or OpticalConfig(psf.wavelength_nm, psf.numerical_aperture))
    half = int(np.ceil(3 * lateral / pixel_size_nm))
    half = min(half, int(np.floor(psf.lateral_extent_nm / pixel_size_nm)))
    return focal_kernel(psf, pixel_size_nm, half)


def sacd_reconstruct(stack, psf, params: SacdParams | None = None,
                     config: OpticalConfig | None = None) -> ReconstructionResult:
    """Run the full SACD pipeline.

    ``psf`` is either a :class:`Psf3D` (the focal slice is resampled to the
    magnified pixel size) or a 2D unit-sum kernel already on that grid.
    """
    params = params or SacdParams()
    stack = check_stack(stack)
    m = params.magnification
    sub_px = stack.pixel_size_nm / m
    if isinstance(psf, Psf3D):
        kernel = sacd_kernel(psf, sub_px, config)
    else:
        kernel = np.asarray(psf, dtype=float)
        kernel = kernel / kernel.sum()
    if stack.n_frames < 2 * params.mpac_order:
        raise ValueError(f"order-{params.mpac_order} SACD needs at least "
                         f"{2 * params.mpac_order} frames, got {stack.n_frames}")

    up = fourier_interpolate(stack.frames, m)
    deconv = lucy_richardson(up, kernel, params.lr_iterations)
    corr, used = mpac(deconv, params.mpac_order, params.planes, return_planes=True)
    final = lucy_richardson(corr, psf_power(kernel, params.effective_psf_power),
                            params.lr_iterations)
    return ReconstructionResult(
        Image(final, sub_px, m), "sacd",
        {"magnification": m, "lr_iterations": params.lr_iterations,
         "mpac_order": params.mpac_order, "psf_power": params.effective_psf_power,
         "mpac_planes": list(used), "mpac_variant": "binned-planes-magnitude-average"},
        stack.n_frames)
