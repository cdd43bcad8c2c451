"""Shared image, configuration and result types.

Stacks are stored frame-major (``T x H x W``) as float64.  Every
reconstructor funnels its input through :func:`check_stack`, which applies
the same rules as :func:`validate_stack`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np


class StackValidationError(ValueError):
    """Raised when an image stack violates the stack invariants."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        super().__init__("; ".join(report.messages))


@dataclass(frozen=True)
class ImageStack:
    """A ``T x H x W`` stack of intensities with its pixel size.

    Parameters
    ----------
    frames : array_like
        Frame-major intensity array. Converted to a read-only float64 array.
    pixel_size_nm : float
        Lateral camera pixel size in nanometres.
    provenance : str, optional
        Free-text description of where the stack came from.
    allow_negative : bool
        Derived stacks (e.g. Haar details before rectification) may carry
        negative values when this flag is set.
    """

    frames: np.ndarray
    pixel_size_nm: float = 80.0
    provenance: str = ""
    allow_negative: bool = False

    def __post_init__(self):
        arr = np.array(self.frames, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[np.newaxis]
        arr.setflags(write=False)
        object.__setattr__(self, "frames", arr)
        if not self.pixel_size_nm > 0:
            raise ValueError(f"pixel_size_nm must be positive, got {self.pixel_size_nm!r}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.frames.shape

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    def traces(self) -> np.ndarray:
        """Return a contiguous ``(H*W, T)`` copy with one temporal trace per row."""
        t, h, w = self.frames.shape
        return np.ascontiguousarray(self.frames.reshape(t, h * w).T)

    def with_frames(self, frames, **changes) -> "ImageStack":
        kw = dict(pixel_size_nm=self.pixel_size_nm, provenance=self.provenance,
                  allow_negative=self.allow_negative)
        kw.update(changes)
        return ImageStack(frames, **kw)


@dataclass(frozen=True)
class Image:
    """A reconstructed (possibly upsampled) 2D image.

    ``origin_px`` is the position of output pixel ``(0, 0)`` in source-pixel
    coordinates (source pixel centres at integers). Grids that subdivide
    each source pixel have ``(1 - M) / (2 M)``; grids that start on the first
    source pixel centre have 0.
    """

    data: np.ndarray
    pixel_size_nm: float
    upscale_factor: int = 1
    origin_px: float = 0.0

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"Image data must be 2D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("Image data contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        if int(self.upscale_factor) < 1:
            raise ValueError("upscale_factor must be a positive integer")

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def to_pixel(self, x_nm, y_nm):
        """Map sample coordinates in nm to (x, y) output pixel coordinates."""
        src = self.pixel_size_nm * self.upscale_factor
        m = self.upscale_factor
        x = (np.asarray(x_nm, dtype=float) / src - 0.5 - self.origin_px) * m
        y = (np.asarray(y_nm, dtype=float) / src - 0.5 - self.origin_px) * m
        return x, y


def subdivided_origin(magnification: int) -> float:
    return (1.0 - magnification) / (2.0 * magnification)


@dataclass(frozen=True)
class OpticalConfig:
    """Widefield imaging parameters.

    Defaults reproduce the simulated system: 510 nm emission, 1.42 NA oil
    objective, 80 nm projected pixels and index-matched immersion/sample.
    """

    emission_wavelength_nm: float = 510.0
    numerical_aperture: float = 1.42
    pixel_size_nm: float = 80.0
    immersion_refractive_index: float = 1.515
    sample_refractive_index: float = 1.515

    def __post_init__(self):
        if not 300.0 <= self.emission_wavelength_nm <= 1000.0:
            raise ValueError("emission wavelength must lie in [300, 1000] nm, "
                             f"got {self.emission_wavelength_nm}")
        if not 0.0 < self.numerical_aperture < self.immersion_refractive_index:
            raise ValueError("numerical aperture must satisfy 0 < NA < immersion index, "
                             f"got NA={self.numerical_aperture}")
        if not self.pixel_size_nm > 0:
            raise ValueError("pixel size must be positive")
        if not self.sample_refractive_index > 0:
            raise ValueError("sample refractive index must be positive")


@dataclass(frozen=True)
class ReconstructionResult:
    """Output of a reconstruction with everything needed to rerun it.

    ``images`` usually holds a single image; ESI with several output images
    stores one per sub-stack.
    """

    images: tuple[Image, ...]
    method: str
    parameters: Mapping[str, Any] = field(default_factory=dict)
    input_frame_count: int = 0

    def __post_init__(self):
        if isinstance(self.images, Image):
            object.__setattr__(self, "images", (self.images,))
        else:
            object.__setattr__(self, "images", tuple(self.images))
        if not self.images:
            raise ValueError("a reconstruction needs at least one image")
        object.__setattr__(self, "parameters", dict(self.parameters))

    @property
    def image(self) -> Image:
        return self.images[0]


@dataclass
class ValidationReport:
    valid: bool
    shape: tuple[int, ...]
    messages: list[str] = field(default_factory=list)
    nonfinite: list[tuple[int, ...]] = field(default_factory=list)
    negative: list[tuple[int, ...]] = field(default_factory=list)

    def __bool__(self):
        return self.valid


_MAX_REPORTED = 10


def validate_stack(stack, allow_negative: bool | None = None) -> ValidationReport:
    """Check dimension, finiteness and sign invariants without modifying the stack.

    ``stack`` may be an :class:`ImageStack` or a raw array. Offending pixel
    coordinates are reported as ``(t, y, x)`` tuples (first few only).
    """
    if isinstance(stack, ImageStack):
        arr = stack.frames
        if allow_negative is None:
            allow_negative = stack.allow_negative
    else:
        arr = np.asarray(stack)
    allow_negative = bool(allow_negative)

    messages = []
    nonfinite: list[tuple[int, ...]] = []
    negative: list[tuple[int, ...]] = []
    if arr.ndim != 3:
        messages.append(f"expected a 3D (T, H, W) array, got {arr.ndim}D")
        return ValidationReport(False, tuple(arr.shape), messages)
    if min(arr.shape) < 1:
        messages.append(f"every dimension must be >= 1, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.number) or np.iscomplexobj(arr):
        messages.append(f"expected real numeric data, got dtype {arr.dtype}")
        return ValidationReport(False, tuple(arr.shape), messages)

    bad = ~np.isfinite(arr)
    if bad.any():
        nonfinite = [tuple(int(i) for i in idx) for idx in np.argwhere(bad)[:_MAX_REPORTED]]
        messages.append(f"{int(bad.sum())} non-finite value(s), first at {nonfinite[0]}")
    if not allow_negative:
        with np.errstate(invalid="ignore"):
            neg = arr < 0
        if neg.any():
            negative = [tuple(int(i) for i in idx) for idx in np.argwhere(neg)[:_MAX_REPORTED]]
            messages.append(f"{int(neg.sum())} negative value(s), first at {negative[0]}")
    return ValidationReport(not messages, tuple(arr.shape), messages, nonfinite, negative)


def check_stack(X, pixel_size_nm: float | None = None, allow_negative: bool = False,
                min_frames: int = 1) -> ImageStack:
    """Coerce ``X`` into a validated :class:`ImageStack`.

    Accepts an :class:`ImageStack` or anything array-like of shape
    ``(T, H, W)``. Raises :class:`StackValidationError` on violations and
    ``ValueError`` if fewer than ``min_frames`` frames are present.
    """
    if isinstance(X, ImageStack):
        stack = X
        if pixel_size_nm is not None and pixel_size_nm != stack.pixel_size_nm:
            stack = stack.with_frames(stack.frames, pixel_size_nm=pixel_size_nm)
    else:
        arr = np.asarray(X)
        report = validate_stack(arr, allow_negative=allow_negative)
        if not report:
            raise StackValidationError(report)
        stack = ImageStack(arr, pixel_size_nm=pixel_size_nm or 80.0,
                           allow_negative=allow_negative)
    report = validate_stack(stack, allow_negative=allow_negative)
    if not report:
        raise StackValidationError(report)
    if stack.n_frames < min_frames:
        raise ValueError(f"need at least {min_frames} frames, got {stack.n_frames}")
    return stack
