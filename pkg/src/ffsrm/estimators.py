"""scikit-learn style wrappers around the reconstruction functions.

Every reconstructor takes a ``(T, H, W)`` stack (array or
:class:`~ffsrm.core.ImageStack`).  ``fit`` validates the input and resolves
data-dependent settings; ``transform`` returns the reconstructed image as a
2D array and ``reconstruct`` the full :class:`ReconstructionResult`.

    >>> est = SofiReconstructor(order=3).fit(stack)
    >>> image = est.transform(stack)
"""

from __future__ import annotations

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .core import Image, ImageStack, OpticalConfig, ReconstructionResult, check_stack
from .esi import EsiParams, esi_reconstruct
from .hawk import HawkParams, hawk_transform
from .musical import (THRESHOLD_RULES, MusicalParams, musical_reconstruct,
                      singular_value_spectrum)
from .sacd import SacdParams, sacd_reconstruct
from .simulator import default_psf
from .sofi import SofiParams, sofi_reconstruct
from .srrf import SrrfParams, srrf_reconstruct


class _Reconstructor(TransformerMixin, BaseEstimator):
    method = ""
    allow_negative = False
    min_frames = 2

    def _stack(self, X) -> ImageStack:
        return check_stack(X, getattr(self, "pixel_size_nm", None),
                           allow_negative=self.allow_negative, min_frames=self.min_frames)

    def fit(self, X, y=None):
        stack = self._stack(X)
        self._check_params()
        self.n_frames_in_ = stack.n_frames
        self.frame_shape_ = stack.shape[1:]
        self._fit_stack(stack)
        return self

    def transform(self, X):
        return self.reconstruct(X).image.data

    def reconstruct(self, X) -> ReconstructionResult:
        check_is_fitted(self, "n_frames_in_")
        return self._run(self._stack(X))

    def _check_params(self):
        self._params()

    def _fit_stack(self, stack):
        pass

    def _config(self, stack) -> OpticalConfig:
        return OpticalConfig(self.wavelength_nm, self.numerical_aperture, stack.pixel_size_nm)


class WidefieldReconstructor(_Reconstructor):
    """Plain temporal sum (``mode='sum'``) or mean of the frames."""

    method = "widefield"
    min_frames = 1

    def __init__(self, mode="sum", pixel_size_nm=None):
        self.mode = mode
        self.pixel_size_nm = pixel_size_nm

    def _params(self):
        if self.mode not in ("sum", "mean"):
            raise ValueError("mode must be 'sum' or 'mean'")

    def _run(self, stack):
        self._params()
        f = stack.frames
        data = f.sum(axis=0) if self.mode == "sum" else f.mean(axis=0)
        return ReconstructionResult(Image(data, stack.pixel_size_nm), self.method,
                                    {"mode": self.mode}, stack.n_frames)


class EsiReconstructor(_Reconstructor):
    method = "esi"

    def __init__(self, order=4, bins=100, n_images=1, pixel_size_nm=None):
        self.order = order
        self.bins = bins
        self.n_images = n_images
        self.pixel_size_nm = pixel_size_nm

    def _params(self):
        return EsiParams(self.order, self.bins, self.n_images)

    def _run(self, stack):
        return esi_reconstruct(stack, self._params())


class SofiReconstructor(_Reconstructor):
    method = "sofi"
    allow_negative = True

    def __init__(self, order=2, lag_mode="distinct_frames", balanced=False, pixel_size_nm=None):
        self.order = order
        self.lag_mode = lag_mode
        self.balanced = balanced
        self.pixel_size_nm = pixel_size_nm

    def _params(self):
        return SofiParams(self.order, self.lag_mode, self.balanced)

    def _run(self, stack):
        return sofi_reconstruct(stack, self._params())


class SrrfReconstructor(_Reconstructor):
    method = "srrf"

    def __init__(self, ring_radius=0.5, axes=6, magnification=5, temporal_mode="TRAC2",
                 intensity_weighting=True, gradient_smoothing=False,
                 minimize_patterning=False, pixel_size_nm=None):
        self.ring_radius = ring_radius
        self.axes = axes
        self.magnification = magnification
        self.temporal_mode = temporal_mode
        self.intensity_weighting = intensity_weighting
        self.gradient_smoothing = gradient_smoothing
        self.minimize_patterning = minimize_patterning
        self.pixel_size_nm = pixel_size_nm

    def _params(self):
        return SrrfParams(self.ring_radius, self.axes, self.magnification, self.temporal_mode,
                          self.intensity_weighting, self.gradient_smoothing,
                          self.minimize_patterning)

    def _run(self, stack):
        return srrf_reconstruct(stack, self._params())


class SacdReconstructor(_Reconstructor):
    """SACD; the PSF is the default Gibson-Lanni model for the optical settings."""

    method = "sacd"

    def __init__(self, magnification=8, lr_iterations=10, mpac_order=2, psf_power=None,
                 planes=(1, 2, 4), wavelength_nm=510.0, numerical_aperture=1.42,
                 pixel_size_nm=None):
        self.magnification = magnification
        self.lr_iterations = lr_iterations
        self.mpac_order = mpac_order
        self.psf_power = psf_power
        self.planes = planes
        self.wavelength_nm = wavelength_nm
        self.numerical_aperture = numerical_aperture
        self.pixel_size_nm = pixel_size_nm

    def _params(self):
        return SacdParams(self.magnification, self.lr_iterations, self.mpac_order,
                          self.psf_power, tuple(self.planes))

    def _run(self, stack):
        config = self._config(stack)
        return sacd_reconstruct(stack, default_psf(config), self._params(), config)


class MusicalReconstructor(_Reconstructor):
    """MUSICAL. A threshold rule ('low', 'mid', 'high') is resolved at fit
    time from the second singular values of the fitted stack (``threshold_``)."""

    method = "musical"

    def __init__(self, threshold="mid", alpha=4.0, subpixels=10, window_side=None,
                 ratio_cap=1e3, wavelength_nm=510.0, numerical_aperture=1.42,
                 pixel_size_nm=None):
        self.threshold = threshold
        self.alpha = alpha
        self.subpixels = subpixels
        self.window_side = window_side
        self.ratio_cap = ratio_cap
        self.wavelength_nm = wavelength_nm
        self.numerical_aperture = numerical_aperture
        self.pixel_size_nm = pixel_size_nm

    def _params(self, config=None, threshold=None):
        return MusicalParams(self.threshold if threshold is None else threshold, self.alpha,
                             self.subpixels, self.window_side, self.ratio_cap,
                             config or OpticalConfig(self.wavelength_nm,
                                                     self.numerical_aperture))

    def _fit_stack(self, stack):
        params = self._params(self._config(stack))
        if self.threshold in THRESHOLD_RULES:
            self.spectrum_ = singular_value_spectrum(stack, params)
            self.threshold_ = self.spectrum_.threshold(self.threshold)
        else:
            self.threshold_ = float(self.threshold)

    def _run(self, stack):
        config = self._config(stack)
        params = self._params(config, self.threshold_)
        return musical_reconstruct(stack, default_psf(config), params)


class HawkTransformer(TransformerMixin, BaseEstimator):
    """HAWK preprocessing; ``transform`` returns the expanded :class:`ImageStack`."""

    def __init__(self, levels=5, negatives="separate", order="level", pixel_size_nm=None):
        self.levels = levels
        self.negatives = negatives
        self.order = order
        self.pixel_size_nm = pixel_size_nm

    def _params(self):
        return HawkParams(self.levels, self.negatives, self.order)

    def fit(self, X, y=None):
        self._params()
        stack = check_stack(X, self.pixel_size_nm)
        self.n_frames_in_ = stack.n_frames
        return self

    def transform(self, X) -> ImageStack:
        check_is_fitted(self, "n_frames_in_")
        return hawk_transform(check_stack(X, self.pixel_size_nm), self._params())


RECONSTRUCTORS = {
    "widefield": WidefieldReconstructor,
    "esi": EsiReconstructor,
    "sofi": SofiReconstructor,
    "srrf": SrrfReconstructor,
    "sacd": SacdReconstructor,
    "musical": MusicalReconstructor,
}


def make_reconstructor(method: str, **params) -> _Reconstructor:
    try:
        cls = RECONSTRUCTORS[method]
    except KeyError:
        raise ValueError(f"unknown method {method!r}; choose from {sorted(RECONSTRUCTORS)}")
    valid = cls().get_params()
    unknown = sorted(set(params) - set(valid))
    if unknown:
        raise ValueError(f"unknown {method} parameter(s): {', '.join(unknown)}")
    return cls(**params)
