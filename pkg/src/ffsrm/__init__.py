"""Fluctuation-based super-resolution microscopy: simulator, reconstructors and metrics."""

__version__ = "0.1.0"

from .core import (Image, ImageStack, OpticalConfig, ReconstructionResult, StackValidationError,
                   ValidationReport, check_stack, validate_stack)
from .esi import EsiParams, esi_reconstruct
from .estimators import (EsiReconstructor, HawkTransformer, MusicalReconstructor,
                         SacdReconstructor, SofiReconstructor, SrrfReconstructor,
                         WidefieldReconstructor, make_reconstructor)
from .hawk import HawkParams, hawk_frame_count, hawk_transform
from .musical import MusicalParams, musical_reconstruct, singular_value_spectrum
from .optics import Psf3D, abbe_limits, gibson_lanni_psf
from .sacd import SacdParams, sacd_reconstruct
from .simulator import CameraModel, EmitterSet, PhotokineticsParams, get_preset, simulate
from .sofi import SofiParams, sofi_reconstruct
from .srrf import SrrfParams, srrf_reconstruct

__all__ = [
    "CameraModel", "EmitterSet", "EsiParams", "EsiReconstructor", "HawkParams",
    "HawkTransformer", "Image", "ImageStack", "MusicalParams", "MusicalReconstructor",
    "OpticalConfig", "PhotokineticsParams", "Psf3D", "ReconstructionResult", "SacdParams",
    "SacdReconstructor", "SofiParams", "SofiReconstructor", "SrrfParams", "SrrfReconstructor",
    "StackValidationError", "ValidationReport", "WidefieldReconstructor", "abbe_limits",
    "check_stack", "esi_reconstruct", "get_preset", "gibson_lanni_psf", "hawk_frame_count",
    "hawk_transform", "make_reconstructor", "musical_reconstruct", "sacd_reconstruct",
    "simulate", "singular_value_spectrum", "sofi_reconstruct", "srrf_reconstruct",
    "validate_stack",
]
