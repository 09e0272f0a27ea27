"""Ambisonic encoding of arbitrary microphone arrays: simulation, baseline and neural encoders."""
from .array import ArrayGeometry, atf, atf_matrix, dequantize_geometry, quantize_geometry, sample_geometry
from .baseline import StaticEncoder, apply_static_encoder, design_ls_encoder
from .dsp import SpectrogramTensor, istft, resample, stft
from .errors import (AmbinetError, ConfigurationError, FormatError, GeometryError, InputError, NumericalError,
                     RangeError, SamplingError)
from .metrics import aggregate_report, coherence, magnitude_spectrum_error, si_snr
from .room import Room, Scene, SceneConfig, render_scene, sample_scene
from .sh import Direction, DirectionGrid, sh_eval, sh_matrix, uniform_grid

__version__ = "0.1.0"

__all__ = [
    "AmbinetError", "ArrayGeometry", "ConfigurationError", "Direction", "DirectionGrid", "FormatError",
    "GeometryError", "InputError", "NumericalError", "RangeError", "Room", "SamplingError", "Scene", "SceneConfig",
    "SpectrogramTensor", "StaticEncoder", "aggregate_report", "apply_static_encoder", "atf", "atf_matrix",
    "coherence", "dequantize_geometry", "design_ls_encoder", "istft", "magnitude_spectrum_error",
    "quantize_geometry", "render_scene", "resample", "sample_geometry", "sample_scene", "sh_eval", "sh_matrix",
    "si_snr", "stft", "uniform_grid",
]
