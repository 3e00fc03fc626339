"""Optimal pulsed control for single-qubit dephasing sensors."""

from . import control, errors, field, noise, sensing
from .control import (
    PulseSequence,
    SymmetricIntervals,
    cp_sequence,
    filter_function,
    fourier_transform,
    from_symmetric_intervals,
)
from .errors import OptisenseError
from .field import GaussianTrain, Multitone, SingleGaussian, Tabulated
from .noise import GaussianMixture, TabulatedSpectrum, coherence_chi
from .sensing import SensitivityReport, SensorParams, accumulated_phase, sensitivity

__version__ = "0.1.0"

__all__ = [
    "control",
    "errors",
    "field",
    "noise",
    "sensing",
    "PulseSequence",
    "SymmetricIntervals",
    "cp_sequence",
    "filter_function",
    "fourier_transform",
    "from_symmetric_intervals",
    "OptisenseError",
    "GaussianTrain",
    "Multitone",
    "SingleGaussian",
    "Tabulated",
    "GaussianMixture",
    "TabulatedSpectrum",
    "coherence_chi",
    "SensitivityReport",
    "SensorParams",
    "accumulated_phase",
    "sensitivity",
]
