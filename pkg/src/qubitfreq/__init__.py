"""Continuously measured qubit simulation and frequency estimation."""

from .common import (BandEmpty, BandOutOfRange, DegeneratePosterior,
                     FlatSpectrum, FrequencyEstimate, IncompatibleSteps,
                     InvalidGrid, NoConvergence, NonFiniteState, NotPure,
                     OutOfRange, QubitFreqError, RecordTooShort)

__all__ = [
    "BandEmpty", "BandOutOfRange", "DegeneratePosterior", "FlatSpectrum",
    "FrequencyEstimate", "IncompatibleSteps", "InvalidGrid",
    "NoConvergence", "NonFiniteState", "NotPure", "OutOfRange",
    "QubitFreqError", "RecordTooShort",
]

__version__ = "0.1.0"
