"""Shared exception classes and the frequency-estimate result type."""

from dataclasses import dataclass, field


class QubitFreqError(Exception):
    """Base class for all package errors."""


class NonFiniteState(QubitFreqError):
    """A Bloch component became non-finite; the step size is too large."""


class NotPure(QubitFreqError):
    """A state required to be pure is not."""


class InvalidGrid(QubitFreqError):
    """Frequency grid is empty, non-uniform, or carries a bad prior."""


class DegeneratePosterior(QubitFreqError):
    """All posterior weights underflowed; the grid does not cover the truth."""


class IncompatibleSteps(QubitFreqError):
    """Fine steps per coarse sample is not an integer."""


class RecordTooShort(QubitFreqError):
    """Record too short for the requested autocovariance order."""


class BandEmpty(QubitFreqError):
    """Search band is invalid or contains no grid points."""


class FlatSpectrum(QubitFreqError):
    """No detectable spectral line: peak/median power below threshold."""


class OutOfRange(QubitFreqError):
    """Iterative estimate left the valid range (|beta| > 2)."""


class NoConvergence(QubitFreqError):
    """Iteration failed to converge within the allowed sweeps."""


class BandOutOfRange(QubitFreqError):
    """Filter passband is not strictly inside (0, Nyquist)."""


@dataclass
class FrequencyEstimate:
    """Point estimate of an oscillation frequency.

    mean/std are the posterior moments for the Bayesian estimator; classical
    estimators report their point estimate in both mean and map with std = 0.
    diagnostics carries a method-specific trace (iteration history, peak
    ratios, convergence flags, ...).
    """

    mean: float
    std: float
    map: float
    method: str
    diagnostics: dict = field(default_factory=dict)
