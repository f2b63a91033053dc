"""Fluctuation identities for spectrally positive Lévy processes.

Analytic laws of first passage and extrema by quadrature over the marginal
density, exact bounded-variation path tools with Monte Carlo checks, and
time-changed multidimensional subordinators.
"""

from .errors import AccuracyError, HorizonExhaustedError, LevyfluxError, ModelValidationError, NoDensityError, NonConvergenceError
from .models import (
    CompoundPoisson,
    Coordinate,
    Deterministic,
    Exponential,
    GammaSize,
    GammaSubordinatorJumps,
    SpectrallyPositiveModel,
    StablePositive,
    SubordinatorModel,
    brownian,
    compound_poisson_minus_drift,
    gamma_minus_drift,
    load_model,
    pure_drift,
    stable,
)

__version__ = "0.1.0"

__all__ = [
    "AccuracyError",
    "HorizonExhaustedError",
    "LevyfluxError",
    "ModelValidationError",
    "NoDensityError",
    "NonConvergenceError",
    "CompoundPoisson",
    "Coordinate",
    "Deterministic",
    "Exponential",
    "GammaSize",
    "GammaSubordinatorJumps",
    "SpectrallyPositiveModel",
    "StablePositive",
    "SubordinatorModel",
    "brownian",
    "compound_poisson_minus_drift",
    "gamma_minus_drift",
    "load_model",
    "pure_drift",
    "stable",
]
