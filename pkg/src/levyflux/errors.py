"""Exception hierarchy shared by every levyflux module."""


class LevyfluxError(Exception):
    """Base class for all library errors."""


class ModelValidationError(LevyfluxError, ValueError):
    """A model or time-change specification violates its invariants."""


class NoDensityError(LevyfluxError):
    """The law of X_t has an atom, so no Lebesgue density exists."""


class AccuracyError(LevyfluxError):
    """A quadrature, inversion or differentiation missed its error budget."""


class NonConvergenceError(LevyfluxError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class HorizonExhaustedError(LevyfluxError):
    """Simulated paths did not reach the target level within the horizon."""

    def __init__(self, message, exceedances=0):
        super().__init__(message)
        self.exceedances = exceedances
