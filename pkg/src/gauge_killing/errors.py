"""Exception types shared across the package."""


class GaugeKillingError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(GaugeKillingError, ValueError):
    pass


class ConsistencyError(GaugeKillingError):
    """An internal identity that must hold numerically did not."""


class DomainError(GaugeKillingError, ValueError):
    """A point lies outside the chart (or lattice) it was evaluated on."""


class ChartMismatchError(GaugeKillingError, KeyError):
    pass


class ModelInvalidError(GaugeKillingError):
    """A bundle model failed its gluing checks.

    ``worst`` names the check with the largest residual.
    """

    def __init__(self, message, worst=None, residual=None):
        super().__init__(message)
        self.worst = worst
        self.residual = residual


class SolverFailureError(GaugeKillingError):
    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class PreconditionError(GaugeKillingError):
    pass


class DecompositionObstructedError(PreconditionError):
    """The moment map equation for the base field has no solution."""
