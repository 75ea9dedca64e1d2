"""Exception types shared across the package."""


class WassPcaError(Exception):
    """Base class for package errors."""


class ValidationError(WassPcaError, ValueError):
    """Invalid data: bad grids, negative masses, mismatched references."""


class ParameterError(WassPcaError, ValueError):
    """Invalid parameter combination (component counts, step sizes, caps)."""


class DegenerateMapError(ValidationError):
    """Transport map is constant on the whole grid; pushforward undefined."""


class SizeCapError(ValidationError):
    """Exact transport requested above the desk-scale support cap."""


class UnderflowError(WassPcaError, ArithmeticError):
    """Entropic kernel underflowed even in log domain; increase epsilon."""


class ConvergenceError(WassPcaError, RuntimeError):
    """An iterative solver exhausted its budget without reaching tolerance."""


class ProxConvergenceError(ConvergenceError):
    """Inner primal-dual loop hit its iteration cap before the tolerance.

    Carries the last iterate and its relative residual so callers can decide
    whether to accept, retry with a larger budget, or abort.
    """

    def __init__(self, message, last_iterate=None, residual=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual
