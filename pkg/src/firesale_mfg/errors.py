"""Exception types raised by the solvers."""


class FiresaleError(Exception):
    """Base class for package errors."""


class ConfigError(FiresaleError, ValueError):
    """Invalid parameters, grid or scenario document."""


class SolverError(FiresaleError):
    """A numerical sweep failed; ``step`` is the failing time index when known."""

    def __init__(self, message, step=None, last_error=None):
        super().__init__(message)
        self.step = step
        self.last_error = last_error


class InnerNonConvergence(SolverError):
    pass


class NumericalBlowUp(SolverError):
    def __init__(self, message, step=None, node=None):
        super().__init__(message, step=step)
        self.node = node
