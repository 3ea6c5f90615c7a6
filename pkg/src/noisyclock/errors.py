"""Exception hierarchy shared across the package."""


class NoisyClockError(Exception):
    """Base class for all package errors."""


class BetaDomainError(NoisyClockError):
    """Argument lies outside the convergence half-plane of the moment function.

    Carries ``r_max`` so callers can report how far out of range the
    argument was.
    """

    def __init__(self, message, r_max=None, report=None):
        super().__init__(message)
        self.r_max = r_max
        self.report = report


class SpectralError(NoisyClockError):
    """A matrix function was requested on a branch cut or forbidden spectrum."""

    def __init__(self, message, eigenvalue=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class QuadratureError(NoisyClockError):
    """Numerical integration failed to converge to the requested tolerance."""


class SolverError(NoisyClockError):
    """An ODE solve hit an ill-conditioned or singular linear subproblem."""


class DivergenceError(NoisyClockError):
    """A numerical solve or simulated path overflowed.

    ``where`` holds the controller time (or path metadata) at failure.
    """

    def __init__(self, message, where=None):
        super().__init__(message)
        self.where = where


class ConfigError(NoisyClockError):
    """Invalid experiment configuration; message aggregates all violations."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n" +
                         "\n".join("  - " + v for v in self.violations))
