"""Exception hierarchy.

Every error raised on purpose by the library derives from :class:`LDAError`
and carries an ``exit_code`` used by the command-line driver.
"""


class LDAError(Exception):
    """Base class for all library errors."""

    exit_code = 4


class ConfigError(LDAError, ValueError):
    """Invalid run configuration. ``line`` is 1-based when known."""

    exit_code = 2

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DataError(LDAError, ValueError):
    """Malformed or inconsistent input data."""

    exit_code = 3

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericsError(LDAError):
    """A numerical procedure cannot produce a valid answer."""

    exit_code = 4


class ParameterDomainError(NumericsError, ValueError):
    """Model parameters outside their admissible range."""


class SupportError(NumericsError, ValueError):
    """Argument outside the support / domain of a function."""


class EmptyTailError(NumericsError):
    """Left truncation would remove all probability mass."""


class DegenerateBodyError(NumericsError):
    """Splice threshold leaves no body or no tail."""


class GridError(NumericsError, ValueError):
    """Invalid lattice for a discrete computation."""


class InsufficientGridError(NumericsError):
    """The lattice does not hold enough mass to answer a quantile query."""


class RecursionSingularityError(NumericsError):
    """Panjer recursion denominator 1 - a*f0 vanishes."""


class CIUndefinedError(NumericsError):
    """Order-statistic confidence bounds fall outside the sample."""


class MomentError(NumericsError):
    """A required moment is infinite."""


class DegenerateModelError(NumericsError):
    """Model is degenerate for the requested approximation."""


class PosteriorInvalidError(NumericsError):
    """Posterior parameters do not define a proper density."""


class ApproximationError(NumericsError):
    """Gaussian approximation is not valid at the located mode."""


class MatrixError(NumericsError, ValueError):
    """Correlation matrix cannot be repaired into a valid one."""


class SamplerExhaustedError(NumericsError):
    """Parameter chain is shorter than the requested number of draws."""


class ElicitationError(NumericsError):
    """No prior satisfies the elicitation constraints."""


class UndefinedChargeError(NumericsError, ValueError):
    """Regulatory formula has no valid input."""


class ConvergenceError(LDAError):
    """Optimiser or tuning loop failed to converge."""

    exit_code = 5


class OptimizationError(ConvergenceError):
    """No multi-start run reached a finite optimum."""


class TuningError(ConvergenceError):
    """Proposal tuning left acceptance pinned at 0 or 1."""
