"""Exception taxonomy shared across the package.

Errors are split by what the caller can do about them: fix the inputs
(:class:`ConfigurationError`, :class:`ConstraintError`), relax a tolerance or
inspect the iteration (:class:`ConvergenceError`), or treat the run as lost
(:class:`NumericalError`).
"""


class DisperlimError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(DisperlimError, ValueError):
    """Invalid grid, parameter, or solver configuration."""


class ConstraintError(DisperlimError, ValueError):
    """A field violates a structural constraint (e.g. nonzero streamwise mean).

    Carries the norm of the offending content in ``offending_norm``.
    """

    def __init__(self, message, offending_norm=None):
        super().__init__(message)
        self.offending_norm = offending_norm


class ConvergenceError(DisperlimError, RuntimeError):
    """An iterative solver stagnated. Carries the last residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NumericalError(DisperlimError, RuntimeError):
    """Non-finite data, positivity loss, or detected blow-up."""
