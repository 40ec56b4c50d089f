"""Exception taxonomy.

Every failure mode the package reports deliberately maps onto one of these
classes; the CLI translates them into process exit codes (see cli.EXIT_*).
"""


class NyvieError(Exception):
    """Base class for all package-specific errors."""


class ParameterError(NyvieError, ValueError):
    """A scalar argument is outside its documented domain."""


class GeometryError(NyvieError, ValueError):
    """Mesh or exclusion-ball geometry is invalid (non-cubic cells,
    overlapping elements, ball not strictly inside its element, ...)."""


class SingularityError(NyvieError, ZeroDivisionError):
    """A kernel was evaluated at zero separation where it is undefined."""


class AccuracyError(NyvieError, ArithmeticError):
    """Adaptive integration failed to reach the requested tolerance.

    Carries both of the last two estimates so callers can judge how far
    convergence got.
    """

    def __init__(self, message, coarse=None, fine=None):
        super().__init__(message)
        self.coarse = coarse
        self.fine = fine


class SolverError(NyvieError, ArithmeticError):
    """Iterative solve did not converge.  Carries the best iterate and its
    residual norm."""

    def __init__(self, message, iterate=None, residual=None):
        super().__init__(message)
        self.iterate = iterate
        self.residual = residual


class ConfigError(NyvieError, ValueError):
    """Run configuration file is malformed, has unknown keys, or asks for
    something inconsistent."""


class TableFormatError(NyvieError, ValueError):
    """Weight-table file has an unsupported version or malformed header."""


class TableCorruptionError(NyvieError, ValueError):
    """Weight-table file failed its length or checksum verification."""


class DomainError(NyvieError, ValueError):
    """An evaluation point lies outside every mesh element."""
