"""Exception hierarchy shared across the package."""


class PDEQuantError(Exception):
    """Base class for all errors raised by pdequant."""


# raster I/O
class PGMError(PDEQuantError, ValueError):
    pass


class MalformedHeaderError(PGMError):
    pass


class UnsupportedFormatError(PGMError):
    pass


class MaxvalError(PGMError):
    pass


class TruncatedPayloadError(PGMError):
    pass


# solver
class ConvergenceError(PDEQuantError, RuntimeError):
    """Iterative solver hit its iteration limit.

    ``residual`` holds the last relative residual norm.
    """

    def __init__(self, message, residual, iterations):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class BudgetError(PDEQuantError, MemoryError):
    pass


# clustering
class InfeasibleKError(PDEQuantError, ValueError):
    pass


class ComponentCollapseError(PDEQuantError, ArithmeticError):
    pass


class CoincidentCentroidsError(PDEQuantError, ZeroDivisionError):
    pass


# container
class ContainerError(PDEQuantError, ValueError):
    pass


class BadMagicError(ContainerError):
    pass


class VersionError(ContainerError):
    pass


class ChecksumError(ContainerError):
    pass


class TruncatedStreamError(ContainerError):
    pass
