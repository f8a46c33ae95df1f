"""Exception types raised across the package.

Numerical failures derive from ``NumericalError`` and data problems from
``DataError`` so the command line can map them to distinct exit codes.
Both subclass ``ValueError`` to stay compatible with sklearn-style callers.
"""


class GorfError(ValueError):
    pass


class NumericalError(GorfError):
    pass


class DataError(GorfError):
    pass


class DomainError(NumericalError):
    pass


class RankDeficiencyError(NumericalError):
    pass


class IntegrationError(NumericalError):
    """Adaptive quadrature exhausted its subdivision budget."""


class InfiniteMassError(NumericalError):
    """A Jordan part of the spectral measure has infinite total mass.

    The kernel then has no positive decomposition under the chosen
    mass convention.
    """


class ZeroMassError(NumericalError):
    pass


class TabulationError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    pass


class IndefiniteKernelError(GorfError):
    pass


class IncompatibleKernelError(GorfError):
    pass


class SphereViolationError(DataError):
    pass


class DimensionMismatchError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
