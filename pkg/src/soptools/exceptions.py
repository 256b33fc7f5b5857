"""Exception hierarchy.

Configuration/input problems derive from ``ValueError``; failures of a
numerical procedure derive from :class:`NumericalError` so the CLI can map
them to a distinct exit code.
"""


class SopToolsError(Exception):
    """Base class for every error raised by this package."""


class InvalidDimensionError(SopToolsError, ValueError):
    pass


class DegenerateGeometryError(SopToolsError, ValueError):
    pass


class DomainError(SopToolsError, ValueError):
    pass


class ConfigError(SopToolsError, ValueError):
    pass


class NumericalError(SopToolsError, ArithmeticError):
    pass


class MGFOverflowError(NumericalError):
    pass


class SingularPencilError(NumericalError):
    pass


class ContourTouchesSpectrumError(NumericalError):
    pass


class UnreliableCountError(NumericalError):
    pass


class DegenerateGapError(NumericalError):
    pass


class UndefinedBoundError(NumericalError):
    pass
