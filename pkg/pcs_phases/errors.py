from __future__ import annotations


class PcsError(Exception):
    """Root of every error raised by the library."""


class ScenarioError(PcsError, ValueError):
    """Malformed scenario document (CLI exit code 2)."""


class InvalidStateError(PcsError, ValueError):
    """Quantum numbers that do not describe a valid reference state."""


class NumericalError(PcsError):
    """A computation could not be carried out within its numeric contract (exit code 3)."""


class BasisError(NumericalError, ValueError):
    pass


class CutoffError(NumericalError):
    pass


class GeneratorError(NumericalError):
    pass


class PoleContactError(NumericalError):
    pass


class OpenPathError(NumericalError):
    def __init__(self, message: str = "path not closed") -> None:
        super().__init__(message)


class UnderSamplingError(NumericalError):
    pass


class GridError(NumericalError):
    pass


class DensityMatrixError(NumericalError):
    pass


__all__ = [
    "PcsError",
    "ScenarioError",
    "InvalidStateError",
    "NumericalError",
    "BasisError",
    "CutoffError",
    "GeneratorError",
    "PoleContactError",
    "OpenPathError",
    "UnderSamplingError",
    "GridError",
    "DensityMatrixError",
]
