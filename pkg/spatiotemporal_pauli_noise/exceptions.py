"""Exception hierarchy shared by every module."""


class SppError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(SppError, ValueError):
    """Shapes disagree or a dense size cap is exceeded."""


class NumericalValidationError(SppError, ValueError):
    """An input violates a numerical property (unitary, Hermitian, CP, PSD)."""


class SpectrumConvergenceError(SppError):
    """The dense eigen-solver did not converge."""


class InvalidParameterError(SppError, ValueError):
    """A physical parameter is outside its admissible range."""


class NonErgodicError(SppError):
    """A transfer operator has a degenerate leading eigenvalue."""


class DetectorModelError(SppError):
    """A circuit fault is not matchable on the detector graph."""


class OracleMismatchError(SppError):
    """Two independent computations of the same quantity disagree."""
