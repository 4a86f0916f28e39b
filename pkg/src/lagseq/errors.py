"""Exception hierarchy shared across the package."""

__all__ = [
    "LagseqError",
    "DataFormatError",
    "DesignError",
    "EstimationError",
    "NonConvergenceError",
    "DegenerateFitError",
    "NumericalError",
]


class LagseqError(Exception):
    """Base class for all package errors."""


class DataFormatError(LagseqError):
    """Input file or record violates the expected schema or an invariant."""


class DesignError(LagseqError):
    """Invalid trial design, configuration, or operation arguments."""


class EstimationError(LagseqError):
    """An estimator could not be computed on the given snapshot."""


class NonConvergenceError(EstimationError):
    """Iterative solver failed to reach tolerance."""


class DegenerateFitError(EstimationError):
    """Singular or degenerate estimation problem (separation, empty level)."""


class NumericalError(LagseqError):
    """Numerical routine failed (grid too coarse, root not bracketed)."""
