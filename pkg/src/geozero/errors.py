"""Exception hierarchy.

The CLI maps :class:`ValidationError` to exit status 1 and
:class:`NumericalError` to exit status 2.
"""


class GeozeroError(Exception):
    """Base class for all package errors."""


class ValidationError(GeozeroError, ValueError):
    """Malformed input: bad shapes, non-finite entries, rank-condition violations."""

    def __init__(self, message, kind="invalid"):
        super().__init__(message)
        self.kind = kind


class NumericalError(GeozeroError, ArithmeticError):
    """A numerical procedure failed or its result did not pass its own checks."""


class SpectraOverlapError(NumericalError):
    """Two spectra that must be disjoint share an eigenvalue."""

    def __init__(self, left, right):
        self.left = left
        self.right = right
        super().__init__(
            f"spectra overlap: eigenvalue {left:.6g} collides with {right:.6g}; "
            "the configuration is not generic, retry with a different friend F"
        )
