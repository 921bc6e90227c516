"""Invariant-zero cancellation for linear multivariable systems by the geometric approach."""
from .errors import GeozeroError, NumericalError, SpectraOverlapError, ValidationError
from .geometry import analyze, invariant_zeros
from .kernels import BACKEND
from .matkit import TolerancePolicy
from .system import StateSpaceSystem

__all__ = [
    "BACKEND",
    "GeozeroError",
    "NumericalError",
    "SpectraOverlapError",
    "StateSpaceSystem",
    "TolerancePolicy",
    "ValidationError",
    "analyze",
    "invariant_zeros",
]
