"""Subspaces of real n-space represented by orthonormal bases.

The dimension of a :class:`Subspace` is fixed when it is built; later
comparisons reuse the stored basis and never re-rank it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .matkit import TolerancePolicy, column_space_basis, default_tolerances, kernel_basis

__all__ = [
    "Subspace",
    "subspace_sum",
    "intersect",
    "inverse_image",
    "contains",
    "equals",
    "complete_basis",
    "restriction_matrix",
    "principal_angles",
]


@dataclass(frozen=True, eq=False)
class Subspace:
    """A linear subspace of R^n held as an ``(n, d)`` orthonormal basis."""

    basis: np.ndarray

    def __post_init__(self):
        basis = np.asarray(self.basis, dtype=float)
        if basis.ndim != 2:
            raise ValueError("basis must be a 2-D array")
        basis.setflags(write=False)
        object.__setattr__(self, "basis", basis)

    @classmethod
    def span(cls, M, tol: TolerancePolicy | None = None, scale: float = 0.0) -> "Subspace":
        """Column space of an arbitrary matrix."""
        return cls(column_space_basis(M, tol, scale))

    @classmethod
    def kernel(cls, M, tol: TolerancePolicy | None = None, scale: float = 0.0) -> "Subspace":
        """Null space of an arbitrary matrix."""
        return cls(kernel_basis(M, tol, scale))

    @classmethod
    def full(cls, n: int) -> "Subspace":
        return cls(np.eye(n))

    @classmethod
    def zero(cls, n: int) -> "Subspace":
        return cls(np.zeros((n, 0)))

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T

    @property
    def complement_projector(self) -> np.ndarray:
        return np.eye(self.ambient_dim) - self.projector

    def orthogonal_complement(self) -> "Subspace":
        if self.dim == 0:
            return Subspace.full(self.ambient_dim)
        return Subspace(kernel_basis(self.basis.T, scale=1.0))

    @property
    def is_full(self) -> bool:
        return self.dim == self.ambient_dim

    def __repr__(self):
        return f"Subspace(dim={self.dim}, ambient_dim={self.ambient_dim})"


def _check_ambient(U: Subspace, V: Subspace):
    if U.ambient_dim != V.ambient_dim:
        raise ValidationError(
            f"ambient dimension mismatch: {U.ambient_dim} vs {V.ambient_dim}", kind="shape"
        )


def subspace_sum(U: Subspace, V: Subspace, tol: TolerancePolicy | None = None) -> Subspace:
    """``U + V``."""
    _check_ambient(U, V)
    return Subspace.span(np.hstack([U.basis, V.basis]), tol, scale=1.0)


def intersect(U: Subspace, V: Subspace, tol: TolerancePolicy | None = None) -> Subspace:
    """``U ∩ V`` as the common kernel of the two complement projectors."""
    _check_ambient(U, V)
    n = U.ambient_dim
    if U.dim == 0 or V.dim == 0:
        return Subspace.zero(n)
    stacked = np.vstack([U.complement_projector, V.complement_projector])
    return Subspace.kernel(stacked, tol, scale=1.0)


def inverse_image(M, V: Subspace, tol: TolerancePolicy | None = None) -> Subspace:
    """``{x : M x ∈ V}``."""
    M = np.asarray(M, dtype=float)
    if M.shape[0] != V.ambient_dim:
        raise ValidationError(
            f"map with {M.shape[0]} rows cannot land in a {V.ambient_dim}-dim space", kind="shape"
        )
    if M.shape[1] == 0:
        return Subspace.zero(0)
    scale = np.linalg.norm(M, 2) if M.size else 0.0
    return Subspace.kernel(V.complement_projector @ M, tol, scale=scale)


def contains(U: Subspace, V: Subspace, tol: TolerancePolicy | None = None) -> bool:
    """True if every basis vector of ``V`` lies in ``U``."""
    tol = tol or default_tolerances()
    _check_ambient(U, V)
    if V.dim == 0:
        return True
    if V.dim > U.dim:
        return False
    residual = U.complement_projector @ V.basis
    return bool(np.linalg.norm(residual, 2) <= tol.eq_tol * max(1, V.ambient_dim))


def equals(U: Subspace, V: Subspace, tol: TolerancePolicy | None = None) -> bool:
    return U.dim == V.dim and contains(U, V, tol) and contains(V, U, tol)


def principal_angles(U: Subspace, V: Subspace) -> np.ndarray:
    """Principal angles in radians, ascending; empty if either subspace is ``{0}``."""
    _check_ambient(U, V)
    if U.dim == 0 or V.dim == 0:
        return np.zeros(0)
    s = np.linalg.svd(U.basis.T @ V.basis, compute_uv=False)
    return np.sort(np.arccos(np.clip(s, -1.0, 1.0)))


def complete_basis(inner: Subspace, outer: Subspace, tol: TolerancePolicy | None = None) -> np.ndarray:
    """Orthonormal columns extending a basis of ``inner`` to one of ``outer``.

    The returned columns are orthogonal to ``inner``.
    """
    tol = tol or default_tolerances()
    if not contains(outer, inner, tol):
        raise ValidationError("complete_basis: inner subspace is not contained in outer", kind="containment")
    k = outer.dim - inner.dim
    if k == 0:
        return np.zeros((outer.ambient_dim, 0))
    cols = column_space_basis(inner.complement_projector @ outer.basis, tol, scale=1.0)
    if cols.shape[1] != k:
        raise ValidationError(
            f"complete_basis: expected {k} completing columns, found {cols.shape[1]}", kind="containment"
        )
    return cols


def restriction_matrix(M, V: Subspace | np.ndarray, tol: TolerancePolicy | None = None) -> np.ndarray:
    """Matrix ``R`` with ``M @ basis = basis @ R`` for an ``M``-invariant subspace.

    ``V`` may be a :class:`Subspace` or any full-column-rank basis matrix.
    """
    tol = tol or default_tolerances()
    basis = V.basis if isinstance(V, Subspace) else np.asarray(V, dtype=float)
    M = np.asarray(M, dtype=float)
    d = basis.shape[1]
    if d == 0:
        return np.zeros((0, 0))
    image = M @ basis
    R = np.linalg.lstsq(basis, image, rcond=None)[0]
    res = np.linalg.norm(image - basis @ R, 2)
    scale = max(1.0, np.linalg.norm(M, 2)) * np.linalg.norm(basis, 2)
    if res > tol.eq_tol * scale:
        raise ValidationError(f"subspace is not invariant under the map (residual {res:.3e})", kind="invariance")
    return R
