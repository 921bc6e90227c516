"""Dense real-matrix kernels with explicit tolerance handling."""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg

from . import kernels
from .errors import NumericalError, SpectraOverlapError

__all__ = [
    "TolerancePolicy",
    "SchurForm",
    "default_tolerances",
    "numerical_rank",
    "column_space_basis",
    "kernel_basis",
    "normalize_signs",
    "real_schur",
    "order_schur_stable_first",
    "solve_sylvester",
    "eigenvalues",
    "sort_eigenvalues",
    "matrix_exponential",
]

# Relative eigenvalue separation below which two spectra are treated as overlapping.
SPECTRAL_GAP = 1e-6


@dataclass(frozen=True)
class TolerancePolicy:
    """Numerical thresholds shared by every computation.

    Parameters
    ----------
    rank_tol : float
        Relative singular-value cutoff. A matrix ``M`` has the singular values
        above ``rank_tol * max(M.shape) * max(sigma_max, scale)`` counted in its rank.
    eq_tol : float
        Threshold for residual and identity checks.
    stability_margin : float
        Eigenvalues with real part ``< -stability_margin`` are stable.
    """

    rank_tol: float = 1e-9
    eq_tol: float = 1e-9
    stability_margin: float = 1e-9

    def __post_init__(self):
        if not self.rank_tol > 0 or not self.eq_tol > 0:
            raise ValueError("rank_tol and eq_tol must be strictly positive")
        if not self.stability_margin >= 0:
            raise ValueError("stability_margin must be nonnegative")


def default_tolerances() -> TolerancePolicy:
    """Default policy; ``GEOZERO_TOL_RANK`` overrides the rank tolerance."""
    env = os.environ.get("GEOZERO_TOL_RANK")
    if env:
        return TolerancePolicy(rank_tol=float(env))
    return TolerancePolicy()


class SchurForm(NamedTuple):
    """Real Schur factorization ``A = Q @ T @ Q.T``."""

    Q: np.ndarray
    T: np.ndarray


def _as_matrix(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {M.shape}")
    return M


def _square(A) -> np.ndarray:
    A = _as_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got shape {A.shape}")
    return A


def _svd_split(M, tol, scale):
    U, s, Vt = np.linalg.svd(M, full_matrices=True)
    top = max(s[0] if s.size else 0.0, scale)
    if top == 0.0:
        return U, s, Vt, 0
    cutoff = tol.rank_tol * max(M.shape) * top
    return U, s, Vt, int(np.count_nonzero(s > cutoff))


def numerical_rank(M, tol: TolerancePolicy | None = None, scale: float = 0.0) -> int:
    """Rank of ``M`` under the singular-value cutoff of ``tol``.

    ``scale`` is a reference magnitude used when ``M`` is itself the result of
    cancellation (for example a projected product), so that roundoff noise is
    not mistaken for signal.
    """
    tol = tol or default_tolerances()
    M = _as_matrix(M)
    if M.size == 0:
        return 0
    return _svd_split(M, tol, scale)[3]


def normalize_signs(Q: np.ndarray, eq_tol: float = 1e-9) -> np.ndarray:
    """Flip columns so the first entry with magnitude above ``eq_tol`` is positive."""
    Q = np.array(Q, dtype=float, copy=True)
    for j in range(Q.shape[1]):
        col = Q[:, j]
        idx = np.flatnonzero(np.abs(col) > eq_tol)
        if idx.size and col[idx[0]] < 0:
            Q[:, j] = -col
    return Q


def column_space_basis(M, tol: TolerancePolicy | None = None, scale: float = 0.0) -> np.ndarray:
    """Orthonormal basis of the numerical column space of ``M``.

    Returns an ``(rows, rank)`` array; a zero matrix gives ``(rows, 0)``.
    """
    tol = tol or default_tolerances()
    M = _as_matrix(M)
    if M.size == 0:
        return np.zeros((M.shape[0], 0))
    U, _, _, r = _svd_split(M, tol, scale)
    return normalize_signs(U[:, :r], tol.eq_tol)


def kernel_basis(M, tol: TolerancePolicy | None = None, scale: float = 0.0) -> np.ndarray:
    """Orthonormal basis of the numerical null space of ``M``, shape ``(cols, cols - rank)``."""
    tol = tol or default_tolerances()
    M = _as_matrix(M)
    if M.shape[1] == 0:
        return np.zeros((0, 0))
    if M.shape[0] == 0:
        return np.eye(M.shape[1])
    _, _, Vt, r = _svd_split(M, tol, scale)
    return normalize_signs(Vt[r:].T, tol.eq_tol)


def real_schur(A) -> SchurForm:
    """Real Schur form with 1x1 and 2x2 diagonal blocks."""
    A = _square(A)
    if A.shape[0] == 0:
        return SchurForm(np.zeros((0, 0)), np.zeros((0, 0)))
    try:
        T, Q = scipy.linalg.schur(A, output="real")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"real Schur decomposition failed: {exc}") from exc
    return SchurForm(Q, T)


def order_schur_stable_first(S: SchurForm, margin: float = 0.0) -> tuple[SchurForm, int]:
    """Reorder a real Schur form so eigenvalues with ``Re < -margin`` come first.

    Complex-conjugate pairs stay together in their 2x2 blocks. Returns the
    reordered form (a similarity of the input) and the number of leading
    stable eigenvalues.
    """
    Q0, T0 = S
    n = T0.shape[0]
    if n == 0:
        return S, 0
    try:
        T, Z, sdim = scipy.linalg.schur(T0, output="real", sort=lambda z: z.real < -margin)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"Schur reordering failed: {exc}") from exc
    return SchurForm(Q0 @ Z, T), int(sdim)


def solve_sylvester(A11, A22, A12, tol: TolerancePolicy | None = None) -> np.ndarray:
    """Solve ``A11 @ X - X @ A22 = -A12`` by the Bartels-Stewart method.

    With this sign convention ``[[I, X], [0, I]]`` block-diagonalizes
    ``[[A11, A12], [0, A22]]``.

    Raises
    ------
    SpectraOverlapError
        If ``A11`` and ``A22`` share an eigenvalue, so the solution is not unique.
    """
    tol = tol or default_tolerances()
    A11 = _square(A11)
    A22 = _square(A22)
    A12 = _as_matrix(A12).reshape(A11.shape[0], A22.shape[0])
    r, q = A12.shape
    if r == 0 or q == 0:
        return np.zeros((r, q))

    l1 = np.linalg.eigvals(A11)
    l2 = np.linalg.eigvals(A22)
    n1 = np.linalg.norm(A11, 2)
    n2 = np.linalg.norm(A22, 2)
    dist = np.abs(l1[:, None] - l2[None, :])
    i, j = np.unravel_index(np.argmin(dist), dist.shape)
    if dist[i, j] <= SPECTRAL_GAP * (1.0 + n1 + n2):
        raise SpectraOverlapError(complex(l1[i]), complex(l2[j]))

    # A11 X + X (-A22) = -A12 in Schur coordinates
    R, U = scipy.linalg.schur(A11, output="real")
    S, V = scipy.linalg.schur(-A22, output="real")
    rhs = U.T @ (-A12) @ V
    try:
        Y = kernels.sylvester_quasi_triangular(R, S, rhs)
    except ZeroDivisionError as exc:
        raise SpectraOverlapError(complex(l1[i]), complex(l2[j])) from exc
    X = U @ Y @ V.T

    res = np.linalg.norm(A11 @ X - X @ A22 + A12, 2)
    bound = tol.eq_tol * ((n1 + n2) * np.linalg.norm(X, 2) + np.linalg.norm(A12, 2))
    if not res <= bound:
        raise NumericalError(f"Sylvester residual {res:.3e} exceeds {bound:.3e}")
    return X


def sort_eigenvalues(values) -> np.ndarray:
    """Deterministic order: ascending real part, then ascending imaginary part."""
    values = np.asarray(values, dtype=complex)
    order = np.lexsort((np.round(values.imag, 12), np.round(values.real, 12)))
    return values[order]


def eigenvalues(A) -> np.ndarray:
    """Eigenvalues of a real square matrix, with multiplicity, sorted deterministically."""
    A = _square(A)
    if A.shape[0] == 0:
        return np.zeros(0, dtype=complex)
    return sort_eigenvalues(np.linalg.eigvals(A))


def matrix_exponential(A, t: float = 1.0) -> np.ndarray:
    """``expm(A * t)``."""
    A = _square(A)
    if not np.isfinite(t):
        raise ValueError("t must be finite")
    return scipy.linalg.expm(A * t)
