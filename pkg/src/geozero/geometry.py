"""Geometric-approach invariants of a state-space quadruple.

All subspaces are computed by monotone fixed-point recurrences that
terminate in at most ``n`` steps:

* reachable subspace  ``R_{k+1} = im B + A R_k``
* maximal output-nulling controlled invariant subspace (V*)
  ``V_{k+1} = [A; C]^{-1} ((V_k x {0}) + im [B; D])``
* minimal input-containing conditioned invariant subspace (S*)
  ``S_{k+1} = [A B] ((S_k x U) ∩ ker [C D])``, ``S_0 = {0}``
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, SpectraOverlapError, ValidationError
from .matkit import (
    TolerancePolicy,
    default_tolerances,
    eigenvalues,
    kernel_basis,
    solve_sylvester,
    sort_eigenvalues,
)
from .subspace import (
    Subspace,
    complete_basis,
    equals,
    intersect,
    inverse_image,
    subspace_sum,
)
from .system import StateSpaceSystem

__all__ = [
    "ZeroSet",
    "GeometricAnalysis",
    "reachable_subspace",
    "max_output_nulling",
    "min_input_containing",
    "friend",
    "refine_friend",
    "default_stage1_basis",
    "polish_invariant",
    "invariant_zeros",
    "confirm_zeros_rosenbrock",
    "cluster_zeros",
    "analyze",
]


@dataclass(frozen=True, eq=False)
class ZeroSet:
    """Invariant zeros with multiplicity, split by ``Re z < -margin``."""

    zeros: np.ndarray
    margin: float = 1e-9

    def __post_init__(self):
        object.__setattr__(self, "zeros", sort_eigenvalues(self.zeros))

    @property
    def minimum_phase(self) -> np.ndarray:
        return self.zeros[self.zeros.real < -self.margin]

    @property
    def non_minimum_phase(self) -> np.ndarray:
        return self.zeros[~(self.zeros.real < -self.margin)]

    def __len__(self):
        return len(self.zeros)


@dataclass(frozen=True, eq=False)
class GeometricAnalysis:
    reachable: Subspace
    v_star: Subspace
    s_star: Subspace
    r_v_star: Subspace
    zeros: ZeroSet
    is_reachable: bool
    is_right_invertible: bool
    friend: np.ndarray = field(repr=False)

    @property
    def subspace_dims(self) -> dict:
        return {
            "reachable": self.reachable.dim,
            "v_star": self.v_star.dim,
            "s_star": self.s_star.dim,
            "r_v_star": self.r_v_star.dim,
        }


def _fixed_point(step, start: Subspace, n: int, label: str) -> Subspace:
    current = start
    for _ in range(n + 2):
        nxt = step(current)
        if nxt.dim == current.dim:
            return nxt
        current = nxt
    raise NumericalError(f"{label} recurrence did not settle within {n + 2} steps")


def reachable_subspace(sys: StateSpaceSystem, tol: TolerancePolicy | None = None) -> Subspace:
    """Minimal ``A``-invariant subspace containing ``im B``."""
    tol = tol or default_tolerances()
    scale = max(np.linalg.norm(sys.B, 2), 1.0) if sys.B.size else 1.0
    start = Subspace.span(sys.B, tol) if sys.B.size else Subspace.zero(sys.n)

    def step(R):
        return Subspace.span(np.hstack([sys.B, sys.A @ R.basis]), tol, scale=scale)

    return _fixed_point(step, start, sys.n, "reachability")


def max_output_nulling(sys: StateSpaceSystem, tol: TolerancePolicy | None = None) -> Subspace:
    """V*: the largest subspace that input can keep invariant while nulling the output."""
    tol = tol or default_tolerances()
    n, p = sys.n, sys.p
    AC = np.vstack([sys.A, sys.C])
    BD = np.vstack([sys.B, sys.D])

    def step(V):
        target = Subspace.span(
            np.hstack([np.vstack([V.basis, np.zeros((p, V.dim))]), BD]), tol, scale=1.0
        )
        return inverse_image(AC, target, tol)

    return _fixed_point(step, Subspace.full(n), n, "V*")


def min_input_containing(sys: StateSpaceSystem, tol: TolerancePolicy | None = None) -> Subspace:
    """S*: the smallest conditioned invariant subspace containing the input injection."""
    tol = tol or default_tolerances()
    n, m = sys.n, sys.m
    AB = np.hstack([sys.A, sys.B])
    scale = max(np.linalg.norm(AB, 2), 1.0) if AB.size else 1.0
    ker_cd = Subspace.kernel(np.hstack([sys.C, sys.D]), tol) if sys.p else Subspace.full(n + m)

    def step(S):
        lifted = Subspace(np.block([
            [S.basis, np.zeros((n, m))],
            [np.zeros((m, S.dim)), np.eye(m)],
        ]))
        K = intersect(lifted, ker_cd, tol)
        if K.dim == 0:
            return Subspace.zero(n)
        return Subspace.span(AB @ K.basis, tol, scale=scale)

    return _fixed_point(step, Subspace.zero(n), n, "S*")


def _friend_system(sys: StateSpaceSystem, Vb: np.ndarray) -> np.ndarray:
    d = Vb.shape[1]
    return np.block([
        [Vb, -sys.B],
        [np.zeros((sys.p, d)), sys.D],
    ])


def _check_friend_solution(M, x, rhs, scale, tol, what):
    res = np.linalg.norm(M @ x - rhs, 2)
    if res > tol.eq_tol * max(1.0, scale):
        raise ValidationError(
            f"{what}: subspace is not output-nulling controlled invariant (residual {res:.3e})",
            kind="friend",
        )


def friend(
    sys: StateSpaceSystem,
    V: Subspace,
    tol: TolerancePolicy | None = None,
    extension: str = "zero",
) -> np.ndarray:
    """A friend ``F`` of ``V``: ``(A + B F) V ⊆ V`` and ``(C + D F) V = 0``.

    On ``V`` the minimum-norm least-squares solution is used. Off ``V`` the
    map is zero (``extension="zero"``) or the least-squares choice
    ``F x = -B^+ A x`` (``extension="lstsq"``).
    """
    tol = tol or default_tolerances()
    n, m = sys.n, sys.m
    if V.dim == 0:
        F = np.zeros((m, n))
    else:
        Vb = V.basis
        M = _friend_system(sys, Vb)
        rhs = np.vstack([sys.A @ Vb, -sys.C @ Vb])
        x = np.linalg.lstsq(M, rhs, rcond=None)[0]
        _check_friend_solution(M, x, rhs, np.linalg.norm(np.hstack([sys.A.T, sys.C.T]), 2), tol, "friend")
        F = x[V.dim:] @ Vb.T
    if extension == "zero":
        return F
    if extension == "lstsq":
        K = V.orthogonal_complement().basis
        if K.shape[1]:
            F = F - np.linalg.pinv(sys.B) @ sys.A @ K @ K.T
        return F
    raise ValueError(f"unknown friend extension {extension!r}")


def refine_friend(
    sys: StateSpaceSystem,
    V: Subspace,
    F0,
    tol: TolerancePolicy | None = None,
    snap_tol: float = 1e-3,
) -> tuple[np.ndarray, float]:
    """Nearest exact friend of ``V`` to an approximate one.

    Returns ``(F, correction)`` where ``F = F0 + G V^T`` with the smallest
    ``||G||`` satisfying the friend identities. Raises if the required
    correction exceeds ``snap_tol * max(1, ||F0||)``.
    """
    tol = tol or default_tolerances()
    F0 = np.asarray(F0, dtype=float)
    if F0.shape != (sys.m, sys.n):
        raise ValidationError(f"friend must have shape {(sys.m, sys.n)}, got {F0.shape}", kind="shape")
    if V.dim == 0:
        return F0.copy(), 0.0
    Vb = V.basis
    d = V.dim
    AF, CF = sys.closed_loop(F0)
    M = _friend_system(sys, Vb)
    rhs = np.vstack([AF @ Vb, -CF @ Vb])
    x0 = np.linalg.lstsq(M, rhs, rcond=None)[0]
    _check_friend_solution(M, x0, rhs, np.linalg.norm(np.hstack([AF.T, CF.T]), 2), tol, "refine_friend")
    N = kernel_basis(M, tol)
    if N.shape[1]:
        z = np.linalg.lstsq(N[d:], -x0[d:], rcond=None)[0]
        x0 = x0 + N @ z
    G = x0[d:]
    correction = float(np.linalg.norm(G, 2))
    if correction > snap_tol * max(1.0, np.linalg.norm(F0, 2)):
        raise ValidationError(
            f"supplied F is not a friend of V* (needs correction {correction:.3e})", kind="friend"
        )
    return F0 + G @ Vb.T, correction


def default_stage1_basis(
    n: int, v_star: Subspace, r_v_star: Subspace, tol: TolerancePolicy | None = None
) -> np.ndarray:
    """Orthogonal ``[R_V* | V* ⊖ R_V* | X ⊖ V*]`` basis."""
    middle = complete_basis(r_v_star, v_star, tol)
    outer = complete_basis(v_star, Subspace.full(n), tol)
    return np.hstack([r_v_star.basis, middle, outer])


def polish_invariant(
    sys: StateSpaceSystem, F, v_star: Subspace, inner: Subspace, steps: int = 3
) -> Subspace:
    """Newton-refine ``inner ⊂ V*`` as an ``(A + B F)``-invariant subspace.

    An intersection computed from two rank-revealing factorizations is only
    invariant to a few digits below machine precision; each step removes the
    leakage ``E`` of ``inner`` into ``V* ⊖ inner`` by solving
    ``M22 Y - Y M11 = -E``. The refined subspace stays inside V*. When the
    two spectra overlap the input is returned unchanged.
    """
    r, d = inner.dim, v_star.dim
    if r == 0 or r == d:
        return inner
    AF, _ = sys.closed_loop(F)
    Vb = v_star.basis
    Ar = Vb.T @ AF @ Vb
    Q = Vb.T @ inner.basis
    Q, _ = np.linalg.qr(Q)
    best, best_leak = Q, None
    for _ in range(steps):
        U = np.hstack([Q, complete_basis(Subspace(Q), Subspace.full(d))])
        M = U.T @ Ar @ U
        E = M[r:, :r]
        leak = np.linalg.norm(E, 2)
        if best_leak is not None and leak >= best_leak:
            break
        best, best_leak = Q, leak
        if leak == 0.0:
            break
        try:
            Y = solve_sylvester(M[r:, r:], M[:r, :r], E)
        except (SpectraOverlapError, NumericalError):
            break
        Q, _ = np.linalg.qr(Q + U[:, r:] @ Y)
    return Subspace(Vb @ best)


def _quotient_block(sys, F, v_star, r_v_star, tol):
    T = default_stage1_basis(sys.n, v_star, r_v_star, tol)
    r, d = r_v_star.dim, v_star.dim
    AF, _ = sys.closed_loop(F)
    return (T.T @ AF @ T)[r:d, r:d]


def invariant_zeros(
    sys: StateSpaceSystem,
    tol: TolerancePolicy | None = None,
    F=None,
    *,
    v_star: Subspace | None = None,
    r_v_star: Subspace | None = None,
) -> ZeroSet:
    """Internal unassignable eigenvalues of V*: the spectrum of ``A + B F`` on ``V* / (V* ∩ S*)``."""
    tol = tol or default_tolerances()
    if v_star is None:
        v_star = max_output_nulling(sys, tol)
    if r_v_star is None:
        r_v_star = intersect(v_star, min_input_containing(sys, tol), tol)
    if F is None:
        F = friend(sys, v_star, tol)
    block = _quotient_block(sys, F, v_star, r_v_star, tol)
    return ZeroSet(eigenvalues(block), tol.stability_margin)


def cluster_zeros(values, radius: float = 1e-5) -> list[tuple[complex, int]]:
    """Group nearby values; returns ``(mean, count)`` pairs."""
    remaining = list(np.asarray(values, dtype=complex))
    out = []
    while remaining:
        seed = remaining.pop(0)
        group = [seed]
        keep = []
        for z in remaining:
            (group if abs(z - seed) <= radius * (1.0 + abs(seed)) else keep).append(z)
        remaining = keep
        out.append((complex(np.mean(group)), len(group)))
    return out


def _pencil(sys, z):
    n = sys.n
    return np.block([
        [sys.A - z * np.eye(n), sys.B],
        [sys.C, sys.D],
    ]).astype(complex)


def confirm_zeros_rosenbrock(
    sys: StateSpaceSystem,
    zeros,
    rtol: float = 1e-6,
    samples: int = 5,
    seed: int = 0,
) -> bool:
    """Independent check that each listed zero makes the system matrix lose rank.

    The normal rank of ``[[A - zI, B], [C, D]]`` is estimated as the largest
    rank over random complex sample points. A value ``z`` is confirmed when
    the singular value at that rank position falls below ``rtol`` times the
    largest one. Clusters of nearby zeros are tested at their mean.
    """
    values = zeros.zeros if isinstance(zeros, ZeroSet) else np.asarray(zeros, dtype=complex)
    if len(values) == 0:
        return True
    rng = np.random.default_rng(seed)
    normal_rank = 0
    for _ in range(samples):
        z = complex(rng.normal(), rng.normal()) * (1.0 + np.abs(values).max())
        s = np.linalg.svd(_pencil(sys, z), compute_uv=False)
        normal_rank = max(normal_rank, int(np.count_nonzero(s > 1e-9 * max(s.shape[0], 1) * s[0])))
    if normal_rank == 0:
        return False
    for z, _ in cluster_zeros(values):
        s = np.linalg.svd(_pencil(sys, z), compute_uv=False)
        if s[normal_rank - 1] > rtol * s[0]:
            return False
    return True


def analyze(sys: StateSpaceSystem, tol: TolerancePolicy | None = None) -> GeometricAnalysis:
    """Reachability, V*, S*, their intersection, invariant zeros and the two predicates."""
    tol = tol or default_tolerances()
    n = sys.n
    R = reachable_subspace(sys, tol)
    V = max_output_nulling(sys, tol)
    S = min_input_containing(sys, tol)
    F = friend(sys, V, tol)
    RV = polish_invariant(sys, F, V, intersect(V, S, tol))
    zs = invariant_zeros(sys, tol, F, v_star=V, r_v_star=RV)
    full = Subspace.full(n)
    return GeometricAnalysis(
        reachable=R,
        v_star=V,
        s_star=S,
        r_v_star=RV,
        zeros=zs,
        is_reachable=equals(R, full, tol),
        is_right_invertible=equals(subspace_sum(V, S, tol), full, tol),
        friend=F,
    )
