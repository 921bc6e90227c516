"""Feedforward cancellation of minimum-phase invariant zeros.

The pipeline takes the closed loop ``A + B F`` (``F`` a friend of V*)
through three changes of basis:

1. ``T``   = ``[R_V* | V* ⊖ R_V* | rest]`` exposes the zero dynamics in the
   middle diagonal block.
2. ``T'``  = ``[[I, X], [0, I]]`` with ``X`` from a Sylvester equation
   decouples the zero dynamics from the assignable part on ``R_V*``.
3. ``T''`` reorders the middle block so the stable zeros come first.

The leading stable middle coordinates, mapped back by ``T T' T''``, span
the resolving subspace ``V_S``. With ``W`` the zero dynamics on it and
``L = F V_S`` the compensator is ``(W, [I 0], L, [0 E])``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import NumericalError, ValidationError
from .geometry import (
    GeometricAnalysis,
    analyze,
    default_stage1_basis,
    refine_friend,
)
from .matkit import (
    TolerancePolicy,
    default_tolerances,
    normalize_signs,
    order_schur_stable_first,
    real_schur,
    solve_sylvester,
)
from .subspace import Subspace, contains
from .system import StateSpaceSystem, series

__all__ = [
    "InputSelection",
    "PipelineTrace",
    "ZeroStructure",
    "CancellationReport",
    "PipelineResult",
    "build_stage1_transform",
    "stage1",
    "stage2",
    "stage3",
    "resolving_subspace",
    "synthesize_compensator",
    "cascade_equivalent",
    "match_multisets",
    "markov_mismatch",
    "verify_cancellation",
    "run_pipeline",
]


@dataclass(frozen=True)
class InputSelection:
    """Plant input channels (0-based) driven directly by the external input.

    Dropped channels receive only the compensator output.
    """

    kept: tuple[int, ...]

    @classmethod
    def all(cls, m: int) -> "InputSelection":
        return cls(tuple(range(m)))

    def validate(self, m: int) -> "InputSelection":
        if len(set(self.kept)) != len(self.kept):
            raise ValidationError(f"input selection has duplicates: {self.kept}", kind="selection")
        bad = [j for j in self.kept if not 0 <= j < m]
        if bad:
            raise ValidationError(f"input channels {bad} out of range for m = {m}", kind="selection")
        return self

    def matrix(self, m: int) -> np.ndarray:
        """``E`` with ``E[kept[t], t] = 1``."""
        self.validate(m)
        E = np.zeros((m, len(self.kept)))
        for t, j in enumerate(self.kept):
            E[j, t] = 1.0
        return E


@dataclass(frozen=True, eq=False)
class PipelineTrace:
    F: np.ndarray
    T: np.ndarray
    Tprime: np.ndarray
    Tsecond: np.ndarray
    AF1: np.ndarray
    CF1: np.ndarray
    X: np.ndarray
    AF2: np.ndarray
    AF3: np.ndarray
    CF3: np.ndarray
    r: int
    q: int
    n_stable: int
    friend_correction: float = 0.0

    @property
    def n_unstable(self) -> int:
        return self.q - self.n_stable

    @property
    def Tbar(self) -> np.ndarray:
        return self.T @ self.Tprime @ self.Tsecond


@dataclass(frozen=True, eq=False)
class ZeroStructure:
    """``(A + B F) VSmat = VSmat W``, ``L = F VSmat``, ``C VSmat + D L = 0``."""

    W: np.ndarray
    L: np.ndarray
    VSmat: np.ndarray
    F: np.ndarray = field(repr=False)

    @property
    def order(self) -> int:
        return self.W.shape[0]

    @property
    def VS(self) -> Subspace:
        return Subspace.span(self.VSmat) if self.order else Subspace.zero(self.VSmat.shape[0])

    def coupling_residuals(self, sys: StateSpaceSystem) -> dict:
        AF, _ = sys.closed_loop(self.F)
        V, W, L = self.VSmat, self.W, self.L
        return {
            "invariance": float(np.linalg.norm(AF @ V - V @ W, 2)) if V.size else 0.0,
            "output_nulling": float(np.linalg.norm(sys.C @ V + sys.D @ L, 2)) if V.size else 0.0,
            "input_map": float(np.linalg.norm(L - self.F @ V, 2)) if V.size else 0.0,
        }


def build_stage1_transform(
    v_star: Subspace,
    r_v_star: Subspace,
    completion=None,
    tol: TolerancePolicy | None = None,
    snap_tol: float = 1e-3,
) -> np.ndarray:
    """First change of basis ``T``.

    Columns ``[:r]`` span ``R_V*`` and columns ``[:r+q]`` span V*. By default the
    basis is orthogonal. A caller-supplied ``n x n`` ``completion`` is used
    instead, after its first ``r`` columns are projected onto ``R_V*`` and the
    next ``q`` onto V* (corrections above ``snap_tol`` relative are rejected).
    """
    tol = tol or default_tolerances()
    if not contains(v_star, r_v_star, tol):
        raise ValidationError("R_V* is not contained in V*", kind="containment")
    n = v_star.ambient_dim
    if completion is None:
        return default_stage1_basis(n, v_star, r_v_star, tol)

    T = np.array(completion, dtype=float, copy=True)
    if T.shape != (n, n):
        raise ValidationError(f"completion must be {n}x{n}, got {T.shape}", kind="shape")
    r, d = r_v_star.dim, v_star.dim
    for cols, target in ((slice(0, r), r_v_star), (slice(r, d), v_star)):
        block = T[:, cols]
        if block.shape[1] == 0:
            continue
        snapped = target.projector @ block
        drift = np.linalg.norm(block - snapped, 2)
        if drift > snap_tol * max(1.0, np.linalg.norm(block, 2)):
            raise ValidationError(
                f"supplied columns {cols.start}..{cols.stop - 1} are not in the required subspace "
                f"(distance {drift:.3e})",
                kind="completion",
            )
        T[:, cols] = snapped
    if any(k and np.linalg.matrix_rank(T[:, :k]) < k for k in (r, d)):
        raise ValidationError("supplied columns do not span R_V* and V*", kind="completion")
    if np.linalg.cond(T) > 1.0 / (tol.eq_tol * 1e-3):
        raise ValidationError("supplied completion is singular", kind="completion")
    return T


def stage1(sys: StateSpaceSystem, F, T, r: int, q: int, tol: TolerancePolicy | None = None):
    """``A_F' = T^-1 (A + B F) T`` and ``C_F' = (C + D F) T``.

    Checks that blocks (2,1), (3,1), (3,2) of ``A_F'`` and the first ``r + q``
    columns of ``C_F'`` vanish.
    """
    tol = tol or default_tolerances()
    T = np.asarray(T, dtype=float)
    AF, CF = sys.closed_loop(F)
    try:
        AF1 = np.linalg.solve(T, AF @ T)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("stage-1 transform is singular") from exc
    CF1 = CF @ T
    d = r + q
    scale = max(1.0, np.linalg.norm(AF, 2), np.linalg.norm(CF, 2)) * np.linalg.cond(T)
    off = max(
        np.abs(AF1[r:, :r]).max(initial=0.0),
        np.abs(AF1[d:, r:d]).max(initial=0.0),
        np.abs(CF1[:, :d]).max(initial=0.0),
    )
    if off > tol.eq_tol * scale:
        raise NumericalError(f"stage-1 block pattern violated (largest entry {off:.3e})")
    return AF1, CF1


def stage2(AF1, r: int, q: int, tol: TolerancePolicy | None = None):
    """Decouple the ``R_V*`` block from the zero dynamics.

    Returns ``(X, Tprime, AF2)`` where ``A11 X - X A22 = -A12`` and
    ``AF2 = Tprime^-1 AF1 Tprime`` has a zero (1,2) block.
    """
    AF1 = np.asarray(AF1, dtype=float)
    n = AF1.shape[0]
    X = solve_sylvester(AF1[:r, :r], AF1[r:r + q, r:r + q], AF1[:r, r:r + q], tol)
    Tp = np.eye(n)
    Tp[:r, r:r + q] = X
    Tp_inv = np.eye(n)
    Tp_inv[:r, r:r + q] = -X
    return X, Tp, Tp_inv @ AF1 @ Tp


def _ordered_quasi_triangular(M, margin):
    """True if ``M`` is standardized quasi-upper-triangular with stable blocks first."""
    n = M.shape[0]
    if n and np.any(np.tril(M, -2)):
        return False
    stable_seen_unstable = False
    i = 0
    while i < n:
        if i + 1 < n and M[i + 1, i] != 0.0:
            if i + 2 < n and M[i + 2, i + 1] != 0.0:
                return False
            a, b, c, d = M[i, i], M[i, i + 1], M[i + 1, i], M[i + 1, i + 1]
            if (a - d) ** 2 + 4.0 * b * c >= 0.0:
                # real eigenvalues: not a Schur 2x2 block
                return False
            re = 0.5 * (a + d)
            i += 2
        else:
            re = M[i, i]
            i += 1
        stable = re < -margin
        if stable and stable_seen_unstable:
            return False
        stable_seen_unstable |= not stable
    return True


def _eigen_split(M, margin, tol):
    w, V = np.linalg.eig(M)
    scale = max(1.0, np.linalg.norm(M, 2))
    if np.any(np.abs(w.imag) > tol.eq_tol * scale):
        raise NumericalError("eigenvector split needs real zero dynamics; use split='schur'")
    w = w.real
    V = V.real
    if np.linalg.cond(V) > 1e8:
        raise NumericalError("zero dynamics are defective; use split='schur'")
    stable = w < -margin
    order = np.lexsort((w, ~stable))
    V = V[:, order]
    V = normalize_signs(V / np.linalg.norm(V, axis=0), tol.eq_tol)
    return V, int(stable.sum())


def stage3(
    AF2,
    r: int,
    q: int,
    margin: float = 1e-9,
    split: str = "schur",
    tol: TolerancePolicy | None = None,
):
    """Put the stable zero dynamics in the leading corner of the middle block.

    ``split="schur"`` (default) uses an ordered real Schur basis and handles
    defective zero dynamics. ``split="eigen"`` uses unit eigenvectors, stable
    first, and gives a diagonal middle block for diagonalizable real cases.
    Eigenvalues with ``Re >= -margin`` count as unstable.

    Returns ``(Tsecond, AF3, n_stable)``.
    """
    tol = tol or default_tolerances()
    AF2 = np.asarray(AF2, dtype=float)
    n = AF2.shape[0]
    M = AF2[r:r + q, r:r + q]
    if split == "schur":
        if _ordered_quasi_triangular(M, margin):
            Q = np.eye(q)
            ev = np.linalg.eigvals(M) if q else np.zeros(0)
            n_stable = int(np.count_nonzero(ev.real < -margin))
        else:
            (Q, _), n_stable = order_schur_stable_first(real_schur(M), margin)
        Q_inv = Q.T
    elif split == "eigen":
        Q, n_stable = _eigen_split(M, margin, tol)
        Q_inv = np.linalg.inv(Q)
    else:
        raise ValueError(f"unknown split {split!r}")
    T2 = np.eye(n)
    T2[r:r + q, r:r + q] = Q
    T2_inv = np.eye(n)
    T2_inv[r:r + q, r:r + q] = Q_inv
    return T2, T2_inv @ AF2 @ T2, n_stable


def resolving_subspace(trace: PipelineTrace) -> ZeroStructure:
    """``VSmat = Tbar[:, r:r+nS]``, ``W`` = leading stable middle block, ``L = F VSmat``."""
    r, ns = trace.r, trace.n_stable
    VSmat = trace.Tbar[:, r:r + ns]
    W = trace.AF3[r:r + ns, r:r + ns].copy()
    return ZeroStructure(W=W, L=trace.F @ VSmat, VSmat=VSmat, F=trace.F)


def synthesize_compensator(
    zs: ZeroStructure, m: int, selection: InputSelection | None = None
) -> StateSpaceSystem:
    """``(W, [I 0], L, [0 E])``; inputs are ``[w; v]`` with ``v`` on the kept channels."""
    selection = (selection or InputSelection.all(m)).validate(m)
    E = selection.matrix(m)
    ns, k = zs.order, len(selection.kept)
    return StateSpaceSystem(
        zs.W,
        np.hstack([np.eye(ns), np.zeros((ns, k))]),
        zs.L,
        np.hstack([np.zeros((m, ns)), E]),
        name="compensator",
    )


def cascade_equivalent(
    sys: StateSpaceSystem, zs: ZeroStructure, selection: InputSelection | None = None
) -> StateSpaceSystem:
    """``(A, [-VSmat  B E], C, [0  D E])``."""
    selection = (selection or InputSelection.all(sys.m)).validate(sys.m)
    E = selection.matrix(sys.m)
    return StateSpaceSystem(
        sys.A,
        np.hstack([-zs.VSmat, sys.B @ E]),
        sys.C,
        np.hstack([np.zeros((sys.p, zs.order)), sys.D @ E]),
        name="cascade",
    )


def match_multisets(a, b, tol: float = 1e-6) -> bool:
    """True if ``a`` and ``b`` pair up one-to-one within ``tol``."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        return False
    if a.size == 0:
        return True
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    return bool(np.all(cost[rows, cols] <= tol))


def markov_mismatch(first: StateSpaceSystem, second: StateSpaceSystem, count: int) -> float:
    """Largest difference among the first ``count`` Markov parameters.

    Each difference is relative to ``max(1, s1, s2)`` where ``s`` is the size
    of the products that form the parameter (see ``markov_scales``). A series
    realization that carries cancelled modes has much larger intermediate
    terms than its result, and its roundoff is relative to those.
    """
    worst = 0.0
    pairs = zip(
        first.markov_parameters(count), second.markov_parameters(count),
        first.markov_scales(count), second.markov_scales(count),
    )
    for M1, M2, s1, s2 in pairs:
        if M1.shape != M2.shape:
            return np.inf
        if M1.size:
            worst = max(worst, np.abs(M1 - M2).max() / max(1.0, s1, s2))
    return float(worst)


@dataclass
class CancellationReport:
    """Outcome of the preservation checks; failed checks are recorded, not raised."""

    plant_zeros: np.ndarray
    minimum_phase: np.ndarray
    non_minimum_phase: np.ndarray
    cascade_zeros: np.ndarray
    reachable: bool
    cascade_reachable: bool
    right_invertible: bool
    cascade_right_invertible: bool
    compensator_order: int
    checks: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(ok for ok, _ in self.checks.values())

    def summary(self) -> dict:
        """Invariant part of the report: independent of friend and basis choices."""
        return {
            "zeros": _zero_list(self.plant_zeros),
            "cascade_zeros": _zero_list(self.cascade_zeros),
            "reachable": self.reachable,
            "cascade_reachable": self.cascade_reachable,
            "right_invertible": self.right_invertible,
            "cascade_right_invertible": self.cascade_right_invertible,
            "compensator_order": self.compensator_order,
        }


def _zero_list(values, digits: int = 6):
    return [complex(round(z.real, digits) + 0.0, round(z.imag, digits) + 0.0) for z in values]


def verify_cancellation(
    sys: StateSpaceSystem,
    cascade: StateSpaceSystem,
    compensator: StateSpaceSystem,
    tol: TolerancePolicy | None = None,
    F=None,
    plant_analysis: GeometricAnalysis | None = None,
    markov_tol: float = 1e-8,
    zero_tol: float = 1e-6,
) -> CancellationReport:
    """Check the cascade against the plant and the compensator.

    Checks recorded in ``report.checks`` (name -> (passed, detail)):

    * ``coupling_invariance``, ``coupling_output`` (and ``coupling_input_map``
      when ``F`` is given): the identities tying ``V_S``, ``W`` and ``L``,
      with ``V_S`` read from the first ``n_S`` cascade input columns.
    * ``markov``: first ``2 n`` Markov parameters of ``plant∘compensator`` and
      of the cascade agree (relative to the size of the products forming them).
    * ``zero_law``: cascade zeros equal the plant's nonminimum-phase zeros.
    * ``reachability`` and ``right_invertibility`` are preserved.
    * ``order``: compensator order equals the number of minimum-phase zeros.
    """
    tol = tol or default_tolerances()
    pa = plant_analysis or analyze(sys, tol)
    ca = analyze(cascade, tol)
    ns = compensator.n
    checks = {}

    VS = -cascade.B[:, :ns]
    W, L = compensator.A, compensator.C
    if ns:
        scale = max(1.0, np.linalg.norm(sys.A, 2), np.linalg.norm(sys.B, 2)) * max(1.0, np.linalg.norm(VS, 2))
        inv = np.linalg.norm(sys.A @ VS + sys.B @ L - VS @ W, 2)
        outn = np.linalg.norm(sys.C @ VS + sys.D @ L, 2)
    else:
        scale, inv, outn = 1.0, 0.0, 0.0
    checks["coupling_invariance"] = (bool(inv <= tol.eq_tol * scale), f"{inv:.3e}")
    checks["coupling_output"] = (bool(outn <= tol.eq_tol * scale), f"{outn:.3e}")
    if F is not None and ns:
        im = np.linalg.norm(L - np.asarray(F) @ VS, 2)
        checks["coupling_input_map"] = (bool(im <= tol.eq_tol * scale), f"{im:.3e}")

    try:
        plant_comp = series(compensator, sys, name="series")
        count = 2 * max(sys.n, 1)
        mm = markov_mismatch(plant_comp, cascade, count)
    except ValidationError as exc:
        mm = np.inf
        checks["markov"] = (False, str(exc))
    else:
        checks["markov"] = (bool(mm <= markov_tol), f"{mm:.3e}")

    nmp = pa.zeros.non_minimum_phase
    checks["zero_law"] = (match_multisets(ca.zeros.zeros, nmp, zero_tol), f"{len(ca.zeros)} vs {len(nmp)}")
    checks["reachability"] = (bool(ca.is_reachable or not pa.is_reachable), f"{pa.is_reachable}->{ca.is_reachable}")
    checks["right_invertibility"] = (
        bool(ca.is_right_invertible or not pa.is_right_invertible),
        f"{pa.is_right_invertible}->{ca.is_right_invertible}",
    )
    n_mp = len(pa.zeros.minimum_phase)
    checks["order"] = (ns == n_mp, f"{ns} vs {n_mp}")

    return CancellationReport(
        plant_zeros=pa.zeros.zeros,
        minimum_phase=pa.zeros.minimum_phase,
        non_minimum_phase=nmp,
        cascade_zeros=ca.zeros.zeros,
        reachable=pa.is_reachable,
        cascade_reachable=ca.is_reachable,
        right_invertible=pa.is_right_invertible,
        cascade_right_invertible=ca.is_right_invertible,
        compensator_order=ns,
        checks=checks,
    )


@dataclass(frozen=True, eq=False)
class PipelineResult:
    analysis: GeometricAnalysis
    trace: PipelineTrace
    structure: ZeroStructure
    compensator: StateSpaceSystem
    cascade: StateSpaceSystem
    report: CancellationReport
    selection: InputSelection


def run_pipeline(
    sys: StateSpaceSystem,
    selection: InputSelection | None = None,
    F=None,
    T=None,
    split: str = "schur",
    tol: TolerancePolicy | None = None,
    snap_tol: float = 1e-3,
) -> PipelineResult:
    """Analyze ``sys`` and synthesize the zero-cancelling feedforward compensator.

    ``F`` and ``T`` may be supplied (for instance from printed values); they
    are snapped to the nearest exact friend and to the required subspaces.
    A plant without minimum-phase zeros yields an order-0 pass-through
    compensator.
    """
    tol = tol or default_tolerances()
    selection = (selection or InputSelection.all(sys.m)).validate(sys.m)
    ga = analyze(sys, tol)
    V, RV = ga.v_star, ga.r_v_star
    r, q = RV.dim, V.dim - RV.dim

    if F is None:
        F, correction = ga.friend, 0.0
    else:
        F, correction = refine_friend(sys, V, F, tol, snap_tol)
    T = build_stage1_transform(V, RV, T, tol, snap_tol)

    AF1, CF1 = stage1(sys, F, T, r, q, tol)
    X, Tp, AF2 = stage2(AF1, r, q, tol)
    T2, AF3, ns = stage3(AF2, r, q, tol.stability_margin, split, tol)
    trace = PipelineTrace(
        F=F, T=T, Tprime=Tp, Tsecond=T2, AF1=AF1, CF1=CF1, X=X, AF2=AF2,
        AF3=AF3, CF3=CF1 @ Tp @ T2, r=r, q=q, n_stable=ns,
        friend_correction=correction,
    )
    zs = resolving_subspace(trace)
    comp = synthesize_compensator(zs, sys.m, selection)
    cas = cascade_equivalent(sys, zs, selection)
    report = verify_cancellation(sys, cas, comp, tol, F=F, plant_analysis=ga)
    return PipelineResult(ga, trace, zs, comp, cas, report, selection)
