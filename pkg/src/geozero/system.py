"""Continuous-time state-space quadruple."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .matkit import TolerancePolicy, numerical_rank

__all__ = ["StateSpaceSystem", "series"]


def _matrix(name, M):
    try:
        M = np.array(M, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{name}: entries must be real numbers ({exc})", kind="malformed") from exc
    if M.ndim != 2:
        raise ValidationError(f"{name}: expected a 2-D matrix, got {M.ndim}-D", kind="shape")
    if not np.all(np.isfinite(M)):
        raise ValidationError(f"{name}: entries must be finite", kind="nonfinite")
    M.setflags(write=False)
    return M


@dataclass(frozen=True, eq=False)
class StateSpaceSystem:
    """``x' = A x + B u``, ``y = C x + D u``.

    Shapes and finiteness are checked on construction. The rank conditions
    (full column rank ``B``, full row rank ``[C D]``) are checked separately
    by :meth:`check_rank_conditions`, since derived systems such as
    compensators need not satisfy them.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    name: str = ""

    def __post_init__(self):
        A = _matrix("A", self.A)
        B = _matrix("B", self.B)
        C = _matrix("C", self.C)
        D = _matrix("D", self.D)
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValidationError(f"A must be square, got {A.shape}", kind="shape")
        if B.shape[0] != n:
            raise ValidationError(f"B has {B.shape[0]} rows, expected n = {n}", kind="shape")
        if C.shape[1] != n:
            raise ValidationError(f"C has {C.shape[1]} columns, expected n = {n}", kind="shape")
        if D.shape != (C.shape[0], B.shape[1]):
            raise ValidationError(
                f"D has shape {D.shape}, expected (p, m) = {(C.shape[0], B.shape[1])}", kind="shape"
            )
        for key, val in zip("ABCD", (A, B, C, D)):
            object.__setattr__(self, key, val)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.n, self.m, self.p

    def check_rank_conditions(self, tol: TolerancePolicy | None = None) -> "StateSpaceSystem":
        """Raise :class:`ValidationError` unless ``B`` and ``[C D]`` have full rank."""
        if self.m and numerical_rank(self.B, tol) < self.m:
            raise ValidationError(f"B does not have full column rank {self.m}", kind="rank")
        CD = np.hstack([self.C, self.D])
        if self.p and numerical_rank(CD, tol) < self.p:
            raise ValidationError(f"[C D] does not have full row rank {self.p}", kind="rank")
        return self

    def closed_loop(self, F) -> tuple[np.ndarray, np.ndarray]:
        """``(A + B F, C + D F)``."""
        F = np.asarray(F, dtype=float)
        return self.A + self.B @ F, self.C + self.D @ F

    def markov_parameters(self, count: int) -> list[np.ndarray]:
        """``[D, C B, C A B, ...]`` with ``count`` entries."""
        out = [np.array(self.D)]
        v = np.array(self.B)
        for _ in range(count - 1):
            out.append(self.C @ v)
            v = self.A @ v
        return out

    def markov_scales(self, count: int) -> list[float]:
        """Magnitude of the products behind each Markov parameter.

        ``max|D|`` and then ``||C|| ||A^(k-1) B||``: roundoff in ``C A^(k-1) B``
        is proportional to these, not to the (possibly cancelled) result.
        """
        out = [float(np.abs(self.D).max(initial=0.0))]
        nc = np.linalg.norm(self.C, 2) if self.C.size else 0.0
        v = np.array(self.B)
        for _ in range(count - 1):
            out.append(float(nc * np.linalg.norm(v, 2)) if v.size else 0.0)
            v = self.A @ v
        return out

    def allclose(self, other: "StateSpaceSystem", atol: float = 0.0) -> bool:
        return all(
            a.shape == b.shape and np.allclose(a, b, rtol=0.0, atol=atol)
            for a, b in zip((self.A, self.B, self.C, self.D), (other.A, other.B, other.C, other.D))
        )


def series(first: StateSpaceSystem, second: StateSpaceSystem, name: str = "") -> StateSpaceSystem:
    """Series interconnection: the output of ``first`` drives the input of ``second``."""
    if first.p != second.m:
        raise ValidationError(
            f"series: {first.p} outputs cannot drive {second.m} inputs", kind="shape"
        )
    n1, n2 = first.n, second.n
    A = np.block([
        [first.A, np.zeros((n1, n2))],
        [second.B @ first.C, second.A],
    ])
    B = np.vstack([first.B, second.B @ first.D])
    C = np.hstack([second.D @ first.C, second.C])
    D = second.D @ first.D
    return StateSpaceSystem(A, B, C, D, name=name)
