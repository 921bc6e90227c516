"""Step responses by exact (zero-order-hold) discretization, and related metrics."""
from __future__ import annotations

import io
from dataclasses import dataclass
from typing import TextIO

import numpy as np
import scipy.linalg

from . import kernels
from .errors import NumericalError, ValidationError
from .matkit import TolerancePolicy, default_tolerances
from .system import StateSpaceSystem

__all__ = [
    "Trajectory",
    "NotSettledError",
    "ZeroFinalValueError",
    "step_response",
    "overshoot",
    "relative_degree",
    "dc_gain",
]

OVERFLOW_GUARD = 1e150


class NotSettledError(ValueError):
    """The trajectory has not settled by the end of the horizon."""


class ZeroFinalValueError(ValueError):
    """Overshoot is undefined for a response settling at zero."""


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Uniformly sampled outputs: ``values[k, i]`` is output ``i`` at ``times[k]``."""

    times: np.ndarray
    values: np.ndarray

    @property
    def n_outputs(self) -> int:
        return self.values.shape[1]

    def output(self, i: int) -> np.ndarray:
        return self.values[:, i]

    def write_csv(self, stream: TextIO) -> None:
        stream.write(",".join(["t"] + [f"y{i + 1}" for i in range(self.n_outputs)]) + "\n")
        for t, row in zip(self.times, self.values):
            stream.write(",".join(repr(float(v)) for v in (t, *row)) + "\n")

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


def step_response(
    sys: StateSpaceSystem, input_channel: int = 0, horizon: float = 10.0, dt: float = 1e-3
) -> Trajectory:
    """Unit-step response on one input channel (0-based), all outputs.

    The state update over one sample is exact: ``[Phi, Gamma]`` come from the
    exponential of the augmented matrix ``[[A, b], [0, 0]] * dt``.
    """
    if not dt > 0 or not np.isfinite(dt):
        raise ValidationError(f"dt must be positive, got {dt}", kind="flag")
    if not horizon >= dt or not np.isfinite(horizon):
        raise ValidationError(f"horizon must be at least dt, got {horizon}", kind="flag")
    if not 0 <= input_channel < sys.m:
        raise ValidationError(f"input channel {input_channel} out of range for m = {sys.m}", kind="flag")
    nsteps = int(round(horizon / dt))
    n = sys.n
    b = sys.B[:, input_channel]
    d = sys.D[:, input_channel]
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = sys.A
    aug[:n, n] = b
    E = scipy.linalg.expm(aug * dt)
    Phi, gamma = E[:n, :n], E[:n, n]
    Y, ok = kernels.lti_step_recurrence(Phi, gamma, sys.C, d, nsteps, OVERFLOW_GUARD)
    if not ok:
        raise NumericalError("step response diverged beyond the overflow guard")
    return Trajectory(np.arange(nsteps + 1) * dt, Y)


def overshoot(traj: Trajectory, output: int = 0, tail: float = 0.1, band: float = 0.01) -> float:
    """Peak excursion beyond the final value, as a fraction of ``|final|``.

    The response must settle: over the last ``tail`` fraction of samples it
    varies by less than ``band * |final|``. For a negative final value the
    excursion is measured downward.
    """
    y = traj.output(output)
    final = float(y[-1])
    scale = float(np.abs(y).max())
    if scale == 0.0 or abs(final) <= 1e-12 * scale:
        raise ZeroFinalValueError(f"output {output + 1} settles at zero; overshoot undefined")
    k = max(1, int(np.ceil(tail * len(y))))
    window = y[-k:]
    if window.max() - window.min() >= band * abs(final):
        raise NotSettledError(f"output {output + 1} has not settled within the horizon")
    s = np.sign(final)
    return max(0.0, float((np.max(s * y) - s * final) / abs(final)))


def relative_degree(
    sys: StateSpaceSystem, output: int, input_channel: int, tol: TolerancePolicy | None = None
) -> int | None:
    """Index of the first nonzero Markov parameter for one channel pair.

    0 if the feedthrough entry is nonzero, else the smallest ``k >= 1`` with
    ``C A^(k-1) B`` nonzero, or ``None`` if there is none up to ``k = n``.
    """
    tol = tol or default_tolerances()
    scale = max(1.0, np.abs(sys.D).max(initial=0.0))
    if abs(sys.D[output, input_channel]) > tol.eq_tol * scale:
        return 0
    c = sys.C[output]
    v = sys.B[:, input_channel].copy()
    a_scale = max(1.0, np.linalg.norm(sys.A, 2))
    ref = max(1.0, np.linalg.norm(c) * np.linalg.norm(v))
    for k in range(1, sys.n + 1):
        if abs(c @ v) > tol.eq_tol * ref:
            return k
        v = sys.A @ v
        ref *= a_scale
    return None


def dc_gain(sys: StateSpaceSystem) -> np.ndarray:
    """``D - C A^-1 B``."""
    if sys.n == 0:
        return np.array(sys.D)
    if not np.linalg.cond(sys.A) < 1.0 / np.finfo(float).eps:
        raise NumericalError("dc gain undefined: A is singular")
    return sys.D - sys.C @ np.linalg.solve(sys.A, sys.B)
