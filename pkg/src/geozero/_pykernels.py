"""Pure-Python versions of the compiled kernels in ``_ckernels.pyx``."""
import numpy as np


def _block_starts(T):
    n = T.shape[0]
    starts = []
    i = 0
    while i < n:
        starts.append(i)
        i += 2 if (i + 1 < n and T[i + 1, i] != 0.0) else 1
    starts.append(n)
    return starts


def sylvester_quasi_triangular(R, S, C):
    """Solve ``R @ Y + Y @ S = C`` for upper quasi-triangular ``R`` and ``S``."""
    R = np.asarray(R, dtype=float)
    S = np.asarray(S, dtype=float)
    Y = np.array(C, dtype=float, copy=True)
    r, q = R.shape[0], S.shape[0]
    if r == 0 or q == 0:
        return Y
    rs = _block_starts(R)
    ss = _block_starts(S)
    for bj in range(len(ss) - 1):
        j0, j1 = ss[bj], ss[bj + 1]
        b = j1 - j0
        for bi in range(len(rs) - 2, -1, -1):
            i0, i1 = rs[bi], rs[bi + 1]
            a = i1 - i0
            rhs = Y[i0:i1, j0:j1] - R[i0:i1, i1:] @ Y[i1:, j0:j1] - Y[i0:i1, :j0] @ S[:j0, j0:j1]
            K = np.kron(np.eye(b), R[i0:i1, i0:i1]) + np.kron(S[j0:j1, j0:j1].T, np.eye(a))
            try:
                sol = np.linalg.solve(K, rhs.reshape(-1, order="F"))
            except np.linalg.LinAlgError as exc:
                raise ZeroDivisionError("singular diagonal block pair") from exc
            Y[i0:i1, j0:j1] = sol.reshape((a, b), order="F")
    return Y


def lti_step_recurrence(Phi, gamma, C, d, nsteps, guard):
    """Outputs ``y_k = C x_k + d`` of ``x_{k+1} = Phi x_k + gamma`` from ``x_0 = 0``."""
    Phi = np.asarray(Phi, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    C = np.asarray(C, dtype=float)
    d = np.asarray(d, dtype=float)
    Y = np.empty((nsteps + 1, C.shape[0]))
    x = np.zeros(Phi.shape[0])
    for k in range(nsteps + 1):
        Y[k] = C @ x + d
        if k == nsteps:
            break
        x = Phi @ x + gamma
        if not np.all(np.abs(x) <= guard):
            return Y, False
    return Y, True
