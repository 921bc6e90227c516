# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops.

Both routines mirror :mod:`geozero._pykernels` exactly; the pure-Python
module is the fallback when this extension is not built.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


cdef int _block_starts(const double[:, ::1] T, Py_ssize_t n, Py_ssize_t[::1] starts):
    """Fill ``starts`` with the first index of each diagonal block; return block count."""
    cdef Py_ssize_t i = 0
    cdef int nb = 0
    while i < n:
        starts[nb] = i
        nb += 1
        if i + 1 < n and T[i + 1, i] != 0.0:
            i += 2
        else:
            i += 1
    starts[nb] = n
    return nb


cdef int _solve_small(double* M, double* b, int k) nogil:
    """Gaussian elimination with partial pivoting on a k x k row-major system, k <= 4."""
    cdef int i, j, c, piv
    cdef double amax, t, f
    for c in range(k):
        piv = c
        amax = fabs(M[c * k + c])
        for i in range(c + 1, k):
            if fabs(M[i * k + c]) > amax:
                amax = fabs(M[i * k + c])
                piv = i
        if amax == 0.0:
            return 1
        if piv != c:
            for j in range(k):
                t = M[c * k + j]
                M[c * k + j] = M[piv * k + j]
                M[piv * k + j] = t
            t = b[c]
            b[c] = b[piv]
            b[piv] = t
        for i in range(c + 1, k):
            f = M[i * k + c] / M[c * k + c]
            for j in range(c, k):
                M[i * k + j] -= f * M[c * k + j]
            b[i] -= f * b[c]
    for i in range(k - 1, -1, -1):
        t = b[i]
        for j in range(i + 1, k):
            t -= M[i * k + j] * b[j]
        b[i] = t / M[i * k + i]
    return 0


def sylvester_quasi_triangular(R_in, S_in, C_in):
    """Solve ``R @ Y + Y @ S = C`` for upper quasi-triangular ``R`` and ``S``.

    Raises ``ZeroDivisionError`` when a diagonal block pair is exactly singular.
    """
    cdef const double[:, ::1] R = np.ascontiguousarray(R_in, dtype=np.float64)
    cdef const double[:, ::1] S = np.ascontiguousarray(S_in, dtype=np.float64)
    cdef Py_ssize_t r = R.shape[0], q = S.shape[0]
    Y_arr = np.array(C_in, dtype=np.float64, order="C", copy=True)
    cdef double[:, ::1] Y = Y_arr
    if r == 0 or q == 0:
        return Y_arr

    rs_arr = np.zeros(r + 1, dtype=np.intp)
    ss_arr = np.zeros(q + 1, dtype=np.intp)
    cdef Py_ssize_t[::1] rs = rs_arr
    cdef Py_ssize_t[::1] ss = ss_arr
    cdef int nbr = _block_starts(R, r, rs)
    cdef int nbs = _block_starts(S, q, ss)

    cdef int bi, bj, a, b, ii, jj, kk, idx, row, col
    cdef Py_ssize_t i0, i1, j0, j1, k, l
    cdef double M[16]
    cdef double rhs[4]
    cdef double acc

    for bj in range(nbs):
        j0 = ss[bj]
        j1 = ss[bj + 1]
        b = <int>(j1 - j0)
        for bi in range(nbr - 1, -1, -1):
            i0 = rs[bi]
            i1 = rs[bi + 1]
            a = <int>(i1 - i0)
            # rhs = C_ij - R[i, i1:] Y[i1:, j] - Y[i, :j0] S[:j0, j]
            for ii in range(a):
                for jj in range(b):
                    acc = Y[i0 + ii, j0 + jj]
                    for k in range(i1, r):
                        acc -= R[i0 + ii, k] * Y[k, j0 + jj]
                    for l in range(j0):
                        acc -= Y[i0 + ii, l] * S[l, j0 + jj]
                    # column-major vec index
                    rhs[jj * a + ii] = acc
            # (I_b kron R_ii + S_jj^T kron I_a) vec(Y_ij) = vec(rhs)
            for idx in range(a * b * a * b):
                M[idx] = 0.0
            for jj in range(b):
                for ii in range(a):
                    row = jj * a + ii
                    for kk in range(a):
                        M[row * a * b + jj * a + kk] += R[i0 + ii, i0 + kk]
                    for kk in range(b):
                        M[row * a * b + kk * a + ii] += S[j0 + kk, j0 + jj]
            if _solve_small(M, rhs, a * b) != 0:
                raise ZeroDivisionError("singular diagonal block pair")
            for jj in range(b):
                for ii in range(a):
                    Y[i0 + ii, j0 + jj] = rhs[jj * a + ii]
    return Y_arr


def lti_step_recurrence(Phi_in, gamma_in, C_in, d_in, Py_ssize_t nsteps, double guard):
    """Outputs ``y_k = C x_k + d`` of ``x_{k+1} = Phi x_k + gamma`` from ``x_0 = 0``.

    Returns ``(Y, ok)`` where ``ok`` is False if any state exceeded ``guard``.
    """
    cdef const double[:, ::1] Phi = np.ascontiguousarray(Phi_in, dtype=np.float64)
    cdef const double[::1] g = np.ascontiguousarray(gamma_in, dtype=np.float64)
    cdef const double[:, ::1] C = np.ascontiguousarray(C_in, dtype=np.float64)
    cdef const double[::1] d = np.ascontiguousarray(d_in, dtype=np.float64)
    cdef Py_ssize_t n = Phi.shape[0], p = C.shape[0]
    Y_arr = np.empty((nsteps + 1, p), dtype=np.float64)
    cdef double[:, ::1] Y = Y_arr
    cdef double[::1] x = np.zeros(n, dtype=np.float64)
    cdef double[::1] xn = np.zeros(n, dtype=np.float64)
    cdef Py_ssize_t k, i, j
    cdef double acc
    cdef bint ok = True
    with nogil:
        for k in range(nsteps + 1):
            for i in range(p):
                acc = d[i]
                for j in range(n):
                    acc = acc + C[i, j] * x[j]
                Y[k, i] = acc
            if k == nsteps:
                break
            for i in range(n):
                acc = g[i]
                for j in range(n):
                    acc = acc + Phi[i, j] * x[j]
                xn[i] = acc
                if not (fabs(acc) <= guard):
                    ok = False
            if not ok:
                break
            for i in range(n):
                x[i] = xn[i]
    return Y_arr, bool(ok)
