import numpy as np
import pytest

import reference_values as pv
from geozero.errors import NumericalError, SpectraOverlapError, ValidationError
from geozero.geometry import analyze, friend
from geozero.subspace import Subspace, contains, equals
from geozero.system import StateSpaceSystem, series
from geozero.sysfile import load_example
from geozero.zerocancel import (
    InputSelection,
    build_stage1_transform,
    cascade_equivalent,
    markov_mismatch,
    match_multisets,
    run_pipeline,
    stage1,
    stage2,
    stage3,
    synthesize_compensator,
    verify_cancellation,
)
from randsys import suite

EX = {k: load_example(k) for k in (1, 2, 3)}
ATOL = pv.PRINTED_ATOL


@pytest.fixture(scope="module")
def ex1_trace():
    return run_pipeline(EX[1], F=pv.EX1_F, T=pv.EX1_T, split="eigen")


def nmp_only_plant():
    """G(s) = (s - 1) / ((s + 1)(s + 2)): one nonminimum-phase zero, none to cancel."""
    A = np.array([[0.0, 1.0], [-2.0, -3.0]])
    return StateSpaceSystem(A, np.array([[0.0], [1.0]]), np.array([[-1.0, 1.0]]), np.zeros((1, 1)))


# --- input selection ---------------------------------------------------------------

def test_selection_matrix_and_validation():
    E = InputSelection((1, 2)).matrix(3)
    np.testing.assert_array_equal(E, [[0, 0], [1, 0], [0, 1]])
    np.testing.assert_array_equal(InputSelection.all(2).matrix(2), np.eye(2))
    with pytest.raises(ValidationError):
        InputSelection((0, 0)).validate(3)
    with pytest.raises(ValidationError):
        InputSelection((3,)).validate(3)


# --- stage 1 ------------------------------------------------------------------------

def test_stage1_transform_reference_completion():
    ga = analyze(EX[1])
    T = build_stage1_transform(ga.v_star, ga.r_v_star, pv.EX1_T)
    np.testing.assert_allclose(T, pv.EX1_T, atol=ATOL)


def test_stage1_transform_full_space():
    full = Subspace.full(4)
    T = build_stage1_transform(full, full)
    np.testing.assert_allclose(T.T @ T, np.eye(4), atol=1e-14)


def test_stage1_transform_default_spans():
    ga = analyze(EX[1])
    T = build_stage1_transform(ga.v_star, ga.r_v_star)
    np.testing.assert_allclose(T.T @ T, np.eye(5), atol=1e-12)
    assert equals(Subspace.span(T[:, :1]), ga.r_v_star)
    assert equals(Subspace.span(T[:, :3]), ga.v_star)


def test_stage1_transform_rejects_bad_completion():
    ga = analyze(EX[1])
    with pytest.raises(ValidationError):
        build_stage1_transform(ga.v_star, ga.r_v_star, np.eye(5))
    with pytest.raises(ValidationError):
        build_stage1_transform(ga.v_star, ga.r_v_star, np.eye(4))
    with pytest.raises(ValidationError):
        build_stage1_transform(ga.r_v_star, ga.v_star)


def test_stage1_reference_values(ex1_trace):
    np.testing.assert_allclose(ex1_trace.trace.AF1, pv.EX1_AF1, atol=ATOL)
    np.testing.assert_allclose(ex1_trace.trace.CF1, pv.EX1_CF1, atol=ATOL)


def test_stage1_identity_transform():
    s = EX[1]
    AF1, CF1 = stage1(s, np.zeros((4, 5)), np.eye(5), 0, 0)
    np.testing.assert_array_equal(AF1, s.A)
    np.testing.assert_array_equal(CF1, s.C)


def test_stage1_detects_broken_pattern():
    ga = analyze(EX[1])
    T = build_stage1_transform(ga.v_star, ga.r_v_star)
    with pytest.raises(NumericalError):
        stage1(EX[1], np.zeros((4, 5)), T, 1, 2)


@pytest.mark.parametrize("seed", range(20))
def test_stage1_block_pattern_random(seed):
    s = suite(count=20, seed=314)[seed]
    ga = analyze(s)
    r, d = ga.r_v_star.dim, ga.v_star.dim
    T = build_stage1_transform(ga.v_star, ga.r_v_star)
    AF1, CF1 = stage1(s, ga.friend, T, r, d - r)
    assert np.abs(AF1[r:, :r]).max(initial=0) <= 1e-9
    assert np.abs(AF1[d:, r:d]).max(initial=0) <= 1e-9
    assert np.abs(CF1[:, :d]).max(initial=0) <= 1e-9


# --- stage 2 ------------------------------------------------------------------------

def test_stage2_reference_values(ex1_trace):
    t = ex1_trace.trace
    np.testing.assert_allclose(t.X, pv.EX1_X, atol=ATOL)
    np.testing.assert_allclose(t.Tprime, pv.EX1_TPRIME, atol=ATOL)
    np.testing.assert_allclose(t.AF2, pv.EX1_AF2, atol=ATOL)


def test_stage2_already_decoupled():
    M = np.diag([-1.0, 2.0, 3.0])
    X, Tp, AF2 = stage2(M, 1, 2)
    np.testing.assert_array_equal(X, np.zeros((1, 2)))
    np.testing.assert_array_equal(Tp, np.eye(3))
    np.testing.assert_array_equal(AF2, M)


@pytest.mark.parametrize("seed", range(20))
def test_stage2_random_block_triangular(seed):
    rng = np.random.default_rng(seed)
    r, q, o = 2, 3, 2
    n = r + q + o
    M = rng.normal(size=(n, n))
    M[r:, :r] = 0.0
    M[r + q:, r:r + q] = 0.0
    M[:r, :r] -= 5 * np.eye(r)
    X, Tp, AF2 = stage2(M, r, q)
    assert np.linalg.norm(AF2[:r, r:r + q], 2) <= 1e-10
    np.testing.assert_allclose(AF2[r:r + q, r:r + q], M[r:r + q, r:r + q], atol=1e-12)


def test_stage2_overlap_names_eigenvalue():
    M = np.array([[1.0, 1.0], [0.0, 1.0]])
    with pytest.raises(SpectraOverlapError, match="1"):
        stage2(M, 1, 1)


# --- stage 3 ------------------------------------------------------------------------

def test_stage3_reference_values(ex1_trace):
    t = ex1_trace.trace
    assert t.n_stable == 1
    np.testing.assert_allclose(t.Tsecond, pv.EX1_TSECOND, atol=ATOL)
    np.testing.assert_allclose(t.AF3, pv.EX1_AF3, atol=ATOL)


def test_stage3_schur_example1():
    t = run_pipeline(EX[1]).trace
    mid = t.AF3[1:3, 1:3]
    assert t.n_stable == 1
    assert abs(mid[1, 0]) <= 1e-12
    np.testing.assert_allclose(np.diag(mid), [-1.2509, 0.7534], atol=ATOL)


def test_stage3_already_ordered_is_identity():
    M = np.array([[-1.0, 0.0, 5.0, 1.0], [0.0, -2.0, 1.0, 0.0], [0.0, 0.0, 3.0, 0.0], [0.0, 0.0, 0.0, 1.0]])
    T2, AF3, ns = stage3(M, 1, 2)
    np.testing.assert_array_equal(T2, np.eye(4))
    assert ns == 1


def test_stage3_example2_defective():
    res = run_pipeline(EX[2])
    t = res.trace
    assert (t.n_stable, t.n_unstable) == (3, 0)
    W = res.structure.W
    assert match_multisets(np.linalg.eigvals(W), [-1, -1, -1], 1e-5)
    s = np.linalg.svd(W + np.eye(3), compute_uv=False)
    assert int(np.sum(s > 1e-8 * max(1.0, s[0]))) == 1


def test_stage3_eigen_split_refuses_defective():
    with pytest.raises(NumericalError):
        run_pipeline(EX[2], split="eigen")


def test_stage3_unknown_split():
    with pytest.raises(ValueError):
        stage3(np.eye(2), 0, 2, split="jordan")


def test_stage3_axis_zero_is_not_cancelled():
    M = np.diag([0.0, -1.0])
    _, AF3, ns = stage3(M, 0, 2, margin=1e-9)
    assert ns == 1 and AF3[0, 0] == pytest.approx(-1.0)


# --- resolving subspace --------------------------------------------------------------

def test_resolving_subspace_reference_values(ex1_trace):
    zs = ex1_trace.structure
    np.testing.assert_allclose(zs.VSmat, pv.EX1_VS, atol=ATOL)
    np.testing.assert_allclose(zs.W, pv.EX1_W, atol=ATOL)
    np.testing.assert_allclose(zs.L, pv.EX1_L, atol=ATOL)
    assert np.max(_sines(zs.VS, Subspace.span(pv.EX1_VS))) <= ATOL


def test_resolving_subspace_empty():
    res = run_pipeline(nmp_only_plant())
    zs = res.structure
    assert zs.VSmat.shape == (2, 0)
    assert zs.W.shape == (0, 0)
    assert zs.L.shape == (1, 0)
    assert zs.VS.dim == 0


def test_resolving_subspace_example3():
    zs = run_pipeline(EX[3], InputSelection(pv.EX3_SELECTION)).structure
    np.testing.assert_allclose(np.linalg.eigvals(zs.W), [pv.EX3_ZERO], atol=1e-12)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_resolving_subspace_inside_v_star(k):
    res = run_pipeline(EX[k])
    assert contains(res.analysis.v_star, res.structure.VS)
    assert np.all(np.linalg.eigvals(res.structure.W).real < 0)


# --- compensator and cascade --------------------------------------------------------------

def test_compensator_example1(ex1_trace):
    c = ex1_trace.compensator
    np.testing.assert_allclose(c.A, pv.EX1_AF, atol=ATOL)
    np.testing.assert_array_equal(c.B, pv.EX1_BF)
    np.testing.assert_allclose(c.C, pv.EX1_CF, atol=ATOL)
    np.testing.assert_array_equal(c.D, pv.EX1_DF)


def test_compensator_example3_pattern():
    c = run_pipeline(EX[3], InputSelection(pv.EX3_SELECTION)).compensator
    np.testing.assert_array_equal(c.B, pv.EX3_BF)
    np.testing.assert_array_equal(c.D, pv.EX3_DF)
    assert not np.any(c.D[0])


def test_static_compensator_and_identity_cascade():
    s = nmp_only_plant()
    res = run_pipeline(s)
    assert res.compensator.n == 0
    np.testing.assert_array_equal(res.compensator.D, np.eye(1))
    assert res.cascade.allclose(s)
    assert res.report.passed


def test_cascade_example1(ex1_trace):
    c = ex1_trace.cascade
    np.testing.assert_array_equal(c.A, EX[1].A)
    np.testing.assert_array_equal(c.C, EX[1].C)
    np.testing.assert_allclose(c.B, pv.EX1_BE, atol=ATOL)
    np.testing.assert_allclose(c.D, pv.EX1_DE, atol=ATOL)


def test_cascade_example2_structure():
    res = run_pipeline(EX[2])
    c = res.cascade
    np.testing.assert_array_equal(c.B[:, 3:], EX[2].B)
    np.testing.assert_array_equal(c.B[:, :3], -res.structure.VSmat)
    np.testing.assert_array_equal(c.D, np.zeros((2, 5)))


def test_cascade_construction_matches_parts():
    res = run_pipeline(EX[3], InputSelection((1, 2)))
    again = cascade_equivalent(EX[3], res.structure, InputSelection((1, 2)))
    assert again.allclose(res.cascade)
    comp = synthesize_compensator(res.structure, 3, InputSelection((1, 2)))
    assert comp.allclose(res.compensator)


# --- verification --------------------------------------------------------------------

def test_verify_example1(ex1_trace):
    rep = ex1_trace.report
    assert rep.passed
    np.testing.assert_allclose(rep.cascade_zeros, pv.EX1_CASCADE_ZEROS, atol=ATOL)
    assert rep.cascade_reachable and rep.cascade_right_invertible


def test_verify_example2():
    rep = run_pipeline(EX[2]).report
    assert rep.passed
    assert len(rep.cascade_zeros) == 0
    assert not rep.cascade_reachable and not rep.cascade_right_invertible
    assert rep.compensator_order == pv.EX2_ORDER


def test_verify_example3():
    rep = run_pipeline(EX[3], InputSelection(pv.EX3_SELECTION)).report
    assert rep.passed
    assert len(rep.cascade_zeros) == 0
    assert rep.cascade_reachable and rep.cascade_right_invertible


def test_verify_detects_perturbed_cascade():
    res = run_pipeline(EX[1])
    c = res.cascade
    B = c.B.copy()
    B[1, 1] += 0.1
    rep = verify_cancellation(EX[1], StateSpaceSystem(c.A, B, c.C, c.D), res.compensator)
    assert not rep.checks["markov"][0]
    assert not rep.passed


def test_markov_mismatch_shape_guard():
    a = StateSpaceSystem(np.eye(1), np.ones((1, 1)), np.ones((1, 1)), np.zeros((1, 1)))
    b = StateSpaceSystem(np.eye(1), np.ones((1, 2)), np.ones((1, 1)), np.zeros((1, 2)))
    assert markov_mismatch(a, b, 3) == np.inf
    assert markov_mismatch(a, a, 3) == 0.0


def test_series_is_literal_interconnection():
    res = run_pipeline(EX[1])
    ser = series(res.compensator, EX[1])
    assert ser.n == 6
    assert markov_mismatch(ser, res.cascade, 10) <= 1e-12


# --- basis independence ---------------------------------------------------------------

def _report_key(res):
    rep = res.report
    return (
        rep.compensator_order,
        rep.reachable, rep.cascade_reachable,
        rep.right_invertible, rep.cascade_right_invertible,
    )


def test_example1_default_equals_printed_trace_report(ex1_trace):
    default = run_pipeline(EX[1])
    assert _report_key(default) == _report_key(ex1_trace)
    assert match_multisets(default.report.cascade_zeros, ex1_trace.report.cascade_zeros, 1e-9)
    assert equals(default.structure.VS, ex1_trace.structure.VS, _loose())


@pytest.mark.parametrize("seed", range(25))
def test_report_invariant_under_friend_and_completion(seed):
    s = suite(count=25, seed=555)[seed]
    rng = np.random.default_rng(seed)
    base = run_pipeline(s)
    ga = base.analysis
    r, d, n = ga.r_v_star.dim, ga.v_star.dim, s.n
    T = np.hstack([
        ga.r_v_star.basis @ rng.normal(size=(r, r)),
        ga.v_star.basis @ rng.normal(size=(d, d - r)),
        rng.normal(size=(n, n - d)),
    ])
    F = friend(s, ga.v_star, extension="lstsq")
    other = run_pipeline(s, F=F, T=T)
    assert other.report.passed
    assert _report_key(other) == _report_key(base)
    assert match_multisets(other.report.cascade_zeros, base.report.cascade_zeros, 1e-6)
    assert match_multisets(np.linalg.eigvals(other.structure.W), np.linalg.eigvals(base.structure.W), 1e-6)
    assert np.max(_sines(other.structure.VS, base.structure.VS), initial=0.0) <= 1e-6


def test_pipeline_deterministic():
    a = run_pipeline(EX[1])
    b = run_pipeline(EX[1])
    np.testing.assert_array_equal(a.structure.VSmat, b.structure.VSmat)
    np.testing.assert_array_equal(a.cascade.B, b.cascade.B)


def _loose():
    from geozero.matkit import TolerancePolicy

    return TolerancePolicy(eq_tol=1e-6)


def _sines(U, V):
    if U.dim != V.dim:
        return np.array([np.inf])
    return np.linalg.norm(U.complement_projector @ V.basis, 2, keepdims=True).ravel()
