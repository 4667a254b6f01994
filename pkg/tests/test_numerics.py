import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bmgd.datagen import ar1_covariance
from bmgd.errors import ConvergenceError, FactorizationError, ShapeError
from bmgd.numerics import jacobi_eigenvalues, matvec, spd_solve, spectral_radius, sym_eigen_extremes

from conftest import random_spd


def test_matvec_identity():
    assert np.array_equal(matvec(np.eye(2), [3.0, 4.0]), [3.0, 4.0])


def test_matvec_hand_arithmetic():
    assert np.array_equal(matvec([[1, 2], [3, 4]], [1, 1]), [3.0, 7.0])


def test_matvec_zero_matrix():
    assert np.array_equal(matvec(np.zeros((2, 2)), [5.0, 6.0]), [0.0, 0.0])


def test_matvec_rejects_bad_shapes_and_nan():
    with pytest.raises(ShapeError):
        matvec(np.eye(2), [1.0, 2.0, 3.0])
    with pytest.raises(ShapeError):
        matvec([[np.nan, 0], [0, 1]], [1.0, 1.0])


def test_spd_solve_identity_and_diagonal():
    assert np.allclose(spd_solve(np.eye(3), [1.0, 2.0, 3.0]), [1, 2, 3], atol=0, rtol=1e-15)
    assert np.allclose(spd_solve([[4.0, 0], [0, 9.0]], [8.0, 27.0]), [2, 3], atol=0, rtol=1e-15)


def test_spd_solve_random_residual():
    rng = np.random.default_rng(0)
    A = random_spd(rng, 5)
    b = rng.standard_normal(5)
    x = spd_solve(A, b)
    assert np.linalg.norm(A @ x - b) <= 1e-10


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 200), seed=st.integers(0, 2**31))
def test_spd_solve_then_matvec_reproduces_b(n, seed):
    rng = np.random.default_rng(seed)
    A = random_spd(rng, n, cond=1e4)
    b = rng.standard_normal(n)
    back = matvec(A, spd_solve(A, b))
    assert np.linalg.norm(back - b) <= 1e-10 * max(np.linalg.norm(b), 1.0)


def test_spd_solve_indefinite_raises():
    with pytest.raises(FactorizationError):
        spd_solve([[1.0, 2.0], [2.0, 1.0]], [1.0, 1.0])


def test_spd_solve_nonsymmetric_raises():
    with pytest.raises(ShapeError):
        spd_solve([[1.0, 0.5], [0.0, 1.0]], [1.0, 1.0])


def test_eigen_extremes_diagonal_and_hand_case():
    assert sym_eigen_extremes(np.diag([3.0, 1.0])) == pytest.approx((3.0, 1.0), rel=1e-14)
    assert sym_eigen_extremes([[2.0, 1.0], [1.0, 2.0]]) == pytest.approx((3.0, 1.0), rel=1e-14)


def test_eigen_extremes_ar1_against_full_jacobi_set():
    S = ar1_covariance(3, 0.8)
    full = jacobi_eigenvalues(S)
    # characteristic polynomial of the 3x3 AR(1) matrix, solved independently
    ref = np.sort(np.roots(np.poly(S)).real)[::-1]
    assert np.allclose(full, ref, rtol=1e-12)
    lmax, lmin = sym_eigen_extremes(S)
    assert (lmax, lmin) == pytest.approx((full[0], full[-1]), rel=1e-14)


@settings(max_examples=20, deadline=None)
@given(n=st.integers(2, 40), seed=st.integers(0, 2**31))
def test_eigen_extremes_recover_known_spectrum(n, seed):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    d = rng.uniform(0.1, 10.0, n)
    lmax, lmin = sym_eigen_extremes((Q * d) @ Q.T)
    assert lmax == pytest.approx(d.max(), rel=1e-8)
    assert lmin == pytest.approx(d.min(), rel=1e-8)


def test_spectral_radius_diagonal():
    assert spectral_radius(np.diag([0.5, -0.9])) == pytest.approx(0.9, rel=1e-6)


def test_spectral_radius_rotation_like():
    # eigenvalues are +-0.9i
    assert spectral_radius([[0.0, 1.0], [-0.81, 0.0]]) == pytest.approx(0.9, rel=1e-6)


def test_spectral_radius_zero_and_nilpotent():
    assert spectral_radius(np.zeros((3, 3))) == 0.0
    assert spectral_radius([[0.0, 1.0], [0.0, 0.0]]) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=15, deadline=None)
@given(n=st.integers(2, 30), c=st.floats(-5, 5).filter(lambda v: abs(v) > 1e-3), seed=st.integers(0, 2**31))
def test_spectral_radius_scales_with_constant(n, c, seed):
    A = np.random.default_rng(seed).standard_normal((n, n))
    assert spectral_radius(c * A) == pytest.approx(abs(c) * spectral_radius(A), rel=1e-6)


def test_spectral_radius_matches_dense_eigensolver():
    rng = np.random.default_rng(4)
    for n in (5, 40, 120):
        A = rng.standard_normal((n, n)) / np.sqrt(n)
        assert spectral_radius(A) == pytest.approx(np.max(np.abs(np.linalg.eigvals(A))), rel=1e-6)


def test_spectral_radius_budget_exhausted_reports_best():
    A = np.random.default_rng(1).standard_normal((60, 60))
    with pytest.raises(ConvergenceError) as info:
        spectral_radius(A, max_iter=1, krylov_dim=2, restarts=1)
    assert info.value.best is not None
