"""Dense linear algebra kernels.

Matrices and vectors are plain float64 numpy arrays. The helpers here add the
shape/finiteness checks and the convergence contracts the rest of the package
relies on: Cholesky solves for SPD systems, a cyclic Jacobi eigensolver for
symmetric matrices, and a restarted power iteration for spectral radii of
general (non-symmetric) square matrices.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, FactorizationError, ShapeError

SYMMETRY_RTOL = 1e-12
EIGEN_RTOL = 1e-8
RADIUS_RTOL = 1e-6


def as_matrix(A, name: str = "A") -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ShapeError(f"{name} has non-finite entries")
    return A


def as_vector(x, name: str = "x") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ShapeError(f"{name} has non-finite entries")
    return x


def _check_symmetric(A: np.ndarray, rtol: float) -> None:
    if A.shape[0] != A.shape[1]:
        raise ShapeError(f"matrix must be square, got {A.shape}")
    scale = max(np.max(np.abs(A)), np.finfo(float).tiny)
    if np.max(np.abs(A - A.T)) > rtol * scale:
        raise ShapeError("matrix is not symmetric")


def matvec(A, x) -> np.ndarray:
    A = as_matrix(A)
    x = as_vector(x)
    if A.shape[1] != x.shape[0]:
        raise ShapeError(f"cannot multiply {A.shape} matrix by length-{x.shape[0]} vector")
    return A @ x


def spd_solve(A, b, *, sym_rtol: float = SYMMETRY_RTOL) -> np.ndarray:
    """Solve ``A x = b`` for symmetric positive definite ``A`` by Cholesky."""
    A = as_matrix(A)
    b = as_vector(b, "b")
    _check_symmetric(A, sym_rtol)
    if A.shape[0] != b.shape[0]:
        raise ShapeError(f"A is {A.shape} but b has length {b.shape[0]}")
    try:
        factor = scipy.linalg.cho_factor(A, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(f"Cholesky failed, matrix not positive definite: {exc}") from exc
    return scipy.linalg.cho_solve(factor, b, check_finite=False)


def jacobi_eigenvalues(A, *, rtol: float = 1e-15, max_sweeps: int = 100) -> np.ndarray:
    """All eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps until the off-diagonal Frobenius mass falls below ``rtol`` times the
    matrix norm. Returns eigenvalues in descending order.
    """
    A = as_matrix(A).copy()
    _check_symmetric(A, SYMMETRY_RTOL)
    n = A.shape[0]
    A = 0.5 * (A + A.T)
    total = np.linalg.norm(A)
    if n == 1 or total == 0.0:
        return np.sort(np.diag(A))[::-1]
    target = rtol * total
    for _ in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(np.diag(A)))
        if off <= target:
            return np.sort(np.diag(A))[::-1]
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p = A[:, p].copy()
                col_q = A[:, q]
                A[:, p] = c * col_p - s * col_q
                A[:, q] = s * col_p + c * col_q
                row_p = A[p, :].copy()
                row_q = A[q, :]
                A[p, :] = c * row_p - s * row_q
                A[q, :] = s * row_p + c * row_q
                A[p, q] = A[q, p] = 0.0
    raise ConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps")


def sym_eigen_extremes(A, *, rtol: float = EIGEN_RTOL) -> tuple[float, float]:
    """Return ``(lambda_max, lambda_min)`` of a symmetric matrix."""
    # Jacobi runs to ~machine precision; rtol is only the contract callers get.
    vals = jacobi_eigenvalues(A, rtol=min(rtol * 1e-7, 1e-15))
    return float(vals[0]), float(vals[-1])


def _ritz_radius(A: np.ndarray, x: np.ndarray, dim: int) -> tuple[float, float]:
    """Largest Ritz value modulus from an Arnoldi basis started at ``x``.

    Returns the estimate and the relative residual of the corresponding Ritz
    pair. Stacking several iterates handles eigenvalues that share the top
    modulus (complex pairs, +/- pairs, cyclic block operators), where the plain
    norm ratio of successive iterates oscillates instead of converging.
    """
    n = A.shape[0]
    dim = min(dim, n)
    V = np.zeros((n, dim + 1))
    H = np.zeros((dim + 1, dim))
    V[:, 0] = x / np.linalg.norm(x)
    scale = np.linalg.norm(A, 1)
    m = dim
    for j in range(dim):
        w = A @ V[:, j]
        for _ in range(2):
            h = V[:, : j + 1].T @ w
            w = w - V[:, : j + 1] @ h
            H[: j + 1, j] += h
        H[j + 1, j] = np.linalg.norm(w)
        if H[j + 1, j] <= 1e-13 * scale:
            m = j + 1
            break
        V[:, j + 1] = w / H[j + 1, j]
    vals, vecs = np.linalg.eig(H[:m, :m])
    i = int(np.argmax(np.abs(vals)))
    lam = vals[i]
    # residual ||A V y - lam V y|| = |h_{m+1,m}| |y_m|
    y = vecs[:, i]
    resid = abs(H[m, m - 1] * y[m - 1]) if m < H.shape[0] else 0.0
    return float(abs(lam)), float(resid / max(abs(lam), 1e-300))


def spectral_radius(
    A,
    *,
    rtol: float = RADIUS_RTOL,
    restarts: int = 5,
    max_iter: int = 20000,
    krylov_dim: int = 30,
    seed: int = 0,
) -> float:
    """Largest eigenvalue modulus of a square matrix.

    Power iteration from ``restarts`` random starts. Every block of iterations
    the current direction seeds a small Arnoldi basis whose top Ritz modulus is
    the growth-rate estimate; a restart is converged once two consecutive
    estimates agree to ``rtol`` and the Ritz residual is below ``rtol``. The
    result is the largest converged estimate, checked against the induced 1- and
    inf-norms, which bound the radius from above.
    """
    A = as_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise ShapeError(f"matrix must be square, got {A.shape}")
    n = A.shape[0]
    if not np.any(A):
        return 0.0
    norm_bound = min(np.linalg.norm(A, 1), np.linalg.norm(A, np.inf))
    rng = np.random.default_rng(seed)
    block = 25
    estimates: list[float] = []
    best = 0.0
    for _ in range(max(restarts, 1)):
        x = rng.standard_normal(n)
        prev = None
        done = False
        for it in range(0, max_iter, block):
            for _ in range(block):
                x = A @ x
                nrm = np.linalg.norm(x)
                if nrm == 0.0:
                    break
                x /= nrm
            if np.linalg.norm(x) == 0.0:
                # start vector annihilated: nilpotent on its Krylov space
                est, resid = 0.0, 0.0
                done = True
                break
            est, resid = _ritz_radius(A, x, krylov_dim)
            best = max(best, est)
            if prev is not None and abs(est - prev) <= rtol * max(est, 1e-300) * 0.1 and resid <= rtol:
                done = True
                break
            prev = est
        if done:
            estimates.append(est)
    if not estimates:
        raise ConvergenceError(
            f"power iteration did not converge in {max_iter} iterations", best=best
        )
    rho = max(estimates)
    if rho > norm_bound * (1 + 1e-8):
        raise ConvergenceError("radius estimate exceeds an induced matrix norm", best=rho)
    return rho
