"""Linear-system view of buffered gradient descent on least squares.

With fixed partitions and a constant rate, one mini-batch step is the affine
map ``theta -> (I - alpha Sxx_m) theta + alpha Sxy_m``. Composing the M steps
of an epoch gives ``A theta + alpha B`` and T epochs give ``C theta + alpha D``
with ``C = A^T`` and ``D = (I + A + ... + A^{T-1}) B``. Stacking the K buffer
estimates, block k is fed by block k-1 and block 1 by block K, which is the
cyclic operator ``Cstar`` assembled here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ModeError, SingularityError
from .losses import second_moments
from .numerics import spectral_radius, sym_eigen_extremes


@dataclass(frozen=True)
class BufferOperators:
    A: np.ndarray
    C: np.ndarray
    B: np.ndarray
    D: np.ndarray


@dataclass(frozen=True)
class LinearSystem:
    Cstar: np.ndarray
    Dstar: np.ndarray
    alpha: float
    T: int
    M: int
    K: int
    p: int
    operators: tuple[BufferOperators, ...]


def _require_fixed(plan) -> None:
    if plan.mode != "fixed":
        raise ModeError(f"the linear system needs fixed partitions, got mode {plan.mode!r}")


def build_buffer_operators(dataset, plan, k: int, alpha: float, T: int) -> BufferOperators:
    """Operators of buffer ``k`` (1-based) for rate ``alpha`` and ``T`` epochs.

    Later mini-batches multiply on the left: ``A = Delta_M ... Delta_1`` and
    ``B = sum_m Delta_M ... Delta_{m+1} Sxy_m``, the order in which the steps
    are applied.
    """
    _require_fixed(plan)
    p = dataset.n_features
    eye = np.eye(p)
    A = eye.copy()
    B = np.zeros(p)
    buffer = plan.buffers(1)[k - 1]
    for rows in plan.minibatches(1, k, 1, buffer):
        X = np.asarray(dataset.X[rows])
        Y = np.asarray(dataset.Y[rows])
        n = X.shape[0]
        delta = eye - alpha * (X.T @ X) / n
        A = delta @ A
        B = delta @ B + X.T @ Y / n
    C = np.linalg.matrix_power(A, T)
    D = B.copy()
    for _ in range(T - 1):  # Horner: B + A(B + A(...))
        D = A @ D + B
    return BufferOperators(A, C, B, D)


def assemble_system(dataset, plan, alpha: float, T: int) -> LinearSystem:
    _require_fixed(plan)
    K, p = plan.K, dataset.n_features
    ops = tuple(build_buffer_operators(dataset, plan, k, alpha, T) for k in range(1, K + 1))
    Cstar = np.zeros((K * p, K * p))
    for k, op in enumerate(ops):
        src = (k - 1) % K
        Cstar[k * p : (k + 1) * p, src * p : (src + 1) * p] = op.C
    Dstar = np.concatenate([op.D for op in ops])
    return LinearSystem(Cstar, Dstar, float(alpha), int(T), plan.M, K, p, ops)


def apply_system(system: LinearSystem, stacked, sweep: str = "simultaneous") -> np.ndarray:
    """One round of the stacked recurrence ``Cstar x + alpha Dstar``."""
    stacked = np.asarray(stacked, dtype=np.float64)
    if sweep == "simultaneous":
        return system.Cstar @ stacked + system.alpha * system.Dstar
    if sweep != "sequential":
        raise ValueError(f"unknown sweep {sweep!r}")
    p = system.p
    out = stacked.copy()
    prev = out[(system.K - 1) * p :]
    for k, op in enumerate(system.operators):
        block = op.C @ prev + system.alpha * op.D
        out[k * p : (k + 1) * p] = block
        prev = block
    return out


def stable_solution(system: LinearSystem, *, max_condition: float = 1e13) -> np.ndarray:
    """Fixed point ``alpha (I - Cstar)^{-1} Dstar`` by LU plus one refinement step."""
    n = system.Cstar.shape[0]
    omega = np.eye(n) - system.Cstar
    rhs = system.alpha * system.Dstar
    cond = float(np.linalg.cond(omega, 1))
    if not np.isfinite(cond) or cond > max_condition:
        raise SingularityError(f"I - Cstar is numerically singular (cond ~ {cond:.3g})", cond)
    lu = scipy.linalg.lu_factor(omega, check_finite=False)
    x = scipy.linalg.lu_solve(lu, rhs, check_finite=False)
    x += scipy.linalg.lu_solve(lu, rhs - omega @ x, check_finite=False)
    return x


def fixed_point_residual(system: LinearSystem, theta_star) -> float:
    """``||theta* - (Cstar theta* + alpha Dstar)||`` relative to ``1 + ||theta*||``."""
    resid = theta_star - apply_system(system, theta_star, "simultaneous")
    return float(np.linalg.norm(resid) / (1.0 + np.linalg.norm(theta_star)))


@dataclass(frozen=True)
class Certificate:
    rho_bound: float
    rho_empirical: float
    rho_per_round: float
    alpha_max: float
    lambda_max: float
    lambda_min: float
    diverges: bool


def convergence_certificate(system: LinearSystem, dataset) -> Certificate:
    """Contraction diagnostics of the stacked map.

    ``rho_bound`` plugs the extreme eigenvalues of the full-sample ``Sxx`` into
    ``max(|1 - alpha l_min|, |1 - alpha l_max|)^(TM)``; ``rho_empirical`` is the
    spectral radius of ``Cstar`` (per simultaneous round, or per buffer visit
    of the training loop); ``rho_per_round`` is its K-th power, the contraction
    per full pass over the buffers. ``diverges`` flags ``rho_empirical >= 1``.
    """
    Sxx, _ = second_moments(dataset)
    lam_max, lam_min = sym_eigen_extremes(Sxx)
    a, tm = system.alpha, system.T * system.M
    rho_bound = max(abs(1 - a * lam_min), abs(1 - a * lam_max)) ** tm
    rho = spectral_radius(system.Cstar)
    return Certificate(
        rho_bound=rho_bound,
        rho_empirical=rho,
        rho_per_round=rho**system.K,
        alpha_max=2.0 / lam_max,
        lambda_max=lam_max,
        lambda_min=lam_min,
        diverges=rho >= 1.0,
    )


def ols_distance(system: LinearSystem, dataset) -> float:
    """``||theta* - 1_K (x) theta_ols||``: how far the fixed point sits from OLS."""
    from .oracles import ols_fit

    theta_star = stable_solution(system)
    theta_ols = ols_fit(dataset).theta_hat
    return float(np.linalg.norm(theta_star - np.tile(theta_ols, system.K)))
