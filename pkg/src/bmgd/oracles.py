"""Reference estimators and brute-force trajectories used to check the engine."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FactorizationError, RankError, SeparationError
from .losses import LOGISTIC, full_loss, second_moments, sigmoid
from .numerics import spd_solve


@dataclass(frozen=True)
class FitResult:
    theta_hat: np.ndarray
    iterations: int
    final_gradient_norm: float


def ols_fit(dataset) -> FitResult:
    """Full-sample least squares via the normal equations."""
    Sxx, Sxy = second_moments(dataset)
    try:
        theta = spd_solve(Sxx, Sxy)
    except FactorizationError as exc:
        raise RankError(f"design matrix is rank deficient: {exc}") from exc
    grad = Sxx @ theta - Sxy
    return FitResult(theta, 1, float(np.linalg.norm(grad)))


def _logistic_parts(X, Y, theta):
    eta = X @ theta
    prob = sigmoid(eta)
    n = X.shape[0]
    grad = X.T @ (prob - Y) / n
    hess = (X * (prob * (1.0 - prob))[:, None]).T @ X / n
    return grad, 0.5 * (hess + hess.T)


def logistic_newton_direction(dataset, theta) -> np.ndarray:
    """Newton direction ``-H^{-1} g`` of the mean logistic loss at ``theta``."""
    X, Y = np.asarray(dataset.X), np.asarray(dataset.Y)
    grad, hess = _logistic_parts(X, Y, np.asarray(theta, float))
    return -spd_solve(hess, grad)


def _check_not_separated(X, Y, theta) -> None:
    # a finite MLE cannot classify every sample with a strictly positive margin
    margins = (2.0 * Y - 1.0) * (X @ theta)
    if np.all(margins > 0):
        raise SeparationError("fitted coefficients separate the classes perfectly: no finite MLE")


def logistic_mle(
    dataset,
    *,
    tol: float = 1e-10,
    max_iter: int = 100,
    max_halvings: int = 30,
    separation_norm: float = 1e6,
) -> FitResult:
    """Logistic maximum likelihood by damped Newton-Raphson (IRLS)."""
    X, Y = np.asarray(dataset.X), np.asarray(dataset.Y)
    theta = np.zeros(X.shape[1])
    loss = full_loss(LOGISTIC, theta, dataset)
    for it in range(1, max_iter + 1):
        grad, hess = _logistic_parts(X, Y, theta)
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= tol:
            _check_not_separated(X, Y, theta)
            return FitResult(theta, it - 1, gnorm)
        try:
            step = -spd_solve(hess, grad)
        except FactorizationError as exc:
            raise SeparationError(f"Hessian lost definiteness, data likely separable: {exc}") from exc
        scale = 1.0
        for _ in range(max_halvings + 1):
            cand = theta + scale * step
            cand_loss = full_loss(LOGISTIC, cand, dataset)
            if cand_loss <= loss + 1e-15 * abs(loss):  # rounding-level ties accepted
                break
            scale *= 0.5
        else:
            # no decrease found: at the floating-point floor of the loss
            grad_norm = float(np.linalg.norm(_logistic_parts(X, Y, theta)[0]))
            if grad_norm <= tol * 1e3:
                _check_not_separated(X, Y, theta)
                return FitResult(theta, it, grad_norm)
            raise SeparationError("step halving failed to decrease the loss")
        theta, loss = cand, cand_loss
        if np.linalg.norm(theta) > separation_norm:
            raise SeparationError(f"||theta|| exceeded {separation_norm:g}: perfect separation")
    grad, _ = _logistic_parts(X, Y, theta)
    gnorm = float(np.linalg.norm(grad))
    if gnorm > tol:
        raise SeparationError(f"Newton did not reach gradient norm {tol:g} in {max_iter} iterations")
    _check_not_separated(X, Y, theta)
    return FitResult(theta, max_iter, gnorm)


def recurrence_trajectory(dataset, plan, alpha: float, T: int, R: int, theta0, sweep: str = "sequential"):
    """Iterate the stacked buffer-cycle affine map for R rounds.

    ``theta0`` is a p-vector (replicated to every buffer block) or a stacked
    Kp-vector. Returns an ``(R + 1, K p)`` array whose row ``r`` is the stacked
    vector of per-buffer estimates after round ``r``.

    ``sweep="sequential"`` updates the blocks in buffer order, each block
    reading the block just computed; this is exactly what the training loop
    does. ``sweep="simultaneous"`` applies the stacked map to the previous
    stacked vector as a whole; it has the same fixed point and contracts at the
    spectral radius of the stacked operator per round.
    """
    from .linsys import apply_system, assemble_system

    system = assemble_system(dataset, plan, alpha, T)
    K, p = system.K, system.p
    theta0 = np.asarray(theta0, dtype=np.float64)
    state = np.tile(theta0, K) if theta0.shape == (p,) else theta0.copy()
    out = np.empty((R + 1, K * p))
    out[0] = state
    for r in range(1, R + 1):
        state = apply_system(system, state, sweep)
        out[r] = state
    return out
