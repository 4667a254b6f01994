"""Loss functions, gradients, and the PL constant for least squares.

Least squares carries a 1/2 factor, ``(2n)^-1 sum (y - x'theta)^2``, so its
gradient is the moment form ``Sxx theta - Sxy`` and one gradient step is the
affine map ``(I - alpha Sxx) theta + alpha Sxy``.

GLM losses drop the dispersion parameter: ``-n^-1 sum {y x'theta - b(x'theta)}``
for a convex cumulant ``b``. Logistic regression is the GLM with
``b(t) = log(1 + e^t)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError, RankError, ShapeError
from .numerics import sym_eigen_extremes


def log1pexp(t):
    """log(1 + e^t) without overflow."""
    t = np.asarray(t, dtype=np.float64)
    return np.maximum(t, 0.0) + np.log1p(np.exp(-np.abs(t)))


def sigmoid(t):
    t = np.asarray(t, dtype=np.float64)
    return 0.5 * (1.0 + np.tanh(0.5 * t))


def _sigmoid_slope(t):
    s = sigmoid(t)
    return s * (1.0 - s)


@dataclass(frozen=True)
class LossModel:
    kind: str
    b: Callable | None = None
    b_dot: Callable | None = None
    b_ddot: Callable | None = None
    name: str = ""

    def __post_init__(self):
        if self.kind == "least_squares":
            return
        if self.kind not in ("logistic", "glm"):
            raise DomainError(f"unknown loss kind {self.kind!r}")
        if self.b is None or self.b_dot is None or self.b_ddot is None:
            raise DomainError("GLM losses need b, b_dot and b_ddot")
        grid = np.linspace(-20.0, 20.0, 81)
        if np.any(np.asarray(self.b_ddot(grid)) < 0):
            raise DomainError("cumulant b is not convex: b_ddot < 0 on the check grid")

    @property
    def is_glm(self) -> bool:
        return self.kind != "least_squares"


LEAST_SQUARES = LossModel("least_squares", name="least_squares")
LOGISTIC = LossModel("logistic", log1pexp, sigmoid, _sigmoid_slope, name="logistic")


def glm(b: Callable, b_dot: Callable, b_ddot: Callable, name: str = "glm") -> LossModel:
    return LossModel("glm", b, b_dot, b_ddot, name=name)


def model_for(kind: str) -> LossModel:
    """Default loss for a dataset kind or loss name."""
    if kind in ("linear", "least_squares"):
        return LEAST_SQUARES
    if kind in ("binary", "logistic"):
        return LOGISTIC
    raise DomainError(f"no default loss for {kind!r}")


@dataclass(frozen=True)
class BatchView:
    rows: np.ndarray
    X: np.ndarray
    Y: np.ndarray

    @classmethod
    def from_dataset(cls, dataset, rows) -> "BatchView":
        rows = np.asarray(rows, dtype=np.int64)
        if rows.ndim != 1:
            raise ShapeError("row indices must be 1-D")
        if rows.size and (rows.min() < 0 or rows.max() >= dataset.n_samples):
            raise DomainError("row index out of range")
        if np.unique(rows).size != rows.size:
            raise DomainError("row indices must be unique")
        return cls(rows, np.asarray(dataset.X[rows]), np.asarray(dataset.Y[rows]))

    @property
    def size(self) -> int:
        return self.rows.size


def loss_value(model: LossModel, theta, X, Y) -> float:
    n = X.shape[0]
    if n == 0:
        raise DomainError("empty batch")
    eta = X @ theta
    if model.kind == "least_squares":
        resid = Y - eta
        return float(resid @ resid) / (2.0 * n)
    return -float(np.sum(Y * eta - model.b(eta))) / n


def loss_gradient(model: LossModel, theta, X, Y) -> np.ndarray:
    n = X.shape[0]
    if n == 0:
        raise DomainError("empty batch")
    eta = X @ theta
    if model.kind == "least_squares":
        return X.T @ (eta - Y) / n
    return X.T @ (model.b_dot(eta) - Y) / n


def value(model: LossModel, theta, batch: BatchView) -> float:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (batch.X.shape[1],):
        raise ShapeError(f"theta has shape {theta.shape}, expected ({batch.X.shape[1]},)")
    return loss_value(model, theta, batch.X, batch.Y)


def gradient(model: LossModel, theta, batch: BatchView) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (batch.X.shape[1],):
        raise ShapeError(f"theta has shape {theta.shape}, expected ({batch.X.shape[1]},)")
    return loss_gradient(model, theta, batch.X, batch.Y)


def full_loss(model: LossModel, theta, dataset, chunk: int = 65536) -> float:
    """Loss over the whole dataset, read in row chunks (works on memmaps)."""
    N = dataset.n_samples
    total = 0.0
    for start in range(0, N, chunk):
        X = np.asarray(dataset.X[start : start + chunk])
        Y = np.asarray(dataset.Y[start : start + chunk])
        total += loss_value(model, theta, X, Y) * X.shape[0]
    return total / N


def second_moments(dataset, chunk: int = 65536) -> tuple[np.ndarray, np.ndarray]:
    """Full-sample ``Sxx = X'X / N`` and ``Sxy = X'Y / N``."""
    N, p = dataset.n_samples, dataset.n_features
    Sxx = np.zeros((p, p))
    Sxy = np.zeros(p)
    for start in range(0, N, chunk):
        X = np.asarray(dataset.X[start : start + chunk])
        Y = np.asarray(dataset.Y[start : start + chunk])
        Sxx += X.T @ X
        Sxy += X.T @ Y
    Sxx /= N
    Sxx = 0.5 * (Sxx + Sxx.T)
    return Sxx, Sxy / N


def pl_constant_ls(dataset) -> float:
    """Smallest eigenvalue of the sample second-moment matrix.

    For the half-scaled squared loss this is the exact PL constant:
    ``||grad L||^2 >= 2 mu (L - L*)`` with ``mu = lambda_min(Sxx)``.
    """
    Sxx, _ = second_moments(dataset)
    lam_max, lam_min = sym_eigen_extremes(Sxx)
    if lam_min <= 1e-12 * max(lam_max, 1.0):
        raise RankError(f"sample second-moment matrix is singular (lambda_min={lam_min:.3g})")
    return lam_min
