import numpy as np
import pytest

from bmgd.datagen import Dataset, gen_logistic_dataset
from bmgd.engine import BmgdConfig, run_bmgd
from bmgd.errors import RankError, SeparationError
from bmgd.losses import LOGISTIC, LEAST_SQUARES, full_loss, second_moments
from bmgd.oracles import logistic_mle, logistic_newton_direction, ols_fit, recurrence_trajectory
from bmgd.partition import PartitionPlan
from bmgd.schedule import Constant

from conftest import noiseless


def test_ols_noiseless():
    ds, theta = noiseless()
    fit = ols_fit(ds)
    assert np.max(np.abs(fit.theta_hat - theta)) <= 1e-8
    assert fit.final_gradient_norm <= 1e-10


def test_ols_scalar_case():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(50)
    y = 2 * x + rng.standard_normal(50)
    fit = ols_fit(Dataset(x[:, None], y))
    assert fit.theta_hat[0] == pytest.approx((x @ y) / (x @ x), rel=1e-14)


def test_ols_rank_deficient():
    X = np.ones((20, 2))
    with pytest.raises(RankError):
        ols_fit(Dataset(X, np.zeros(20)))


def numeric_newton(ds, theta, h=1e-5):
    p = theta.size
    grad = lambda th: ds.X.T @ (1 / (1 + np.exp(-ds.X @ th)) - ds.Y) / ds.n_samples  # noqa: E731
    H = np.zeros((p, p))
    for j in range(p):
        e = np.zeros(p)
        e[j] = h
        H[:, j] = (grad(theta + e) - grad(theta - e)) / (2 * h)
    return -np.linalg.solve(0.5 * (H + H.T), grad(theta))


def test_first_newton_direction_matches_numeric():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((400, 3))
    X = np.vstack([X, -X])  # symmetric design
    Y = np.concatenate([np.ones(400), np.zeros(400)])
    Y[:100] = 0.0
    Y[400:500] = 1.0
    ds = Dataset(X, Y, "binary")
    d = logistic_newton_direction(ds, np.zeros(3))
    assert np.allclose(d, numeric_newton(ds, np.zeros(3)), rtol=1e-6, atol=1e-9)


def test_mle_beats_truth_and_stops_on_gradient():
    ds, truth = gen_logistic_dataset(5000, 5, 0.5, seed=2)
    fit = logistic_mle(ds)
    assert full_loss(LOGISTIC, fit.theta_hat, ds) <= full_loss(LOGISTIC, truth.theta, ds)
    assert fit.final_gradient_norm <= 1e-10


def test_mle_is_newton_fixed_point():
    ds, _ = gen_logistic_dataset(3000, 4, 0.3, seed=3)
    theta = logistic_mle(ds).theta_hat
    assert np.linalg.norm(logistic_newton_direction(ds, theta)) <= 1e-10


def test_separable_data_detected():
    x = np.linspace(-1, 1, 40)
    ds = Dataset(np.column_stack([x, np.ones(40)]), (x > 0.05).astype(float), "binary")
    with pytest.raises(SeparationError):
        logistic_mle(ds)


def test_recurrence_zero_rounds(small_linear):
    ds, _ = small_linear
    theta0 = np.arange(8.0)
    out = recurrence_trajectory(ds, PartitionPlan(512, 2, 4, "fixed"), 0.01, 1, 0, theta0)
    assert out.shape == (1, 16) and np.array_equal(out[0], np.tile(theta0, 2))


def test_recurrence_one_round_matches_engine(small_linear):
    ds, _ = small_linear
    cfg = BmgdConfig(K=2, M=4, R=1, schedule=Constant(0.02, 2), mode="fixed", seed=6, track_loss=False)
    rep = run_bmgd(ds, LEAST_SQUARES, cfg)
    out = recurrence_trajectory(ds, cfg.plan_for(512), 0.02, 2, 1, np.zeros(8))
    assert np.max(np.abs(out[1] - rep.buffer_thetas[0].ravel())) <= 1e-10


def test_ols_monte_carlo_variance():
    # the normal-equation solution is exactly the sample moments' fixed point
    ds, _ = gen_logistic_dataset(1000, 3, 0.2, seed=1)
    lin = Dataset(ds.X, ds.Y, "linear")
    Sxx, Sxy = second_moments(lin)
    assert np.allclose(Sxx @ ols_fit(lin).theta_hat, Sxy, rtol=0, atol=1e-12)
