import hashlib

import numpy as np
import pytest

from bmgd.datagen import (
    HEADER,
    Dataset,
    ar1_covariance,
    dataset_roundtrip,
    draw_theta,
    gen_ar1_design,
    gen_linear_dataset,
    gen_logistic_dataset,
    read_dataset,
    write_dataset,
)
from bmgd.errors import DomainError, FormatError
from bmgd.oracles import logistic_mle, ols_fit


def test_ar1_independent_case():
    X = gen_ar1_design(10_000, 4, 0.0, seed=1)
    C = np.cov(X, rowvar=False)
    off = C[~np.eye(4, dtype=bool)]
    assert np.max(np.abs(off)) <= 0.05
    assert np.allclose(np.diag(C), 1.0, atol=0.05)


def test_ar1_covariance_monte_carlo():
    X = gen_ar1_design(50_000, 5, 0.8, seed=2)
    S = X.T @ X / X.shape[0]
    assert np.max(np.abs(S - ar1_covariance(5, 0.8))) <= 0.03


def test_ar1_design_is_deterministic():
    assert np.array_equal(gen_ar1_design(300, 6, 0.8, 9), gen_ar1_design(300, 6, 0.8, 9))
    assert not np.array_equal(gen_ar1_design(300, 6, 0.8, 9), gen_ar1_design(300, 6, 0.8, 10))


@pytest.mark.parametrize("rho", [-0.1, 1.0, 1.5])
def test_ar1_rejects_bad_rho(rho):
    with pytest.raises(DomainError):
        gen_ar1_design(10, 3, rho, 0)


def test_theta_normalization():
    for p, rho in ((5, 0.8), (50, 0.8), (500, 0.8), (20, 0.0)):
        theta = draw_theta(p, rho, seed=p)
        assert abs(theta @ ar1_covariance(p, rho) @ theta - 1.0) <= 1e-8


def test_noiseless_ols_recovers_theta():
    ds, truth = gen_linear_dataset(1000, 6, 0.8, seed=4, noise_sd=0.0)
    assert np.max(np.abs(ols_fit(ds).theta_hat - truth.theta)) <= 1e-8


def test_full_scale_design_shape():
    # only the design law is exercised at full size; it is cheap to build
    ds, truth = gen_linear_dataset(100_000, 500, 0.8, seed=0)
    assert ds.X.shape == (100_000, 500) and truth.theta.shape == (500,)
    assert abs(truth.theta @ ar1_covariance(500, 0.8) @ truth.theta - 1.0) <= 1e-8


def test_ols_mse_matches_asymptotic_variance():
    N, p, B = 20_000, 50, 20
    Sigma_inv = np.linalg.inv(ar1_covariance(p, 0.8))
    expected = np.trace(Sigma_inv) / N
    mses = []
    for b in range(B):
        ds, truth = gen_linear_dataset(N, p, 0.8, seed=100 + b, theta_seed=7)
        mses.append(np.sum((ols_fit(ds).theta_hat - truth.theta) ** 2))
    ratio = np.mean(mses) / expected
    assert 1 / 1.5 <= ratio <= 1.5


def test_shared_theta_across_replicates():
    _, a = gen_linear_dataset(100, 4, 0.5, seed=1, theta_seed=3)
    _, b = gen_linear_dataset(100, 4, 0.5, seed=2, theta_seed=3)
    assert np.array_equal(a.theta, b.theta)


def test_logistic_zero_theta_is_balanced():
    ds, _ = gen_logistic_dataset(10_000, 4, 0.5, seed=3, theta=np.zeros(4))
    assert abs(ds.Y.mean() - 0.5) <= 0.02
    assert set(np.unique(ds.Y)) <= {0.0, 1.0}


def test_logistic_mle_coverage():
    p, hits = 5, 0
    for b in range(50):
        ds, truth = gen_logistic_dataset(5000, p, 0.5, seed=200 + b, theta_seed=1)
        theta = logistic_mle(ds).theta_hat
        eta = ds.X @ theta
        w = 1.0 / (1.0 + np.exp(-eta))
        info = (ds.X * (w * (1 - w))[:, None]).T @ ds.X
        se = np.sqrt(np.diag(np.linalg.inv(info)))
        hits += np.all(np.abs(theta - truth.theta) <= 3 * se)
    assert hits >= 45


def test_roundtrip_tiny(tmp_path):
    ds = Dataset(np.array([[1.5]]), np.array([-2.0]))
    back = dataset_roundtrip(tmp_path / "one.bmgd", ds)
    assert back.X.shape == (1, 1) and back.X[0, 0] == 1.5 and back.Y[0] == -2.0


def test_roundtrip_large_checksum(tmp_path):
    # ~100 MB: 125,000 x 99 features + responses
    ds, _ = gen_linear_dataset(125_000, 99, 0.5, seed=1)
    path = tmp_path / "big.bmgd"
    write_dataset(path, ds)
    back = read_dataset(path)
    assert path.stat().st_size >= 100_000_000
    h = lambda a: hashlib.sha256(np.ascontiguousarray(a).tobytes()).hexdigest()  # noqa: E731
    assert h(back.X) == h(ds.X) and h(back.Y) == h(ds.Y)


def test_roundtrip_keeps_kind(tmp_path):
    ds, _ = gen_logistic_dataset(64, 3, 0.2, seed=1)
    assert read_dataset(write_and(tmp_path / "b.bmgd", ds)).kind == "binary"


def write_and(path, ds):
    write_dataset(path, ds)
    return path


@pytest.mark.parametrize(
    "offset, byte, where",
    [(0, b"X", 0), (4, b"\x07", 4), (24, b"\x09", 24), (27, b"\x01", 25)],
)
def test_corrupted_header_is_format_error(tmp_path, offset, byte, where):
    ds, _ = gen_linear_dataset(16, 2, 0.0, seed=1)
    path = write_and(tmp_path / "c.bmgd", ds)
    raw = bytearray(path.read_bytes())
    raw[offset : offset + 1] = byte
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError) as info:
        read_dataset(path)
    assert info.value.offset == where


def test_truncated_file_is_format_error(tmp_path):
    ds, _ = gen_linear_dataset(16, 2, 0.0, seed=1)
    path = write_and(tmp_path / "t.bmgd", ds)
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(FormatError):
        read_dataset(path)
    path.write_bytes(raw[: HEADER.size - 3])
    with pytest.raises(FormatError):
        read_dataset(path)


def test_dataset_validation():
    with pytest.raises(DomainError):
        Dataset(np.zeros((3, 2)), np.zeros(4))
    with pytest.raises(DomainError):
        Dataset(np.zeros((2, 1)), np.array([0.0, 2.0]), "binary").validate()
    with pytest.raises(DomainError):
        Dataset(np.array([[np.inf]]), np.zeros(1)).validate()
