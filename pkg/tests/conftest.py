import numpy as np
import pytest

from bmgd.datagen import Dataset, gen_linear_dataset, gen_logistic_dataset


@pytest.fixture(scope="session")
def small_linear():
    """N=512, p=8 linear data with its true coefficients."""
    return gen_linear_dataset(512, 8, 0.5, seed=11)


@pytest.fixture(scope="session")
def small_logistic():
    return gen_logistic_dataset(2000, 5, 0.3, seed=5)


def random_spd(rng, n, cond=100.0):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    d = np.geomspace(1.0, cond, n)
    return (Q * d) @ Q.T


def noiseless(N=400, p=4, seed=3):
    ds, truth = gen_linear_dataset(N, p, 0.3, seed, noise_sd=0.0)
    return ds, truth.theta


def tiny_dataset(rng, N, p, kind="linear"):
    X = rng.standard_normal((N, p))
    if kind == "linear":
        Y = X @ rng.standard_normal(p) + rng.standard_normal(N)
    else:
        Y = (rng.random(N) < 0.5).astype(float)
    return Dataset(X, Y, kind)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


@pytest.fixture
def acceptance(request):
    """``acceptance(label, ok, detail)`` prints one pass/fail line per criterion."""
    lines = request.config.stash[_ACCEPTANCE_KEY]
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")

    def record(label, ok, detail):
        line = f"ACCEPTANCE {label}: {'PASS' if ok else 'FAIL'} | {detail}"
        lines.append(line)
        if reporter is not None:
            reporter.write_line("")
            reporter.write_line(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
