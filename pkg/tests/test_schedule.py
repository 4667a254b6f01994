import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bmgd.errors import DomainError, ExhaustedError
from bmgd.schedule import (
    Constant,
    Cosine,
    Exponential,
    HorizonTuned,
    Polynomial,
    StageWise,
    check_conditions,
    steps_alpha,
)


def test_constant():
    s = Constant(0.01, 5)
    assert all(s.rate(r) == (0.01, 5) for r in (1, 2, 1000))


def test_horizon_tuned_plug_in():
    s = HorizonTuned(mu=1.0, M=1, T=1, K=1, R=math.e**2)
    assert s.alpha == pytest.approx(4 / math.e**2, rel=1e-15)
    assert s.rate(3) == (s.alpha, 1)


def test_cosine_endpoints():
    s = Cosine(0.05, T=2, M=3, K=4)
    assert s.rate(1, 24)[0] == pytest.approx(0.0, abs=1e-17)
    assert s.rate(1, 12)[0] == pytest.approx(0.025, rel=1e-14)
    assert s.rate(5, 1)[0] == pytest.approx(0.025 + 0.025 * math.cos(math.pi / 24), rel=1e-15)
    with pytest.raises(DomainError):
        s.rate(1)
    with pytest.raises(DomainError):
        s.rate(1, 25)


def test_polynomial_and_exponential_values():
    assert Polynomial(0.2, 0.5, 2).rate(4) == (0.1, 2)
    assert Exponential(1.0, 0.81, 2.0).rate(1)[0] == pytest.approx(0.9, rel=1e-15)


def test_stagewise():
    s = StageWise(((0.1, 3, 2), (0.01, 5, 1)))
    assert [s.rate(r) for r in (1, 2, 3)] == [(0.1, 3), (0.1, 3), (0.01, 5)]
    with pytest.raises(ExhaustedError):
        s.rate(4)


@pytest.mark.parametrize(
    "make",
    [
        lambda: Constant(0.0),
        lambda: Constant(0.1, 0),
        lambda: Polynomial(1.0, 0.0),
        lambda: Exponential(1.0, 1.0),
        lambda: Exponential(1.0, 0.5, b=0),
        lambda: StageWise(()),
        lambda: StageWise(((0.1, 1.5, 2),)),
    ],
)
def test_invalid_parameters(make):
    with pytest.raises(DomainError):
        make()


def test_iteration_numbering_starts_at_one():
    with pytest.raises(DomainError):
        Constant(0.1).rate(0)


def test_polynomial_half_is_admissible():
    rep = check_conditions(Polynomial(1.0, 0.5))
    assert rep.verdict == "admissible" and rep.sum_diverges and rep.cube_sum_converges


def test_polynomial_small_gamma_inadmissible():
    rep = check_conditions(Polynomial(1.0, 0.2))
    assert rep.verdict == "inadmissible" and rep.cube_sum_converges is False


@pytest.mark.parametrize("gamma", [0.1, 0.2, 0.3, 0.34, 0.4, 0.5, 0.7, 0.9, 1.0, 1.1, 1.3, 1.5])
def test_polynomial_grid_matches_rule(gamma):
    expected = 1 / 3 < gamma <= 1
    assert (check_conditions(Polynomial(0.5, gamma)).verdict == "admissible") == expected


def test_exponential_always_fails_divergent_sum():
    for g, b in ((0.5, 1), (0.9, 1), (0.99, 10)):
        rep = check_conditions(Exponential(1.0, g, b))
        assert rep.sum_diverges is False
        assert "divergent-sum condition fails" in rep.reason


@settings(max_examples=40, deadline=None)
@given(c=st.floats(0.01, 5), g=st.floats(0.05, 0.99), b=st.floats(0.2, 10), T=st.integers(1, 5))
def test_exponential_partial_sums_bounded(c, g, b, T):
    s = Exponential(c, g, b, T)
    rep = check_conditions(s, R_max=200)
    q = g ** (1 / b)
    assert rep.partial_sum <= c * T * q / (1 - q) * (1 + 1e-12)
    assert rep.sum_bound == pytest.approx(c * T * q / (1 - q))


def test_constant_like_schedules_inadmissible():
    for s in (Constant(0.1), HorizonTuned(1.0, 2, 2, 2, 10), Cosine(0.05, 1, 2, 2)):
        assert check_conditions(s, 50).verdict == "inadmissible"
    assert check_conditions(StageWise(((0.1, 1, 3),)), 20).verdict == "case-dependent"


def test_check_conditions_needs_horizon():
    with pytest.raises(DomainError):
        check_conditions(Constant(0.1), R_max=5)


@settings(max_examples=30, deadline=None)
@given(r=st.integers(1, 10_000))
def test_rate_is_pure(r):
    s = Polynomial(0.3, 0.6, 2)
    assert s.rate(r) == s.rate(r)
    assert steps_alpha(s, r, 7) == s.rate(r)[0]
