import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from upsilon_transforms.errors import DivergentHint, DomainError, NonConvergence
from upsilon_transforms.numkit import (
    SingularityHint,
    count_evaluations,
    default_tol,
    integrate,
    integrate_batch,
    log_gamma,
)


def test_polynomial():
    res = integrate(lambda x: x, 0.0, 1.0)
    assert abs(res.value - 0.5) <= 1e-12
    assert res.error_estimate >= 0 and res.evaluations >= 1


def test_exponential_half_line():
    res = integrate(lambda s: np.exp(-s), 0.0, math.inf)
    assert abs(res.value - 1.0) <= 1e-10


def test_beta_half_half_with_hints():
    hints = [SingularityHint("lower", -0.5), SingularityHint("upper", -0.5)]
    res = integrate(lambda s: s**-0.5 * (1 - s) ** -0.5, 0.0, 1.0, hints)
    exact = math.exp(2 * log_gamma(0.5) - log_gamma(1.0))
    assert abs(res.value - exact) <= 1e-9
    assert abs(res.value - math.pi) <= 1e-9


@pytest.mark.parametrize("a", [-0.9, -0.5, 0.0, 1.5])
def test_power_singularity_against_exact(a):
    res = integrate(lambda s: s**a, 0.0, 1.0, [SingularityHint("lower", a)])
    assert abs(res.value - 1.0 / (a + 1.0)) <= max(1e-9, res.error_estimate)


def test_power_law_tail():
    res = integrate(lambda s: s**-2.5, 1.0, math.inf, [SingularityHint("upper", -2.5)])
    assert abs(res.value - 1.0 / 1.5) <= 1e-10


@pytest.mark.parametrize("hint", [SingularityHint("lower", -1.0), SingularityHint("lower", -1.5)])
def test_divergent_hint_rejected(hint):
    with pytest.raises(DivergentHint):
        integrate(lambda s: s**-1.0, 0.0, 1.0, [hint])


def test_divergent_tail_hint_rejected():
    with pytest.raises(DivergentHint):
        integrate(lambda s: 1.0 / s, 1.0, math.inf, [SingularityHint("upper", -1.0)])


def test_budget_exhaustion_raises():
    with pytest.raises(NonConvergence):
        integrate(lambda s: np.sin(1.0 / s), 1e-6, 1.0, tol=1e-14, rtol=1e-14, max_evals=2000)


def test_deterministic():
    f = lambda s: np.exp(-s) * np.cos(3 * s) * s**-0.3  # noqa: E731
    r1 = integrate(f, 0.0, math.inf, [SingularityHint("lower", -0.3)])
    r2 = integrate(f, 0.0, math.inf, [SingularityHint("lower", -0.3)])
    assert r1 == r2


def test_against_mpmath_oscillatory():
    f = lambda s: np.exp(-s) * np.cos(3 * s) * s**-0.3  # noqa: E731
    res = integrate(f, 0.0, math.inf, [SingularityHint("lower", -0.3)])
    exact = float(mpmath.quad(lambda s: mpmath.exp(-s) * mpmath.cos(3 * s) * s**-0.3, [0, 1, mpmath.inf]))
    assert abs(res.value - exact) <= 1e-9


def test_batch_matches_single_calls():
    a = np.array([0.5, 1.0, 2.0, 3.0])
    res = integrate_batch(lambda s, i: np.exp(-a[i] * s), 0.0, math.inf, size=4)
    assert np.all(res.converged)
    assert np.allclose(res.values, 1.0 / a, rtol=1e-11, atol=0)


def test_batch_keeps_tiny_integrals():
    # widely different magnitudes in one batch must all converge
    c = np.array([1.0, 1e-20, 1e-37])
    res = integrate_batch(lambda s, i: c[i] * np.exp(-s), 0.0, math.inf, tol=1e-300, rtol=1e-11, size=3)
    assert np.all(res.converged)
    assert np.allclose(res.values, c, rtol=1e-10, atol=0)


def test_evaluation_counter():
    with count_evaluations() as ctr:
        integrate(lambda x: x * x, 0.0, 1.0)
    assert ctr.evaluations >= 15 and ctr.integrals == 1


def test_env_override(monkeypatch):
    monkeypatch.setenv("UPSILON_QUAD_TOL", "1e-6")
    assert default_tol() == 1e-6
    monkeypatch.setenv("UPSILON_QUAD_TOL", "junk")
    assert default_tol() == 1e-9
    monkeypatch.delenv("UPSILON_QUAD_TOL")
    assert default_tol() == 1e-9


def test_log_gamma_values():
    assert log_gamma(1.0) == 0.0
    assert abs(log_gamma(2.0)) <= 1e-15
    ref = float(mpmath.log(mpmath.sqrt(mpmath.pi)))
    assert abs(log_gamma(0.5) - ref) <= 1e-15


@pytest.mark.parametrize("x", [1e-3, 0.37, 7.5, 123.4, 1e3])
def test_log_gamma_relative_accuracy(x):
    ref = float(mpmath.loggamma(x))
    assert abs(log_gamma(x) - ref) <= 1e-12 * max(1.0, abs(ref))


def test_log_gamma_recurrence():
    x = np.round(np.arange(1, 101) * 0.1, 10)
    lhs = log_gamma(x + 1) - log_gamma(x) - np.log(x)
    assert np.max(np.abs(lhs)) <= 1e-11


@pytest.mark.parametrize("x", [0.0, -1.0])
def test_log_gamma_domain(x):
    with pytest.raises(DomainError):
        log_gamma(x)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(-0.95, 3.0), b=st.floats(0.1, 5.0))
def test_property_power_integrals_within_error(a, b):
    res = integrate(lambda s: s**a, 0.0, b, [SingularityHint("lower", a)])
    exact = b ** (a + 1) / (a + 1)
    assert abs(res.value - exact) <= max(1e-9, res.error_estimate) + 1e-10 * abs(exact)


@settings(max_examples=30, deadline=None)
@given(lam=st.floats(0.05, 20.0), k=st.integers(0, 4))
def test_property_gamma_integrals(lam, k):
    res = integrate(lambda s: s**k * np.exp(-lam * s), 0.0, math.inf)
    exact = math.gamma(k + 1) / lam ** (k + 1)
    assert abs(res.value - exact) <= max(1e-9, res.error_estimate, 1e-10 * exact)
