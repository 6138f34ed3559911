import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from upsilon_transforms import stable
from upsilon_transforms.errors import DomainError, MomentDiverges, StableIndexError


def half_closed(x):
    return x**-1.5 * math.exp(-1.0 / (4.0 * x)) / (2.0 * math.sqrt(math.pi))


def third_closed(x):
    # r = 1/3 density through the modified Bessel function K_{1/3}
    x = mpmath.mpf(x)
    return float(mpmath.besselk(mpmath.mpf(1) / 3, 2 / (mpmath.mpf(3) ** 1.5 * mpmath.sqrt(x)))
                 * x**-1.5 / (3 * mpmath.pi))


@pytest.mark.parametrize("r", [0.0, 1.0, 1.5, -0.2, math.nan])
def test_index_checked(r):
    with pytest.raises(IndexError):
        stable.stable_density(r, 1.0)
    with pytest.raises(StableIndexError):
        stable.check_index(r)


def test_zero_on_negative_axis():
    assert stable.stable_density(0.5, 0.0) == 0.0
    assert np.all(stable.stable_density(0.5, np.array([-3.0, -1e-9])) == 0.0)


@pytest.mark.parametrize("x", [1e-2, 0.05, 0.3, 1.0, 4.0, 30.0, 1e2])
def test_half_stable_closed_form(x):
    assert abs(stable.stable_density(0.5, x) / half_closed(x) - 1.0) <= 1e-8


def test_half_closed_form_laplace_oracle():
    # the closed form itself reproduces exp(-sqrt(t))
    for t in [0.1, 1.0, 10.0]:
        lt = mpmath.quad(lambda x: mpmath.exp(-t * x) * x**-1.5 * mpmath.exp(-1 / (4 * x))
                         / (2 * mpmath.sqrt(mpmath.pi)), [0, 0.1, 1, mpmath.inf])
        assert abs(float(lt) - math.exp(-math.sqrt(t))) <= 1e-12


@pytest.mark.parametrize("x", [1e-3, 1e-2, 0.1, 1.0, 10.0, 1e2, 1e4])
def test_third_stable_bessel_oracle(x):
    assert abs(stable.stable_density(1.0 / 3.0, x) / third_closed(x) - 1.0) <= 1e-8


@pytest.mark.parametrize("r", [0.3, 0.5, 0.7])
def test_normalized(r):
    assert abs(stable.stable_laplace(r, 0.0) - 1.0) <= 1e-8


@pytest.mark.parametrize("r,t", [(0.5, 1.0), (0.3, 2.0), (0.2, 0.1), (0.8, 10.0)])
def test_laplace_examples(r, t):
    assert abs(stable.stable_laplace(r, t) - math.exp(-(t**r))) <= 1e-6


def test_laplace_rejects_negative_t():
    with pytest.raises(DomainError):
        stable.stable_laplace(0.5, -1.0)


def test_tail_constant_half():
    assert abs(stable.stable_tail_constant(0.5) - 1.0 / (2.0 * math.sqrt(math.pi))) <= 1e-6


@pytest.mark.parametrize("r", [0.1, 0.3, 0.7, 0.9])
def test_tail_constant_positive_and_matches_reference(r):
    K = stable.stable_tail_constant(r)
    # reference constant Gamma(1 + r) sin(pi r) / pi, used only as an oracle
    ref = math.gamma(1.0 + r) * math.sin(math.pi * r) / math.pi
    assert K > 0
    assert abs(K / ref - 1.0) <= 1e-2


def test_tail_constant_seventh_consistency():
    K = stable.stable_tail_constant(0.7)
    vals = [stable.stable_density(0.7, x) * x**1.7 for x in (1e2, 1e3, 1e4)]
    assert abs(vals[-1] / K - 1.0) <= 1e-2


def test_fractional_moments():
    assert abs(stable.stable_fractional_moment(0.4, 0.0) - 1.0) <= 1e-8
    assert abs(stable.stable_fractional_moment(0.5, -1.0) - 2.0) <= 1e-8
    for r, beta in [(0.3, 0.2), (0.7, -0.5), (0.5, 0.25)]:
        ref = math.exp(math.lgamma(1.0 - beta / r) - math.lgamma(1.0 - beta))
        assert abs(stable.stable_fractional_moment(r, beta) / ref - 1.0) <= 1e-7


@pytest.mark.parametrize("beta", [0.5, 0.9])
def test_fractional_moment_diverges(beta):
    with pytest.raises(MomentDiverges):
        stable.stable_fractional_moment(0.5, beta)


@pytest.mark.parametrize("r,p,u", [(0.5, 0.5, 1.0), (0.6, 0.5, 2.0), (0.4, 0.6, 5.0)])
def test_scaling_composition(r, p, u):
    assert stable.scaling_composition_residual(r, p, u) <= 1e-6


def test_scaling_composition_rejects_zero():
    with pytest.raises(DomainError):
        stable.scaling_composition_residual(0.5, 0.5, 0.0)


@pytest.mark.parametrize("r", [0.2, 0.5, 0.8])
def test_unimodal(r):
    x = np.logspace(-4, 4, 400)
    d = np.diff(stable.stable_density(r, x))
    signs = np.sign(d[d != 0])
    assert np.count_nonzero(np.diff(signs)) == 1


@pytest.mark.parametrize("r", [0.1, 0.3, 0.5, 0.75, 0.9])
def test_chebyshev_table_matches_direct(r):
    tab = stable.stable_logdensity_table(r)
    x = np.logspace(-3, 5, 97)
    direct = stable.stable_logdensity(r, x)
    ok = direct > -700
    assert np.all(np.isfinite(tab(x)[ok]))
    assert np.max(np.abs(tab(x)[ok] - direct[ok])) <= 1e-10


@settings(max_examples=25, deadline=None)
@given(r=st.floats(0.05, 0.95), t=st.floats(0.1, 10.0))
def test_property_laplace(r, t):
    assert abs(stable.stable_laplace(r, t) - math.exp(-(t**r))) <= 1e-6


@settings(max_examples=25, deadline=None)
@given(r=st.floats(0.05, 0.95), x=st.floats(1e-4, 1e4))
def test_property_density_finite_nonnegative(r, x):
    v = stable.stable_density(r, x)
    assert math.isfinite(v) and v >= 0.0
