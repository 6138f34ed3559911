import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from upsilon_transforms.errors import ConfigError, DomainError
from upsilon_transforms.levy import atom_measure, make_measure, zero_measure
from upsilon_transforms.pathsim import (
    BLOCK,
    SampleBatch,
    SimConfig,
    charfn_levy,
    discarded_mass_bound,
    ecf_residual,
    empirical_charfn,
    eta,
    eta0,
    eta_star,
    kernel_inverse,
    levy_exponent,
    simulate_y,
)
from upsilon_transforms.upsilon import k_const, make_psi, make_tau, transform

UGRID = [0.25, 0.5, 1.0, 2.0, 4.0]


def test_eta_closed_forms():
    t = np.array([0.1, 0.5, 1.0, 3.0])
    assert np.allclose(eta(make_psi(-1, 1), t), np.exp(-t), rtol=1e-10)
    assert np.allclose(eta(make_psi(-2, 2), t), 0.5 * np.exp(-t * t), rtol=1e-10)
    tau = make_tau(-2, -1, 1)
    K = k_const(-1, -2, 1)
    assert np.allclose(eta(tau, [0.25, 0.5]), (1 - np.array([0.25, 0.5])) / K, rtol=1e-10)
    assert np.all(eta(tau, [1.0, 2.0]) == 0.0)
    assert eta0(make_psi(-1, 1)) == pytest.approx(1.0, rel=1e-12)
    assert eta0(make_psi(0.5, 1)) == math.inf


def test_eta_rejects_nonpositive():
    with pytest.raises(DomainError):
        eta(make_psi(-1, 1), 0.0)
    with pytest.raises(DomainError):
        eta_star(make_psi(-1, 1), -1.0)


def test_eta_star_closed_form():
    rho = make_psi(-1, 1)
    u = np.array([0.01, 0.3, 0.9])
    assert np.allclose(eta_star(rho, u), -np.log(u), atol=1e-8)
    assert eta_star(rho, 1.0) == 0.0
    assert eta_star(rho, 5.0) == 0.0


@settings(max_examples=25, deadline=None)
@given(st.floats(1e-6, 0.999))
def test_eta_star_galois_pair(u):
    rho = make_psi(-0.5, 2)
    s = eta_star(rho, u * eta0(rho))
    assert eta(rho, s) == pytest.approx(u * eta0(rho), rel=1e-7, abs=1e-10)


def test_eta_star_monotone():
    rho = make_psi(0.5, 1)
    u = np.geomspace(1e-3, 1e3, 25)
    s = eta_star(rho, u)
    assert np.all(np.diff(s) < 0)


def test_kernel_inverse_matches_eta():
    rho = make_psi(0.5, 1)
    inv = kernel_inverse(rho, 1e-3)
    s = np.array([0.01, 0.1, 1.0, 3.0])
    assert np.allclose(inv.mass_above(s), eta(rho, s), rtol=1e-9)
    assert np.allclose(inv.inverse(eta(rho, s)), s, rtol=1e-8)


def test_charfn_at_origin_and_closed_form():
    Mstar = transform(make_psi(-1, 1), atom_measure())
    assert charfn_levy(Mstar, 0.0) == 1.0
    for u in UGRID:
        mod = abs(charfn_levy(Mstar, u))
        assert mod == pytest.approx(math.exp(-u * u / (1 + u * u)), rel=1e-9)
        assert charfn_levy(Mstar, -u) == pytest.approx(charfn_levy(Mstar, u).conjugate(), rel=1e-9)


def test_charfn_atoms_exact():
    M = make_measure({"dimension": 1, "components": [
        {"direction": [1.0], "atoms": [{"r": 0.5, "w": 2.0}, {"r": 3.0, "w": 1.0}]}]})
    u = 1.3
    psi = 2.0 * (np.exp(1j * u * 0.5) - 1 - 1j * u * 0.5) + (np.exp(1j * u * 3.0) - 1)
    assert levy_exponent(M, u) == pytest.approx(psi, rel=1e-14)
    with pytest.raises(DomainError):
        levy_exponent(M, [1.0, 2.0])


def test_ecf_modulus_is_shift_invariant():
    rng = np.random.default_rng(0)
    v = rng.normal(size=(1000, 1))
    e1 = np.abs(empirical_charfn(v, UGRID))
    e2 = np.abs(empirical_charfn(v + 7.5, UGRID))
    assert np.allclose(e1, e2, atol=1e-12)


def test_zero_measure_gives_zero_samples():
    cfg = SimConfig(1e-3, 100, seed=1)
    batch = simulate_y(make_psi(-1, 1), zero_measure(), cfg)
    assert batch.values.shape == (100, 1) and np.all(batch.values == 0)
    assert ecf_residual(batch, zero_measure(), UGRID) == 0.0
    assert batch.diagnostics["discarded_mass_bound"] == 0.0


@pytest.mark.parametrize("kw", [
    {"jump_cutoff": 0.0, "sample_count": 10},
    {"jump_cutoff": -1e-3, "sample_count": 10},
    {"jump_cutoff": 1e-3, "sample_count": 0},
    {"jump_cutoff": 1e-3, "sample_count": 10, "time_truncation": -1.0},
    {"jump_cutoff": 1e-3, "sample_count": 10, "time_truncation": "never"},
    {"jump_cutoff": 1e-3, "sample_count": 10, "seed": -1},
])
def test_config_rejected(kw):
    with pytest.raises(ConfigError):
        SimConfig(**kw)


def test_auto_window_needs_second_moment():
    # psi(1.9, 1) puts far more than 1% of s^2 rho(ds) below eps = 0.5
    with pytest.raises(ConfigError):
        simulate_y(make_psi(1.9, 1), atom_measure(), SimConfig(0.5, 10))
    batch = simulate_y(make_psi(1.9, 1), atom_measure(), SimConfig(0.5, 10, time_truncation=2.0))
    assert batch.diagnostics["time_window_choice"] == "explicit"


def test_discarded_bound_monotone_in_eps():
    rho, M = make_psi(0.5, 1), make_measure({"dimension": 1, "components": [
        {"direction": [1.0], "density": {"kind": "exp"}}]})
    b = [discarded_mass_bound(rho, M, e, 0.0) for e in (1e-4, 1e-3, 1e-2, 1e-1)]
    assert all(x >= 0 for x in b)
    assert all(x < y for x, y in zip(b, b[1:]))


def test_determinism_and_block_independence():
    rho, M = make_psi(-1, 1), atom_measure()
    a = simulate_y(rho, M, SimConfig(1e-4, 5000, seed=7))
    b = simulate_y(rho, M, SimConfig(1e-4, 5000, seed=7))
    assert a.to_csv() == b.to_csv()
    assert a.diagnostics_json() == b.diagnostics_json()
    # the first block is the same whatever the total size
    c = simulate_y(rho, M, SimConfig(1e-4, BLOCK + 10, seed=7))
    assert np.array_equal(a.values[:BLOCK], c.values[:BLOCK])
    d = simulate_y(rho, M, SimConfig(1e-4, 5000, seed=8))
    assert not np.array_equal(a.values, d.values)


def test_batch_serialization():
    batch = simulate_y(make_psi(-1, 1), atom_measure(), SimConfig(1e-4, 3, seed=0))
    lines = batch.to_csv().splitlines()
    assert lines[0] == "path,y0" and len(lines) == 4
    assert isinstance(batch, SampleBatch) and len(batch) == 3
    assert '"schema_version": 1' in batch.diagnostics_json()


@pytest.mark.parametrize("rho", [make_psi(-1, 1), make_psi(-0.5, 2), make_tau(-2, -1, 1)],
                         ids=["psi(-1,1)", "psi(-0.5,2)", "tau(-2,-1,1)"])
def test_ecf_matches_transform(rho):
    n = 100_000
    M = atom_measure()
    batch = simulate_y(rho, M, SimConfig(1e-4, n, seed=2024))
    assert ecf_residual(batch, transform(rho, M), UGRID) <= 3.0 / math.sqrt(n)


def test_mean_jump_count_matches_rate():
    batch = simulate_y(make_psi(-1, 1), atom_measure(), SimConfig(1e-4, 50_000, seed=3))
    # Poisson(1) jumps per path for psi(-1,1) with a unit atom
    assert batch.diagnostics["mean_jump_count"] == pytest.approx(1.0, abs=0.02)
    assert batch.diagnostics["time_window_choice"] == "eta(0+)"
