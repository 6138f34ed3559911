import csv
import io
import json
import math

import numpy as np
import pytest

from upsilon_transforms.errors import NotInDomain, ParamError
from upsilon_transforms.identities import (
    CSV_HEADER,
    DEFAULT_GRID,
    IdentitySpec,
    default_cells,
    fixtures,
    reports_to_csv,
    reports_to_json,
    run_cells,
    verify,
    verify_suite,
)
from upsilon_transforms.levy import atom_measure, density_measure, power_law_spliced, zero_measure

FX = fixtures()
PSI = {"kind": "psi", "alpha": -1, "p": 1}
TAU = {"kind": "tau", "beta": -2, "alpha": -1, "p": 1}
PI = {"kind": "pi", "alpha": -1, "p": 1, "q": 0.5}


def test_part1_on_delta_matches_atom_formula():
    grid = [0.25, 0.5, 1.0, 2.0, 4.0]
    spec = IdentitySpec("Part1", {"beta": -1, "alpha": 0.5, "p": 1})
    rep = verify(spec, FX["delta1"], grid, 1e-6)
    assert rep.passed and rep.status == "ok"
    r = np.array(grid)
    assert np.allclose(rep.lhs[0], r**-1.5 * np.exp(-r), rtol=1e-14)
    assert rep.sup_residual <= 1e-6 and rep.sup_oracle_residual <= 1e-6


def test_part3_half_on_delta():
    rep = verify(IdentitySpec("Part3", {"alpha": 0.5, "p": 1, "q": 0.5}), FX["delta1"], tol=1e-5)
    assert rep.passed


@pytest.mark.parametrize("pair", [(PSI, TAU), (PSI, PI), (TAU, PI)])
def test_commute_pairs(pair):
    rep = verify(IdentitySpec("Commute", {"rho1": pair[0], "rho2": pair[1]}), FX["delta1"], tol=1e-5)
    assert rep.passed and rep.sup_residual <= 1e-5


def test_zero_measure_trivially_passes():
    spec = IdentitySpec("Part2", {"gamma": -2, "beta": -1, "alpha": 0.5, "p": 1})
    rep = verify(spec, zero_measure(), tol=1e-5)
    assert rep.passed and rep.sup_residual == 0.0 and rep.residuals == []


@pytest.mark.parametrize("ident,params", [
    ("Part1", {"beta": 1, "alpha": 0.5, "p": 1}),
    ("Part1", {"beta": -1, "alpha": 2.0, "p": 1}),
    ("Part2", {"gamma": -1, "beta": -1, "alpha": 0.5, "p": 1}),
    ("Part3", {"alpha": 0.5, "p": 1, "q": 1}),
    ("Part4", {"alpha": 2.3, "p": 1, "q": 0.5, "r": 0.25}),
    ("Chain", {"beta": -1, "alpha": 0.5, "p": 1, "q": 2}),
    ("Part1", {"beta": -1, "alpha": 0.5}),
    ("Commute", {"rho1": PSI}),
    ("Commute", {"rho1": PSI, "rho2": {"alpha": 1}}),
    ("Part9", {}),
])
def test_hypotheses_enforced(ident, params):
    with pytest.raises(ParamError):
        IdentitySpec(ident, params)


def test_out_of_domain_raises_and_is_isolated_in_suite():
    heavy = density_measure(power_law_spliced(0.5, 1.0))
    spec = IdentitySpec("Part1", {"beta": 0.1, "alpha": 1.5, "p": 0.7})
    with pytest.raises(NotInDomain):
        verify(spec, heavy)
    reps = verify_suite([spec], {"heavy": heavy, "delta1": FX["delta1"]})
    assert [r.status for r in reps] == ["not_in_domain", "ok"]
    assert not reps[0].passed and reps[1].passed


def test_empty_fixture_list():
    assert verify_suite([IdentitySpec("Part1", {"beta": -1, "alpha": 0.5, "p": 1})], []) == []


@pytest.mark.parametrize("grid", [[], [1.0, 0.5], [0.0, 1.0], [1.0, 1.0]])
def test_grid_validated(grid):
    with pytest.raises(ValueError):
        verify(IdentitySpec("Part1", {"beta": -1, "alpha": 0.5, "p": 1}), FX["delta1"], grid)


def test_passed_iff_within_tolerance():
    spec = IdentitySpec("Part1", {"beta": -1, "alpha": 0.5, "p": 1})
    rep = verify(spec, FX["exp"])
    assert rep.passed == (rep.sup_residual <= rep.tolerance and rep.sup_oracle_residual <= rep.tolerance)
    tight = verify(spec, FX["exp"], tol=1e-30)
    assert not tight.passed


def test_default_tolerances():
    assert IdentitySpec("Part1", {"beta": -1, "alpha": 0.5, "p": 1}).default_tol() == 1e-5
    assert IdentitySpec("Chain", {"beta": -1, "alpha": 0.5, "p": 1, "q": 0.5}).default_tol() == 1e-4
    assert list(DEFAULT_GRID) == [2.0**k for k in range(-3, 4)]


def test_domain_bookkeeping_and_budget():
    rep = verify(IdentitySpec("Part1", {"beta": -1, "alpha": 0.5, "p": 1}), FX["atom-pair"])
    assert rep.domain_lhs is True and rep.domain_rhs is True
    assert len(rep.directions) == 2
    assert rep.integrals >= 0 and rep.evaluations >= 0


def test_default_suite_shape():
    cells = default_cells()
    assert len(cells) == 60
    ids = {spec.id for spec, _, _ in cells}
    assert ids == {"Part1", "Part2", "Part3", "Part4", "Commute", "Chain"}


def test_parallel_run_keeps_order():
    cells = [c for c in default_cells() if c[1] in ("delta1", "atom-pair")][:8]
    seq = run_cells(cells)
    par = run_cells(cells, workers=3)
    assert [(r.spec.label(), r.measure_id) for r in seq] == [(r.spec.label(), r.measure_id) for r in par]
    assert [r.rhs for r in seq] == [r.rhs for r in par]


def test_serialization():
    spec = IdentitySpec("Part1", {"beta": -1, "alpha": 0.5, "p": 1})
    reps = [verify(spec, FX["atom-pair"], measure_id="atom-pair")]
    doc = json.loads(reports_to_json(reps))
    assert doc["schema_version"] == 1
    assert doc["summary"] == {"cells": 1, "passed": 1, "failed": 0}
    assert doc["reports"][0]["fixture"] == "atom-pair"
    rows = list(csv.reader(io.StringIO(reports_to_csv(reps))))
    assert rows[0] == CSV_HEADER
    assert len(rows) == 1 + 2 * len(DEFAULT_GRID)
    assert all(math.isfinite(float(r[-1])) for r in rows[1:])


def test_chain_on_delta():
    rep = verify(IdentitySpec("Chain", {"beta": -1, "alpha": 0.5, "p": 1, "q": 0.5}), atom_measure())
    assert rep.passed and rep.tolerance == 1e-4
