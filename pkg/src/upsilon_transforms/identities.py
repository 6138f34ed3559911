"""Numerical certification of the composition identities between transforms.

Each cell compares three routes on a radius grid:

* ``lhs``: the single transform on the left of the identity;
* ``rhs``: the naive nested composition, whose outer quadrature calls the
  inner transform's density evaluator;
* ``oracle``: the composite dilation kernel obtained by flattening the double
  integral with the substitutions of the classical proofs, applied once.

A cell passes when ``sup |lhs - rhs| <= tol`` and ``sup |rhs - oracle| <= tol``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import stable
from .errors import DomainMismatch, NotInDomain, ParamError, UpsilonError
from .levy import (
    CompactSupport,
    Component,
    ExpPower,
    LevyMeasure,
    RadialMeasure,
    atom_measure,
    compact_poly,
    density_measure,
    exp_density,
    power_law_spliced,
)
from .numkit import count_evaluations, integrate_batch
from .upsilon import (
    DilationMeasure,
    _bounds_from_samples,
    _snap,
    compose_dilations,
    in_domain,
    k_const,
    make_dilation,
    make_pi,
    make_psi,
    make_tau,
    transform,
)

SCHEMA_VERSION = 1
IDENTITIES = ("Part1", "Part2", "Part3", "Part4", "Commute", "Chain")
DEFAULT_GRID = tuple(2.0**k for k in range(-3, 4))
DEFAULT_TOL = 1e-5
CHAIN_TOL = 1e-4
_TINY = 1e-300
_RTOL = 1e-11


@dataclass(frozen=True)
class IdentitySpec:
    """Identity id plus the parameters it quantifies over.

    Commute takes ``rho1`` and ``rho2`` as ``{"kind": ..., <params>}`` mappings.
    """

    id: str
    params: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if self.id not in IDENTITIES:
            raise ParamError(f"unknown identity {self.id!r}; expected one of {IDENTITIES}")
        _check_hypotheses(self.id, self.params)

    def default_tol(self) -> float:
        return CHAIN_TOL if self.id == "Chain" else DEFAULT_TOL

    def to_dict(self):
        return {"id": self.id, "params": _jsonable(self.params)}

    def label(self) -> str:
        if self.id == "Commute":
            return f"Commute[{_rho_label(self.params['rho1'])}, {_rho_label(self.params['rho2'])}]"
        return f"{self.id}(" + ", ".join(f"{k}={v:g}" for k, v in self.params.items()) + ")"


def _jsonable(obj):
    if isinstance(obj, Mapping):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _rho_label(d: Mapping) -> str:
    return str(_rho(d))


def _rho(d: Mapping) -> DilationMeasure:
    d = dict(d)
    kind = d.pop("kind")
    return make_dilation(kind, **d)


_REQUIRED = {
    "Part1": ("beta", "alpha", "p"),
    "Part2": ("gamma", "beta", "alpha", "p"),
    "Part3": ("alpha", "p", "q"),
    "Part4": ("alpha", "p", "q", "r"),
    "Commute": ("rho1", "rho2"),
    "Chain": ("beta", "alpha", "p", "q"),
}


def _check_hypotheses(ident: str, params: Mapping):
    need = _REQUIRED[ident]
    missing = [k for k in need if k not in params]
    extra = sorted(set(params) - set(need))
    if missing or extra:
        raise ParamError(f"{ident} takes {', '.join(need)}; missing {missing}, unexpected {extra}")
    if ident == "Commute":
        for key in ("rho1", "rho2"):
            if not isinstance(params[key], Mapping) or "kind" not in params[key]:
                raise ParamError(f"Commute.{key} must be a mapping with a 'kind' entry")
            _rho(params[key])
        return
    v = {k: float(params[k]) for k in need}
    ok = {
        "Part1": lambda: v["beta"] < v["alpha"] < 2 and v["p"] > 0,
        "Part2": lambda: v["gamma"] < v["beta"] < v["alpha"] < 2 and v["p"] > 0,
        "Part3": lambda: v["alpha"] < 2 and 0 < v["q"] < v["p"],
        "Part4": lambda: 0 < v["r"] < v["q"] < v["p"] and v["alpha"] < 2 + v["r"],
        "Chain": lambda: v["beta"] < v["alpha"] < 2 and 0 < v["q"] < v["p"],
    }[ident]()
    if not ok:
        conds = {
            "Part1": "beta < alpha < 2, p > 0",
            "Part2": "gamma < beta < alpha < 2, p > 0",
            "Part3": "alpha < 2, 0 < q < p",
            "Part4": "0 < r < q < p, alpha < 2 + r",
            "Chain": "beta < alpha < 2, 0 < q < p",
        }[ident]
        raise ParamError(f"{ident} hypotheses violated ({conds}): {dict(v)}")


# --- flattened composite kernels ---------------------------------------------------


def _custom_kernel(label, params, log_h, origin, support, tail, upper_exp=math.nan):
    delta = 0.5 * min(1.0, support)
    bounds = _bounds_from_samples(
        lambda s: np.exp(log_h(s) + (origin + 1.0) * np.log(s)), delta)
    return DilationMeasure(label, dict(params), log_h, _snap(origin), bounds, support, tail,
                           upper_exponent=upper_exp)


def _safe_log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def part1_kernel(beta, alpha, p) -> DilationMeasure:
    """``K^-1 v^(-alpha-1) int_0^inf exp(-(s^p + v^p)) s^(alpha-beta-1) ds``."""
    k = k_const(alpha, beta, p)

    def log_h(v):
        v = np.atleast_1d(v)
        res = integrate_batch(
            lambda s, i: np.exp(-(s**p + v[i] ** p)) * s ** (alpha - beta - 1.0),
            0.0, math.inf, lower_exp=alpha - beta - 1.0, tol=_TINY, rtol=_RTOL, size=v.size)
        return _safe_log(res.values / k) - (alpha + 1.0) * np.log(v)

    return _custom_kernel("Part1Kernel", {"beta": beta, "alpha": alpha, "p": p}, log_h,
                          alpha, math.inf, ExpPower(p, -alpha - 1.0))


def part2_kernel(gamma, beta, alpha, p) -> DilationMeasure:
    """``A v^(-alpha-1) (1-v^p)^((alpha-gamma)/p-1) int_0^1 w^(alpha-beta-1)
    (1-w^p)^((beta-gamma)/p-1) dw`` on (0, 1)."""
    a_const = 1.0 / (k_const(alpha, beta, p) * k_const(beta, gamma, p))
    e_out = (alpha - gamma) / p - 1.0
    e_w0, e_w1 = alpha - beta - 1.0, (beta - gamma) / p - 1.0

    def log_h(v):
        v = np.atleast_1d(v)
        res = integrate_batch(
            lambda w, i: w**e_w0 * (1.0 - w**p) ** e_w1, 0.0, 1.0,
            lower_exp=e_w0, upper_exp=e_w1, tol=_TINY, rtol=_RTOL, size=v.size)
        return (math.log(a_const) + _safe_log(res.values) - (alpha + 1.0) * np.log(v)
                + e_out * np.log1p(-(v**p)))

    return _custom_kernel("Part2Kernel", {"gamma": gamma, "beta": beta, "alpha": alpha, "p": p},
                          log_h, alpha, 1.0, CompactSupport(1.0), e_out)


def _stable_log(r):
    if r == 0.5:
        return stable.half_stable_logdensity
    return stable.stable_logdensity_table(r)


def part3_kernel(alpha, p, q) -> DilationMeasure:
    """``v^(-1-alpha) int_0^inf exp(-x v^p) f_{q/p}(x) dx``."""
    r = q / p
    logf = _stable_log(r)

    def log_h(v):
        v = np.atleast_1d(v)
        w = v**p
        res = integrate_batch(
            lambda x, i: np.exp(logf(x) - x * w[i]), 0.0, math.inf,
            points=(1.0 / w)[:, None], upper_exp=-1.0 - r, tol=_TINY, rtol=_RTOL)
        return _safe_log(res.values) - (1.0 + alpha) * np.log(v)

    return _custom_kernel("Part3Kernel", {"alpha": alpha, "p": p, "q": q}, log_h, alpha,
                          math.inf, ExpPower(q, -alpha - 1.0))


def part4_kernel(alpha, p, q, r) -> DilationMeasure:
    """``p F(s^-p) s^(-alpha-p-1)`` with
    ``F(u) = int_0^inf f_{q/p}(u t^(-p/q)) f_{r/q}(t) t^(-p/q) dt``."""
    logf1 = _stable_log(q / p)
    logf2 = _stable_log(r / q)
    k = p / q

    def log_h(s):
        s = np.atleast_1d(s)
        ls = np.log(s)
        u = np.exp(-p * ls)
        res = integrate_batch(
            lambda t, i: np.exp(logf1(u[i] * t**-k) + logf2(t) - k * np.log(t)),
            0.0, math.inf, points=np.stack([u ** (1.0 / k), np.ones_like(u)], axis=1),
            tol=_TINY, rtol=_RTOL)
        return math.log(p) + _safe_log(res.values) - (alpha + p + 1.0) * ls

    return _custom_kernel("Part4Kernel", {"alpha": alpha, "p": p, "q": q, "r": r}, log_h,
                          alpha - r, math.inf, ExpPower(p * r / (p - r)))


# --- routes ------------------------------------------------------------------------------


def _routes(spec: IdentitySpec):
    """Return ``(lhs_chain, rhs_chain, oracle_chain)``; each chain lists the
    transforms applied innermost first."""
    P = {k: (float(v) if not isinstance(v, Mapping) else v) for k, v in spec.params.items()}
    if spec.id == "Part1":
        b, a, p = P["beta"], P["alpha"], P["p"]
        return [make_psi(a, p)], [make_psi(b, p), make_tau(b, a, p)], [part1_kernel(b, a, p)]
    if spec.id == "Part2":
        g, b, a, p = P["gamma"], P["beta"], P["alpha"], P["p"]
        return ([make_tau(g, a, p)], [make_tau(g, b, p), make_tau(b, a, p)],
                [part2_kernel(g, b, a, p)])
    if spec.id == "Part3":
        a, p, q = P["alpha"], P["p"], P["q"]
        return [make_psi(a, q)], [make_psi(a, p), make_pi(a, p, q)], [part3_kernel(a, p, q)]
    if spec.id == "Part4":
        a, p, q, r = P["alpha"], P["p"], P["q"], P["r"]
        return ([make_pi(a, p, r)], [make_pi(a, p, q), make_pi(a, q, r)],
                [part4_kernel(a, p, q, r)])
    if spec.id == "Commute":
        r1, r2 = _rho(P["rho1"]), _rho(P["rho2"])
        return [r1, r2], [r2, r1], [compose_dilations(r1, r2)]
    b, a, p, q = P["beta"], P["alpha"], P["p"], P["q"]
    return ([make_psi(a, q)], [make_psi(b, p), make_tau(b, a, p), make_pi(a, p, q)],
            [make_psi(b, p), make_pi(b, p, q), make_tau(b, a, q)])


def _chain_domain(chain, M) -> bool:
    cur = M
    for rho in chain:
        if not in_domain(rho, cur):
            return False
        cur = transform(rho, cur)
    return True


def _apply_chain(chain, M):
    cur = M
    for rho in chain:
        cur = transform(rho, cur)
    return cur


def _evaluate(measure: LevyMeasure, grid: np.ndarray) -> np.ndarray:
    out = np.zeros((len(measure.components), grid.size))
    for j, c in enumerate(measure.components):
        d = c.radial.density
        if d is not None:
            out[j] = d(grid)
    return out


# --- reports -----------------------------------------------------------------------------


@dataclass
class VerificationReport:
    spec: IdentitySpec
    measure_id: str
    grid: list
    tolerance: float
    directions: list = field(default_factory=list)
    lhs: list = field(default_factory=list)
    rhs: list = field(default_factory=list)
    oracle: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    oracle_residuals: list = field(default_factory=list)
    sup_residual: float = math.nan
    sup_oracle_residual: float = math.nan
    passed: bool = False
    status: str = "ok"
    message: str = ""
    domain_lhs: bool | None = None
    domain_rhs: bool | None = None
    evaluations: int = 0
    integrals: int = 0
    seconds: float = 0.0

    def to_dict(self) -> dict:
        d = {
            "schema_version": SCHEMA_VERSION,
            "identity": self.spec.id,
            "params": _jsonable(self.spec.params),
            "label": self.spec.label(),
            "fixture": self.measure_id,
            "grid": list(self.grid),
            "tolerance": self.tolerance,
            "directions": self.directions,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "oracle": self.oracle,
            "residuals": self.residuals,
            "oracle_residuals": self.oracle_residuals,
            "sup_residual": _finite_or_none(self.sup_residual),
            "sup_oracle_residual": _finite_or_none(self.sup_oracle_residual),
            "passed": self.passed,
            "status": self.status,
            "message": self.message,
            "domain_lhs": self.domain_lhs,
            "domain_rhs": self.domain_rhs,
            "quadrature_budget_used": {"evaluations": self.evaluations, "integrals": self.integrals},
            "seconds": round(self.seconds, 3),
        }
        return d

    def csv_rows(self):
        params = ";".join(f"{k}={_jsonable(v)}" for k, v in self.spec.params.items())
        for j, direction in enumerate(self.directions):
            for i, r in enumerate(self.grid):
                yield [self.spec.id, params, self.measure_id, " ".join(repr(x) for x in direction),
                       repr(r), repr(self.lhs[j][i]), repr(self.rhs[j][i]),
                       repr(self.residuals[j][i])]


def _finite_or_none(x):
    return x if math.isfinite(x) else None


CSV_HEADER = ["identity", "params", "fixture", "direction", "r", "lhs", "rhs", "residual"]


def reports_to_json(reports: Sequence[VerificationReport]) -> str:
    summary = {
        "cells": len(reports),
        "passed": sum(r.passed for r in reports),
        "failed": sum(not r.passed for r in reports),
    }
    return json.dumps({"schema_version": SCHEMA_VERSION, "summary": summary,
                       "reports": [r.to_dict() for r in reports]}, indent=2)


def reports_to_csv(reports: Sequence[VerificationReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for rep in reports:
        w.writerows(rep.csv_rows())
    return buf.getvalue()


# --- verification ----------------------------------------------------------------------------


def verify(spec: IdentitySpec, M: LevyMeasure, grid=DEFAULT_GRID, tol: float | None = None,
           measure_id: str | None = None) -> VerificationReport:
    """Evaluate one identity on one measure.

    Raises NotInDomain when M is outside the (common) domain, DomainMismatch
    when the two sides disagree about it.
    """
    grid_arr = np.asarray(grid, dtype=float)
    if grid_arr.ndim != 1 or grid_arr.size == 0 or np.any(np.diff(grid_arr) <= 0) or np.any(grid_arr <= 0):
        raise ValueError("grid must be a non-empty strictly increasing list of positive radii")
    tol = spec.default_tol() if tol is None else float(tol)
    rep = VerificationReport(spec, measure_id or M.label or "measure", grid_arr.tolist(), tol)
    t0 = time.perf_counter()
    with count_evaluations() as counter:
        lhs_chain, rhs_chain, oracle_chain = _routes(spec)
        dl, dr = _chain_domain(lhs_chain, M), _chain_domain(rhs_chain, M)
        rep.domain_lhs, rep.domain_rhs = dl, dr
        if dl != dr:
            raise DomainMismatch(
                f"{spec.label()} on {rep.measure_id}: lhs domain {dl}, rhs domain {dr}")
        if not dl:
            raise NotInDomain(f"{rep.measure_id} is outside the domain of {spec.label()}")
        if not _chain_domain(oracle_chain, M):
            raise DomainMismatch(f"{spec.label()} on {rep.measure_id}: oracle route out of domain")
        lhs = _evaluate(_apply_chain(lhs_chain, M), grid_arr)
        rhs = _evaluate(_apply_chain(rhs_chain, M), grid_arr)
        orc = _evaluate(_apply_chain(oracle_chain, M), grid_arr)
    res = np.abs(lhs - rhs)
    ores = np.abs(rhs - orc)
    rep.directions = [list(c.direction) for c in M.components]
    rep.lhs, rep.rhs, rep.oracle = lhs.tolist(), rhs.tolist(), orc.tolist()
    rep.residuals, rep.oracle_residuals = res.tolist(), ores.tolist()
    rep.sup_residual = float(res.max()) if res.size else 0.0
    rep.sup_oracle_residual = float(ores.max()) if ores.size else 0.0
    rep.passed = bool(rep.sup_residual <= tol and rep.sup_oracle_residual <= tol)
    rep.evaluations, rep.integrals = counter.evaluations, counter.integrals
    rep.seconds = time.perf_counter() - t0
    return rep


def _run_cell(spec, name, M, grid, tol):
    try:
        return verify(spec, M, grid, tol, measure_id=name)
    except NotInDomain as exc:
        rep = VerificationReport(spec, name, list(grid), tol if tol is not None else spec.default_tol())
        rep.status, rep.message = "not_in_domain", str(exc)
        rep.domain_lhs = rep.domain_rhs = False
        return rep
    except DomainMismatch as exc:
        rep = VerificationReport(spec, name, list(grid), tol if tol is not None else spec.default_tol())
        rep.status, rep.message = "domain_mismatch", str(exc)
        return rep
    except (UpsilonError, ArithmeticError, ValueError) as exc:
        rep = VerificationReport(spec, name, list(grid), tol if tol is not None else spec.default_tol())
        rep.status, rep.message = "error", f"{type(exc).__name__}: {exc}"
        return rep


def run_cells(cells, grid=DEFAULT_GRID, tol: float | None = None, workers: int = 1):
    """Verify ``(spec, fixture_name, measure)`` cells; reports keep the input order."""
    cells = list(cells)
    if workers <= 1:
        return [_run_cell(s, n, m, grid, tol) for s, n, m in cells]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futs = [pool.submit(_run_cell, s, n, m, grid, tol) for s, n, m in cells]
        return [f.result() for f in futs]


def verify_suite(specs, fixtures, tol: float | None = None, grid=DEFAULT_GRID, workers: int = 1):
    """Cartesian product of specs and fixtures; per-cell errors are reported,
    not raised.  ``fixtures`` maps names to measures (or is a list of measures)."""
    if isinstance(fixtures, Mapping):
        items = list(fixtures.items())
    else:
        items = [(m.label or f"fixture{i}", m) for i, m in enumerate(fixtures)]
    cells = [(s, n, m) for s in specs for n, m in items]
    return run_cells(cells, grid, tol, workers)


# --- fixtures and the default suite -------------------------------------------------------


def fixtures() -> dict:
    """Named one-dimensional test measures."""
    pair = LevyMeasure(1, (
        Component((1.0,), RadialMeasure(((1.0, 1.0),))),
        Component((-1.0,), RadialMeasure(((2.0, 0.5),))),
    ), "atom-pair")
    out = {
        "delta1": atom_measure(1.0, 1.0),
        "atom-pair": pair,
        "exp": density_measure(exp_density()),
        "stable-like": density_measure(power_law_spliced(0.4, 1.6)),
        "compact": density_measure(compact_poly(1.0, 1.0, 2.0)),
    }
    for k, m in out.items():
        object.__setattr__(m, "label", k)
    return out


def default_cells():
    """The default certification suite as ``(spec, fixture_name, measure)`` cells."""
    fx = fixtures()
    everything = list(fx)
    cells = []

    def add(spec, names):
        cells.extend((spec, n, fx[n]) for n in names)

    for b, a, p in [(-1, 0.5, 1), (-1, 0.5, 2), (0.1, 1.5, 0.7), (-3, 0, 1)]:
        add(IdentitySpec("Part1", {"beta": b, "alpha": a, "p": p}), everything)
    for p in (1, 2):
        add(IdentitySpec("Part2", {"gamma": -2, "beta": -1, "alpha": 0.5, "p": p}), everything)
    for a, p, q in [(0.5, 1, 0.5), (-1, 2, 1), (1.5, 1, 0.25)]:
        add(IdentitySpec("Part3", {"alpha": a, "p": p, "q": q}), everything)
    for a in (-1, 0.5):
        add(IdentitySpec("Part4", {"alpha": a, "p": 1, "q": 0.5, "r": 0.25}), everything)
    add(IdentitySpec("Part4", {"alpha": 2.1, "p": 1, "q": 0.5, "r": 0.25}), ["compact"])
    kernels = [{"kind": "psi", "alpha": -1, "p": 1}, {"kind": "tau", "beta": -2, "alpha": -1, "p": 1},
               {"kind": "pi", "alpha": -1, "p": 1, "q": 0.5}]
    for i in range(3):
        for j in range(i + 1, 3):
            add(IdentitySpec("Commute", {"rho1": kernels[i], "rho2": kernels[j]}), ["delta1"])
    add(IdentitySpec("Chain", {"beta": -1, "alpha": 0.5, "p": 1, "q": 0.5}), ["delta1"])
    return cells


def run_default_suite(workers: int = 1, grid=DEFAULT_GRID):
    return run_cells(default_cells(), grid, None, workers)
