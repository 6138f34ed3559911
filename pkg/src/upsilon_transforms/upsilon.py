"""Upsilon transforms ``[Y_rho M](B) = int M(s^-1 B) rho(ds)`` in density form.

Dilation measures carry a density ``g`` together with the metadata that
decides domains: the origin exponent ``a`` (``g(s) ~ s**(-a-1)`` near 0),
the support bound and the tail class.  Transforms are lazy: the result is a
LevyMeasure whose radial densities run the mixing quadrature when evaluated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import stable
from .errors import MetadataError, NotInDomain, ParamError
from .levy import (
    CompactSupport,
    Component,
    ExpPower,
    LevyMeasure,
    MomentClass,
    PowerLaw,
    RadialDensity,
    RadialMeasure,
    TailClass,
    class_membership,
    density_integral,
    heavier_tail,
)
from .numkit import integrate_batch, log_gamma

# relative accuracy of inner (evaluator) quadratures; absolute floor only guards zeros
INNER_RTOL = 1e-11
# inner integrals of nested transforms aim at INNER_RTOL but settle for
# INNER_ACCEPT_RTOL when roundoff near a support edge blocks the finer target
INNER_ACCEPT_RTOL = 1e-5
INNER_MAX_EVALS = 20_000
INNER_CHUNK = 256
_TINY = 1e-300


def _snap(x: float) -> float:
    """Round values within a few ulps of the classification boundaries 0 and 2."""
    for edge in (0.0, 2.0):
        if abs(x - edge) <= 8 * np.finfo(float).eps * max(1.0, abs(x)):
            return edge
    return x


@dataclass(frozen=True, eq=False)
class DilationMeasure:
    """Dilation measure ``rho(ds) = g(s) ds`` on (0, support_upper).

    ``upper_exponent`` describes ``(support_upper - s)**e`` at a finite support
    bound; ``origin_bounds = (a, b, delta)`` witnesses
    ``a < s**(origin_exponent + 1) g(s) < b`` on ``(0, delta)``.
    """

    kind: str
    params: Mapping
    log_g: Callable[[np.ndarray], np.ndarray]
    origin_exponent: float
    origin_bounds: tuple
    support_upper: float
    tail: TailClass
    upper_exponent: float = math.nan
    second_moment_finite: bool = True
    scale: float = 1.0
    meta: Mapping = field(default_factory=dict)

    def g(self, s):
        s = np.asarray(s, dtype=float)
        out = np.zeros(s.shape)
        ok = (s > 0) & (s < self.support_upper)
        if np.any(ok):
            with np.errstate(over="ignore", under="ignore"):
                out[ok] = np.exp(self.log_g(s[ok]))
        return float(out) if out.ndim == 0 else out

    def __str__(self):
        args = ", ".join(f"{k}={v:g}" for k, v in self.params.items())
        return f"{self.kind}({args})"


@dataclass(frozen=True)
class DomainClass:
    """Domain of a transform: All | LogMoment | Moment(alpha) | ZeroOnly."""

    kind: str
    alpha: float | None = None

    def __post_init__(self):
        if self.kind not in ("All", "LogMoment", "Moment", "ZeroOnly"):
            raise ValueError(f"unknown domain class {self.kind!r}")
        if self.kind == "Moment" and not (self.alpha is not None and 0 < self.alpha < 2):
            raise ValueError("Moment domain needs alpha in (0, 2)")

    def moment_class(self) -> MomentClass | None:
        if self.kind == "All":
            return MomentClass.m0()
        if self.kind == "LogMoment":
            return MomentClass.mlog()
        if self.kind == "Moment":
            return MomentClass.malpha(self.alpha)
        return None

    @property
    def name(self) -> str:
        if self.kind == "Moment":
            return f"M^{self.alpha:g}"
        return {"All": "M0", "LogMoment": "M_log", "ZeroOnly": "{0}"}[self.kind]

    def to_dict(self) -> dict:
        d = {"domain": self.name, "kind": self.kind}
        if self.alpha is not None:
            d["alpha"] = self.alpha
        return d


# --- kernels ---------------------------------------------------------------------


def k_const(alpha: float, beta: float, p: float) -> float:
    """Normalising constant ``Gamma((alpha - beta)/p) / p``."""
    if not p > 0:
        raise ParamError(f"p must be > 0, got {p!r}")
    if not beta < alpha:
        raise ParamError(f"need beta < alpha, got beta={beta!r}, alpha={alpha!r}")
    return math.exp(log_gamma((alpha - beta) / p)) / p


def _bounds_from_samples(h, delta):
    s = delta * np.logspace(0, -6, 25)
    vals = np.asarray(h(s))
    return (0.5 * float(vals.min()), 2.0 * float(vals.max()), delta)


def make_psi(alpha: float, p: float) -> DilationMeasure:
    """``g(s) = s**(-alpha-1) exp(-s**p)``."""
    alpha, p = float(alpha), float(p)
    if not (p > 0 and math.isfinite(alpha)):
        raise ParamError(f"Psi needs p > 0 and finite alpha, got alpha={alpha!r}, p={p!r}")
    delta = 0.5
    return DilationMeasure(
        "Psi", {"alpha": alpha, "p": p},
        lambda s: -(alpha + 1.0) * np.log(s) - s**p,
        _snap(alpha), (0.5 * math.exp(-(delta**p)), 2.0, delta),
        math.inf, ExpPower(p, -alpha - 1.0),
        second_moment_finite=alpha < 2,
    )


def make_tau(beta: float, alpha: float, p: float) -> DilationMeasure:
    """``g(s) = K^-1 s**(-alpha-1) (1 - s**p)**((alpha-beta)/p - 1)`` on (0, 1)."""
    beta, alpha, p = float(beta), float(alpha), float(p)
    if not (p > 0 and beta < alpha):
        raise ParamError(f"Tau needs p > 0 and beta < alpha, got beta={beta!r}, alpha={alpha!r}, p={p!r}")
    logk = math.log(k_const(alpha, beta, p))
    e = (alpha - beta) / p - 1.0
    delta = 0.5
    edge = (1.0 - delta**p) ** e
    lo, hi = math.exp(-logk) * min(1.0, edge), math.exp(-logk) * max(1.0, edge)
    return DilationMeasure(
        "Tau", {"beta": beta, "alpha": alpha, "p": p},
        lambda s: -logk - (alpha + 1.0) * np.log(s) + e * np.log1p(-(s**p)),
        _snap(alpha), (0.5 * lo, 2.0 * hi, delta), 1.0, CompactSupport(1.0),
        upper_exponent=e, second_moment_finite=alpha < 2,
    )


def make_pi(alpha: float, p: float, q: float) -> DilationMeasure:
    """``g(s) = p f_{q/p}(s**-p) s**(-alpha-p-1)`` with f the one-sided stable density."""
    alpha, p, q = float(alpha), float(p), float(q)
    if not (0 < q < p and math.isfinite(alpha)):
        raise ParamError(f"Pi needs 0 < q < p, got alpha={alpha!r}, p={p!r}, q={q!r}")
    r = q / p
    logp = math.log(p)
    if r == 0.5:
        def logf(x):
            return stable.half_stable_logdensity(x)
    else:
        logf = stable.stable_logdensity_table(r)

    def log_g(s):
        ls = np.log(s)
        return logp + logf(np.exp(-p * ls)) - (alpha + p + 1.0) * ls

    a = _snap(alpha - q)
    delta = 0.5
    bounds = _bounds_from_samples(lambda s: np.exp(log_g(s) + (a + 1.0) * np.log(s)), delta)
    # f_r(x) ~ x^(-(2-r)/(2(1-r))) exp(-c x^(-r/(1-r))) as x -> 0
    tail_power = p * (2.0 - r) / (2.0 * (1.0 - r)) - alpha - p - 1.0
    return DilationMeasure(
        "Pi", {"alpha": alpha, "p": p, "q": q}, log_g, a, bounds, math.inf,
        ExpPower(p * q / (p - q), tail_power), second_moment_finite=alpha < 2 + q,
    )


def make_dilation(kind: str, **params) -> DilationMeasure:
    """Build ``Psi(alpha, p)``, ``Tau(beta, alpha, p)`` or ``Pi(alpha, p, q)``."""
    makers = {"psi": (make_psi, ("alpha", "p")), "tau": (make_tau, ("beta", "alpha", "p")),
              "pi": (make_pi, ("alpha", "p", "q"))}
    key = kind.lower()
    if key not in makers:
        raise ParamError(f"unknown kernel {kind!r}; expected psi, tau or pi")
    fn, names = makers[key]
    missing = [n for n in names if n not in params]
    extra = sorted(set(params) - set(names))
    if missing or extra:
        raise ParamError(f"{kind} takes parameters {', '.join(names)}; missing {missing}, unexpected {extra}")
    try:
        return fn(*(float(params[n]) for n in names))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ParamError):
            raise
        raise ParamError(str(exc)) from None


def make_custom(g: Callable, origin_exponent: float, origin_bounds, *, support_upper=math.inf,
                tail: TailClass | None = None, upper_exponent=math.nan,
                second_moment_finite=True, label="Custom") -> DilationMeasure:
    """Wrap a user density ``g`` (vectorized) with declared metadata."""
    if tail is None:
        tail = CompactSupport(support_upper) if math.isfinite(support_upper) else ExpPower(1.0)

    def log_g(s):
        with np.errstate(divide="ignore"):
            return np.log(np.asarray(g(s), dtype=float))

    return DilationMeasure(label, {}, log_g, _snap(float(origin_exponent)), tuple(origin_bounds),
                           float(support_upper), tail, upper_exponent, second_moment_finite)


# --- classification ----------------------------------------------------------------


def spot_check_origin(rho: DilationMeasure) -> bool:
    a, b, delta = rho.origin_bounds
    s = delta * np.array([1e-1, 1e-2, 1e-3])
    vals = np.asarray(rho.g(s)) * s ** (rho.origin_exponent + 1.0)
    return bool(np.all((a < vals) & (vals < b)))


def classify_dilation_domain(rho: DilationMeasure) -> DomainClass:
    """Domain class driven by the origin exponent of g."""
    if not spot_check_origin(rho):
        raise MetadataError(
            f"{rho}: s^(a+1) g(s) leaves the declared bounds {rho.origin_bounds} near 0"
        )
    a = rho.origin_exponent
    if a < 0:
        return DomainClass("All")
    if a == 0:
        return DomainClass("LogMoment")
    if a < 2:
        return DomainClass("Moment", a)
    return DomainClass("ZeroOnly")


def in_domain(rho: DilationMeasure, M: LevyMeasure) -> bool:
    dc = classify_dilation_domain(rho)
    if dc.kind == "ZeroOnly":
        return M.is_zero
    return class_membership(M, dc.moment_class())


def _require_domain(rho, M):
    if not in_domain(rho, M):
        dc = classify_dilation_domain(rho)
        raise NotInDomain(f"measure is not in the domain of {rho}: domain {dc.name}", dc)


# --- transformed measures ------------------------------------------------------------


def _combine_tail(rho: DilationMeasure, tail: TailClass) -> TailClass:
    rt = rho.tail
    if isinstance(rt, CompactSupport):
        if isinstance(tail, CompactSupport):
            return CompactSupport(tail.r_max * rt.r_max)
        return tail
    if isinstance(tail, PowerLaw):
        return tail
    if isinstance(tail, ExpPower):
        return ExpPower(rt.p * tail.p / (rt.p + tail.p), 0.0)
    return ExpPower(rt.p, rt.power)


def _mixture_integral(rho: DilationMeasure, dens: RadialDensity, r: np.ndarray, rtol: float):
    """``int m(r/s) g(s) / s ds`` for each r (vectorized)."""
    n = r.size
    lower = np.zeros(n)
    lower_exp = np.full(n, np.nan)
    mt = dens.tail
    if isinstance(mt, CompactSupport):
        lower = r / mt.r_max
        lower_exp[:] = dens.edge_exponent
    elif isinstance(mt, PowerLaw):
        lower_exp[:] = mt.theta_inf - rho.origin_exponent - 1.0
    upper = np.full(n, rho.support_upper)
    upper_exp = np.full(n, rho.upper_exponent if math.isfinite(rho.support_upper) else np.nan)
    live = lower < upper
    out = np.zeros(n)
    if not np.any(live):
        return out
    r = r[live]
    # breakpoints of m at b map to s = r/b with left and right swapped
    cols = [(r / b, re, le) for b, le, re in dens.breakpoints]
    cols.append((r / dens.scale, np.nan, np.nan))
    # geometric breakpoints where g or m(r/s) decays, so that long finite
    # panels cannot miss a narrow bulk
    for k in range(7):
        cols.append((np.full(r.size, rho.scale * 4.0**k), np.nan, np.nan))
        if k:
            cols.append((r / (dens.scale * 4.0**k), np.nan, np.nan))
    pts = np.stack([c[0] for c in cols], axis=1)
    pl = np.stack([np.full(r.size, c[1]) for c in cols], axis=1)
    pr = np.stack([np.full(r.size, c[2]) for c in cols], axis=1)
    pdf = dens

    def f(s, idx):
        with np.errstate(divide="ignore", over="ignore", under="ignore", invalid="ignore"):
            m = np.asarray(pdf(r[idx] / s))
            val = np.exp(np.log(m) + rho.log_g(s) - np.log(s))
        # nodes rounded onto the support edge see an integrable singularity
        return np.where((m > 0) & (s < rho.support_upper), val, 0.0)

    res = integrate_batch(
        f, lower[live], upper[live], points=pts, point_left_exp=pl, point_right_exp=pr,
        lower_exp=lower_exp[live], upper_exp=upper_exp[live], tol=_TINY, rtol=rtol,
        cut=rho.scale, max_evals=INNER_MAX_EVALS, accept_rtol=INNER_ACCEPT_RTOL,
    )
    out[live] = res.values
    return out


def transformed_density(rho: DilationMeasure, radial: RadialMeasure, rtol: float = INNER_RTOL):
    """Radial density of ``Y_rho`` applied to one radial measure (None if zero)."""
    if radial.is_zero:
        return None
    atoms = tuple(radial.atoms)
    dens = radial.density

    def pdf(r):
        r = np.asarray(r, dtype=float)
        out = np.zeros(r.shape)
        for ri, wi in atoms:
            out += wi * rho.g(r / ri) / ri
        if dens is not None:
            flat = r.ravel()
            mix = np.empty(flat.size)
            # chunks bound the memory of nested quadrature
            for i in range(0, flat.size, INNER_CHUNK):
                mix[i:i + INNER_CHUNK] = _mixture_integral(rho, dens, flat[i:i + INNER_CHUNK], rtol)
            out += mix.reshape(r.shape)
        return out

    origin = max(rho.origin_exponent, radial.origin_exponent)
    tail = _combine_tail(rho, radial.tail)
    bps = []
    edge = 0.0
    S = rho.support_upper
    if math.isfinite(S):
        for ri, _ in atoms:
            bps.append((ri * S, rho.upper_exponent, np.nan))
        if dens is not None:
            bps.extend((b * S, np.nan, np.nan) for b, _, _ in dens.breakpoints)
            if isinstance(dens.tail, CompactSupport):
                edge = dens.edge_exponent + rho.upper_exponent + 1.0
                if atoms and max(a[0] for a in atoms) >= dens.tail.r_max:
                    edge = min(edge, rho.upper_exponent)
        if dens is None and atoms:
            edge = rho.upper_exponent
    scale = dens.scale if dens is not None else max(a[0] for a in atoms)
    if isinstance(tail, CompactSupport):
        bps = [b for b in bps if b[0] < tail.r_max]
    return RadialDensity(pdf, origin, tail, tuple(bps), edge, "custom", {}, scale)


def transform(rho: DilationMeasure, M: LevyMeasure) -> LevyMeasure:
    """``Y_rho M`` as a lazy density-form measure.  Raises NotInDomain."""
    _require_domain(rho, M)
    comps = []
    for c in M.components:
        d = transformed_density(rho, c.radial)
        comps.append(Component(c.direction, RadialMeasure((), d)))
    label = f"{rho}[{M.label}]" if M.label else str(rho)
    return LevyMeasure(M.dimension, tuple(comps), label)


def transform_density(rho: DilationMeasure, M: LevyMeasure, direction_index: int, r):
    """Radial density of ``Y_rho M`` along component ``direction_index`` at r."""
    _require_domain(rho, M)
    comp = M.components[direction_index]
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr <= 0):
        raise ValueError("r must be positive")
    d = transformed_density(rho, comp.radial)
    if d is None:
        out = np.zeros(r_arr.shape)
    else:
        out = np.asarray(d(r_arr))
    return float(out) if out.ndim == 0 else out


def tail_function(rho: DilationMeasure, t, rtol: float = INNER_RTOL):
    """``eta(t) = rho([t, inf))`` for t > 0 (vectorized)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros(t.shape)
    S = rho.support_upper
    live = t < S
    if not np.any(live):
        return out
    ue = rho.upper_exponent if math.isfinite(S) else math.nan
    res = integrate_batch(
        lambda s, idx: rho.g(s), t[live], S, upper_exp=ue, tol=_TINY, rtol=rtol, cut=rho.scale,
        accept_rtol=INNER_ACCEPT_RTOL,
    )
    out[live] = res.values
    return out


def transform_tail_mass(rho: DilationMeasure, M: LevyMeasure, u, direction_index=None):
    """``[Y_rho M](|x| > u)``, over all directions unless one is selected."""
    _require_domain(rho, M)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any(u <= 0):
        raise ValueError("u must be positive")
    comps = M.components if direction_index is None else [M.components[direction_index]]
    total = np.zeros(u.shape)
    S = rho.support_upper
    for c in comps:
        rm = c.radial
        for ri, wi in rm.atoms:
            total += wi * tail_function(rho, u / ri)
        dens = rm.density
        if dens is None:
            continue
        mt = dens.tail
        lower = np.zeros(u.shape)
        lower_exp = np.full(u.shape, np.nan)
        if isinstance(mt, CompactSupport):
            lower = u / mt.r_max
            lower_exp[:] = dens.edge_exponent + 1.0
        elif isinstance(mt, PowerLaw):
            lower_exp[:] = mt.theta_inf - rho.origin_exponent - 1.0
        live = lower < S
        if not np.any(live):
            continue
        uu = u[live]
        if dens.breakpoints:
            pts = np.stack([uu / b for b, _, _ in dens.breakpoints], axis=1)
        else:
            pts = None
        ue = rho.upper_exponent if math.isfinite(S) else math.nan

        def f(s, idx, uu=uu, dens=dens):
            v = uu[idx] / s
            surv = density_integral(dens, None, v, np.inf, tol=_TINY, rtol=INNER_RTOL)
            return surv * rho.g(s)

        res = integrate_batch(
            f, lower[live], S, points=pts, lower_exp=lower_exp[live], upper_exp=ue,
            tol=_TINY, rtol=1e-10, cut=rho.scale,
        )
        total[live] += res.values
    return total


def range_moment_check(rho: DilationMeasure, M: LevyMeasure, beta: float) -> float:
    """``int_{|x|>1} |x|^beta [Y_rho M](dx)`` for ``beta`` in ``[0, alpha)``.

    With ``T(x) = [Y_rho M](|x| > x)`` the integral is
    ``T(1) + beta * int_1^inf x^(beta-1) T(x) dx``.
    """
    dc = classify_dilation_domain(rho)
    if dc.kind != "Moment":
        raise ParamError(f"range moment check needs a Moment(alpha) domain, {rho} has {dc.name}")
    beta = float(beta)
    if not (0.0 <= beta < dc.alpha):
        raise ParamError(f"beta must lie in [0, {dc.alpha:g}), got {beta:g}")
    _require_domain(rho, M)
    t1 = float(transform_tail_mass(rho, M, 1.0)[0])
    if beta == 0.0:
        return t1
    tails = [_combine_tail(rho, c.radial.tail) for c in M.components if not c.radial.is_zero]
    ue = math.nan
    if tails:
        t = heavier_tail(*tails)
        if isinstance(t, PowerLaw):
            ue = beta - 1.0 - t.theta_inf
    res = integrate_batch(
        lambda x, idx: x ** (beta - 1.0) * transform_tail_mass(rho, M, x),
        1.0, math.inf, upper_exp=ue, tol=_TINY, rtol=1e-9, size=1,
    )
    return t1 + beta * float(res.values[0])


# --- composite dilations ------------------------------------------------------------


def compose_dilations(rho1: DilationMeasure, rho2: DilationMeasure,
                      rtol: float = INNER_RTOL) -> DilationMeasure:
    """Dilation measure of ``Y_rho2 Y_rho1``: the multiplicative convolution
    ``h(v) = int g1(s) g2(v/s) / s ds``."""
    S1, S2 = rho1.support_upper, rho2.support_upper

    def h(v):
        v = np.atleast_1d(np.asarray(v, dtype=float))
        n = v.size
        lower = np.zeros(n)
        lower_exp = np.full(n, np.nan)
        if math.isfinite(S2):
            lower = v / S2
            lower_exp[:] = rho2.upper_exponent
        else:
            lower_exp[:] = np.nan
        upper = np.full(n, S1)
        upper_exp = np.full(n, rho1.upper_exponent if math.isfinite(S1) else np.nan)
        out = np.zeros(n)
        live = lower < upper
        if np.any(live):
            vv = v[live]

            def f(s, idx):
                with np.errstate(under="ignore", over="ignore"):
                    return np.exp(rho1.log_g(s) + rho2.log_g(vv[idx] / s) - np.log(s))

            pts = np.stack([vv, np.sqrt(vv)], axis=1)
            res = integrate_batch(
                f, lower[live], upper[live], points=pts, lower_exp=lower_exp[live],
                upper_exp=upper_exp[live], tol=_TINY, rtol=rtol,
            )
            out[live] = res.values
        return out

    def log_h(v):
        with np.errstate(divide="ignore"):
            return np.log(h(v))

    a = max(rho1.origin_exponent, rho2.origin_exponent)
    S = S1 * S2
    if math.isfinite(S1) and math.isfinite(S2):
        tail: TailClass = CompactSupport(S)
        ue = rho1.upper_exponent + rho2.upper_exponent + 1.0
    elif math.isfinite(S1) or math.isfinite(S2):
        tail = rho2.tail if math.isfinite(S1) else rho1.tail
        ue = math.nan
    else:
        p1, p2 = rho1.tail.p, rho2.tail.p
        tail = ExpPower(p1 * p2 / (p1 + p2), 0.0)
        ue = math.nan
    delta = 0.5 * min(1.0, S)
    bounds = _bounds_from_samples(lambda s: np.exp(log_h(s) + (a + 1.0) * np.log(s)), delta)
    return DilationMeasure(
        "Composite", {}, log_h, a, bounds, S, tail, upper_exponent=ue,
        second_moment_finite=rho1.second_moment_finite and rho2.second_moment_finite,
        meta={"factors": (str(rho1), str(rho2))},
    )


# --- range inclusions ----------------------------------------------------------------


def range_inclusions(M: LevyMeasure, gamma: float, beta: float, alpha: float,
                     p: float, q: float, r: float):
    """Check that images land in the next transform's domain.

    Returns ``(label, applicable, holds)`` triples, one per inclusion;
    ``applicable`` is False when M is outside the first transform's domain.
    """
    if not (gamma < beta < alpha and 0 < r < q < p):
        raise ParamError("need gamma < beta < alpha and 0 < r < q < p")
    cases = [
        ("R(Tau[beta->alpha,p]) in D(Psi[beta,p])", make_tau(beta, alpha, p), make_psi(beta, p)),
        ("R(Tau[beta->alpha,p]) in D(Tau[gamma->beta,p])", make_tau(beta, alpha, p),
         make_tau(gamma, beta, p)),
        ("R(Psi[alpha,p]) in D(Pi[alpha,p->q])", make_psi(alpha, p), make_pi(alpha, p, q)),
        ("R(Pi[alpha,q->r]) in D(Pi[alpha,p->q])", make_pi(alpha, q, r), make_pi(alpha, p, q)),
        ("R(Tau[beta->alpha,p]) in D(Pi[alpha,p->q])", make_tau(beta, alpha, p),
         make_pi(alpha, p, q)),
    ]
    out = []
    for label, first, second in cases:
        if not in_domain(first, M):
            out.append((label, False, True))
            continue
        out.append((label, True, in_domain(second, transform(first, M))))
    return out
