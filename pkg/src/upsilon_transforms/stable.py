"""One-sided r-stable densities, 0 < r < 1, normalised so that the Laplace
transform is ``exp(-t**r)``.

Evaluation uses Kanter's representation.  With ``u = pi - phi`` and

    A(u) = (sin(r phi) / sin phi)**(1/(1-r)) * sin((1-r) phi) / sin(r phi),
    y(u) = x**(-r/(1-r)) * A(u),

the density is ``f_r(x) = r / ((1-r) pi x) * int_0^pi y e^{-y} du``.  The
integrand is positive, so there is no cancellation anywhere; for large ``x``
the convergent series in ``x**-r`` is cheaper and just as accurate.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from .errors import DomainError, MomentDiverges, StableIndexError
from .numkit import integrate_batch

_LOG_SQRT_PI = 0.5 * math.log(math.pi)
_RTOL = 1e-12
_SERIES_TERMS = 48


def check_index(r) -> float:
    r = float(r)
    if not (0.0 < r < 1.0):
        raise StableIndexError(f"stable index r must lie in (0, 1), got {r!r}")
    return r


def half_stable_logdensity(x):
    """Closed form of ``log f_{1/2}(x)`` (Levy distribution with scale 1/2)."""
    x = np.asarray(x, dtype=float)
    out = np.full(x.shape, -np.inf)
    pos = x > 0
    xp = x[pos]
    with np.errstate(over="ignore", divide="ignore"):
        out[pos] = -math.log(2.0) - _LOG_SQRT_PI - 1.5 * np.log(xp) - 0.25 / xp
    return out


def half_stable_density(x):
    return np.exp(half_stable_logdensity(x))


def _log_a(u, r):
    phi = np.pi - u
    ls_r = np.log(np.sin(r * phi))
    return (ls_r - np.log(np.sin(u))) / (1.0 - r) + np.log(np.sin((1.0 - r) * phi)) - ls_r


# Taylor coefficients of log(sin x / x) in powers of x^2
_LOGSINC = np.array([
    -1.0 / 6.0, -1.0 / 180.0, -1.0 / 2835.0, -1.0 / 37800.0,
    -2.1377799155576933355e-6, -1.8036702340053310071e-7,
    -1.5661391322766984143e-8, -1.3884130493737299423e-9,
])


def _logsinc(x):
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 0.3
    x2 = np.where(small, x * x, 0.0)
    ser = x2 * np.polyval(_LOGSINC[::-1], x2)
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = np.log(np.sin(x) / x)
    return np.where(small, ser, direct)


def _log_a_ratio(phi, r):
    """``log A(phi) - log A(0)``, accurate to full relative precision near 0."""
    ls_r = _logsinc(r * phi)
    return (ls_r - _logsinc(phi)) / (1.0 - r) + _logsinc((1.0 - r) * phi) - ls_r


def _log_a0(r):
    return r / (1.0 - r) * math.log(r) + math.log1p(-r)


def _bisect_log_u(target, r, lo, hi, iters=80):
    """Solve ``_log_a(exp(v), r) = target`` for v in [lo, hi]; log A decreases in v."""
    lo = np.broadcast_to(lo, target.shape).astype(float)
    hi = np.broadcast_to(hi, target.shape).astype(float)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        above = _log_a(np.exp(mid), r) > target
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    return 0.5 * (lo + hi)


def series_switch(r: float) -> float:
    """Abscissa above which the large-x series is used."""
    return max(1e4, 10.0 ** (1.0 / r))


def _series_log(r, x):
    k = np.arange(1, _SERIES_TERMS + 1, dtype=float)
    coef = gammaln(k * r + 1.0) - gammaln(k + 1.0)
    sgn = np.where(k % 2 == 1, 1.0, -1.0) * np.sin(k * np.pi * r)
    lx = np.log(x)[:, None]
    terms = sgn[None, :] * np.exp(coef[None, :] - k[None, :] * r * lx)
    total = terms.sum(axis=1)
    return np.log(total) - np.log(x) - math.log(math.pi)


def _series_tail(r, X) -> float:
    """``int_X^inf f_r(x) dx`` from the large-x series."""
    k = np.arange(1, _SERIES_TERMS + 1, dtype=float)
    coef = gammaln(k * r + 1.0) - gammaln(k + 1.0)
    sgn = np.where(k % 2 == 1, 1.0, -1.0) * np.sin(k * np.pi * r)
    terms = sgn * np.exp(coef - k * r * math.log(X)) / (k * r)
    return float(terms.sum()) / math.pi


def _kanter_log(r, x):
    n = x.size
    out = np.empty(n)
    lx = np.log(x)
    logc = -r / (1.0 - r) * lx
    la0 = _log_a0(r)
    logy0 = logc + la0
    pref = math.log(r / ((1.0 - r) * math.pi)) - lx
    interior = logy0 < 0.0

    idx = np.nonzero(interior)[0]
    if idx.size:
        lc = logc[idx]
        vmax = math.log(math.pi) - 1e-15
        vstar = _bisect_log_u(-lc, r, -745.0, vmax)
        vcut = _bisect_log_u(math.log(800.0) - lc, r, -745.0, vstar)

        def integrand(v, i):
            u = np.exp(v)
            ly = lc[i] + _log_a(u, r)
            return np.exp(ly - np.exp(ly) + v)

        res = integrate_batch(
            integrand, vcut, vmax, points=vstar[:, None], tol=1e-300, rtol=_RTOL
        )
        with np.errstate(divide="ignore"):
            out[idx] = pref[idx] + np.log(res.values)

    idx = np.nonzero(~interior)[0]
    if idx.size:
        ly0 = logy0[idx]
        y0 = np.exp(ly0)
        # phi_end: where y - y0 reaches 60; beyond it the integrand is < e^-60 of its peak
        target = la0 + np.log1p(60.0 / y0)
        v_end = _bisect_log_u(target, r, -745.0, math.log(math.pi) - 1e-15)
        phi_end = np.pi - np.exp(v_end)

        def integrand(phi, i):
            d = _log_a_ratio(phi, r)
            return np.exp(ly0[i] + d - y0[i] * np.expm1(d))

        res = integrate_batch(integrand, 0.0, phi_end, tol=1e-300, rtol=_RTOL)
        with np.errstate(divide="ignore"):
            out[idx] = pref[idx] - y0 + np.log(res.values)
    return out


def stable_logdensity(r, x):
    """``log f_r(x)``; ``-inf`` off the support or on underflow."""
    r = check_index(r)
    xa = np.asarray(x, dtype=float)
    flat = xa.ravel()
    out = np.full(flat.shape, -np.inf)
    pos = (flat > 0) & np.isfinite(flat)
    big = pos & (flat >= series_switch(r))
    mid = pos & ~big
    if np.any(big):
        out[big] = _series_log(r, flat[big])
    if np.any(mid):
        out[mid] = _kanter_log(r, flat[mid])
    out = out.reshape(xa.shape)
    return float(out) if out.ndim == 0 else out


_CHEB_DEG = 24
_CHEB_WIDTH = 0.5
_LOG_FLOOR = -800.0


class _ChebTable:
    """Piecewise Chebyshev interpolant of ``log f_r`` in ``t = log x``."""

    def __init__(self, r: float):
        self.r = r
        # the left tail behaves like -c x^(-r/(1-r)); narrow panels keep it polynomial
        self.width = _CHEB_WIDTH / max(1.0, r / (1.0 - r))
        t_hi = math.log(series_switch(r))
        t_lo = t_hi
        while True:
            t_lo -= 2.0
            if float(stable_logdensity(r, math.exp(t_lo))) < _LOG_FLOOR:
                break
        n = int(math.ceil((t_hi - t_lo) / self.width))
        self.t_lo, self.t_hi = t_hi - n * self.width, t_hi
        self.n = n
        k = np.arange(_CHEB_DEG)
        theta = np.pi * (k + 0.5) / _CHEB_DEG
        left = self.t_lo + self.width * np.arange(n)
        t = left[:, None] + 0.5 * self.width * (1.0 - np.cos(theta))[None, :]
        vals = np.asarray(stable_logdensity(r, np.exp(t.ravel()))).reshape(t.shape)
        # floor the deep left tail so the fit stays finite
        vals = np.maximum(vals, 2.0 * _LOG_FLOOR)
        basis = np.cos(np.outer(k, theta))
        coef = (2.0 / _CHEB_DEG) * vals @ basis.T
        coef[:, 0] *= 0.5
        self.coef = coef

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, -np.inf)
        with np.errstate(divide="ignore"):
            t = np.log(np.where(x > 0, x, np.nan))
        inside = (t >= self.t_lo) & (t < self.t_hi)
        big = (x > 0) & ~inside & (t >= self.t_hi)
        if np.any(big):
            out[big] = _series_log(self.r, x[big])
        if np.any(inside):
            ti = t[inside]
            j = np.minimum(((ti - self.t_lo) / self.width).astype(int), self.n - 1)
            # Chebyshev variable in [-1, 1] (the nodes run from left to right)
            z = 2.0 * (ti - (self.t_lo + j * self.width)) / self.width - 1.0
            z = -z
            c = self.coef[j]
            b1 = np.zeros(ti.shape)
            b2 = np.zeros(ti.shape)
            for m in range(_CHEB_DEG - 1, 0, -1):
                b1, b2 = 2.0 * z * b1 - b2 + c[:, m], b1
            val = z * b1 - b2 + c[:, 0]
            out[inside] = np.where(val < _LOG_FLOOR, -np.inf, val)
        return out


@lru_cache(maxsize=32)
def stable_logdensity_table(r) -> _ChebTable:
    """Cached fast evaluator of ``log f_r`` (about 1e-12 relative), for use
    inside other quadratures; values below ``exp(-800)`` are returned as 0."""
    return _ChebTable(check_index(r))


def stable_density(r, x):
    """Density ``f_r(x)`` of the one-sided r-stable law; 0 for ``x <= 0``."""
    out = np.exp(stable_logdensity(r, x))
    return float(out) if np.ndim(out) == 0 else out


def stable_laplace(r, t):
    """Numerical Laplace transform ``int_0^inf e^{-tx} f_r(x) dx``."""
    r = check_index(r)
    ta = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ta < 0):
        raise DomainError("Laplace argument t must be >= 0")

    def integrand(s, i):
        return np.exp(stable_logdensity(r, s) - ta[i] * s)

    # for small r the mass spreads over many decades; geometric breakpoints
    # keep each panel smooth.  Every panel is finite: for t > 0 the range ends
    # where e^{-tx} < e^{-800}, for t = 0 the series tail is added exactly
    x_end = 10.0 * series_switch(r)
    upper = np.where(ta > 0, 800.0 / np.where(ta > 0, ta, 1.0), x_end)
    x_lo = math.exp(stable_logdensity_table(r).t_lo)
    decades = np.arange(math.floor(math.log10(x_lo)), math.log10(upper.max()))
    pts = np.tile(10.0**decades, (ta.size, 1))
    res = integrate_batch(
        integrand, 0.0, upper, points=pts, tol=0.0, rtol=1e-11, size=ta.size
    )
    vals = res.values + np.where(ta == 0, _series_tail(r, x_end), 0.0)
    return float(vals[0]) if np.ndim(t) == 0 else vals.reshape(np.shape(t))


def stable_tail_constant(r, xs=(1e4, 1e5, 1e6)) -> float:
    """Limit of ``f_r(x) x^(r+1)`` as x -> inf, by second-order Richardson.

    ``xs`` must be a geometric triple.  The correction terms of
    ``f_r(x) x^(r+1)`` are powers of ``x^-r``, which fixes the extrapolation
    ratios.
    """
    r = check_index(r)
    x0, x1, x2 = (float(v) for v in xs)
    ratio = x1 / x0
    if not math.isclose(x2 / x1, ratio, rel_tol=1e-12) or ratio <= 1:
        raise ValueError("xs must be an increasing geometric triple")
    g = np.asarray(stable_density(r, np.array([x0, x1, x2]))) * np.array([x0, x1, x2]) ** (r + 1)
    q = ratio ** (-r)
    level1 = (g[1:] - q * g[:-1]) / (1.0 - q)
    return float((level1[1] - q * q * level1[0]) / (1.0 - q * q))


def stable_fractional_moment(r, beta) -> float:
    """``int_0^inf s^beta f_r(s) ds``, finite exactly when ``beta < r``."""
    r = check_index(r)
    beta = float(beta)
    if beta >= r:
        raise MomentDiverges(f"moment of order {beta:g} >= r = {r:g} is infinite")

    def integrand(s, i):
        return np.exp(stable_logdensity(r, s) + beta * np.log(s))

    res = integrate_batch(
        integrand, 0.0, np.inf, upper_exp=beta - r - 1.0, tol=0.0, rtol=1e-11, size=1
    )
    return float(res.values[0])


def scaling_composition_rhs(r, p, u):
    """``int_0^inf f_r(u y^(-1/r)) y^(-1/r) f_p(y) dy`` (vectorized over u)."""
    r = check_index(r)
    p = check_index(p)
    ua = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any(ua <= 0):
        raise DomainError("u must be positive")

    def integrand(y, i):
        ly = np.log(y)
        return np.exp(
            stable_logdensity(r, ua[i] * np.exp(-ly / r)) - ly / r + stable_logdensity(p, y)
        )

    res = integrate_batch(integrand, 0.0, np.inf, tol=0.0, rtol=1e-11, size=ua.size)
    return res.values


def scaling_composition_residual(r, p, u) -> float:
    """``|f_{rp}(u) - int f_r(u y^{-1/r}) y^{-1/r} f_p(y) dy|``."""
    r = check_index(r)
    p = check_index(p)
    if not u > 0:
        raise DomainError("u must be positive")
    lhs = stable_density(r * p, float(u))
    rhs = float(scaling_composition_rhs(r, p, float(u))[0])
    return abs(lhs - rhs)
