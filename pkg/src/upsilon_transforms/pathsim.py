"""Monte Carlo for ``Y = int_0^{eta(0)} eta*(t) dX_t`` and its validation.

X keeps only jumps of radius >= eps, so on ``[0, T_eff]`` it is compound
Poisson and the stochastic integral is the finite sum
``sum_i eta*(t_i) J_i``.  Draws come from a Philox generator keyed by
``(seed, block)``; blocks of ``BLOCK`` paths are always generated in full,
so a path depends only on the seed and its own index.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError
from .levy import CompactSupport, LevyMeasure, PowerLaw, RadialDensity, density_integral
from .numkit import gauss_legendre, integrate_batch
from .upsilon import DilationMeasure, _require_domain, tail_function

SCHEMA_VERSION = 1
BLOCK = 4096
RNG_NAME = "numpy.random.Philox"
MAX_DISCARDED_TIME_FRACTION = 0.01
_TINY = 1e-300
_GL_X, _GL_W = gauss_legendre(16)
# panels span a ratio of at most 2**(1/8), where 8 nodes already reach roundoff
_GL8_X, _GL8_W = gauss_legendre(8)
_RATIO = 2.0 ** 0.125


# --- configuration -----------------------------------------------------------------


@dataclass(frozen=True)
class SimConfig:
    jump_cutoff: float
    sample_count: int
    time_truncation: float | str = "auto"
    seed: int = 0

    def __post_init__(self):
        if not (isinstance(self.jump_cutoff, (int, float)) and self.jump_cutoff > 0
                and math.isfinite(self.jump_cutoff)):
            raise ConfigError(f"jump_cutoff must be a positive real, got {self.jump_cutoff!r}")
        if isinstance(self.sample_count, bool) or not isinstance(self.sample_count, (int, np.integer)) \
                or self.sample_count < 1:
            raise ConfigError(f"sample_count must be a positive integer, got {self.sample_count!r}")
        t = self.time_truncation
        if isinstance(t, str):
            if t != "auto":
                raise ConfigError(f"time_truncation must be a positive real or 'auto', got {t!r}")
        elif not (t > 0 and math.isfinite(t)):
            raise ConfigError(f"time_truncation must be positive, got {t!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)) \
                or not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an integer in [0, 2**64), got {self.seed!r}")

    def to_dict(self) -> dict:
        t = self.time_truncation
        return {
            "jump_cutoff": float(self.jump_cutoff),
            "sample_count": int(self.sample_count),
            "time_truncation": t if isinstance(t, str) else float(t),
            "seed": int(self.seed),
        }


@dataclass
class SampleBatch:
    values: np.ndarray
    config: SimConfig
    diagnostics: dict = field(default_factory=dict)

    def __len__(self):
        return self.values.shape[0]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        d = self.values.shape[1]
        w.writerow(["path"] + [f"y{j}" for j in range(d)])
        for i, row in enumerate(self.values):
            w.writerow([i] + [repr(float(v)) for v in row])
        return buf.getvalue()

    def diagnostics_json(self) -> str:
        doc = {
            "schema_version": SCHEMA_VERSION,
            "config": self.config.to_dict(),
            "diagnostics": self.diagnostics,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# --- eta and its inverse -------------------------------------------------------------


def eta0(rho: DilationMeasure) -> float:
    """``eta(0+) = rho((0, inf))``; infinite when g is not integrable at 0."""
    if rho.origin_exponent >= 0:
        return math.inf
    S = rho.support_upper
    res = integrate_batch(
        lambda s, i: rho.g(s), 0.0, S, lower_exp=-rho.origin_exponent - 1.0,
        upper_exp=rho.upper_exponent if math.isfinite(S) else math.nan,
        tol=_TINY, rtol=1e-12, cut=rho.scale, size=1,
    )
    return float(res.values[0])


def eta(rho: DilationMeasure, t):
    """``eta(t) = rho([t, inf))`` for t > 0 (vectorized)."""
    ta = np.asarray(t, dtype=float)
    if np.any(~(ta > 0)):
        raise DomainError("eta needs t > 0")
    out = tail_function(rho, ta.ravel(), rtol=1e-12).reshape(ta.shape)
    return float(out) if out.ndim == 0 else out


def eta_star(rho: DilationMeasure, u, atol: float = 1e-10):
    """``inf{s > 0 : eta(s) <= u}`` by bisection on eta (vectorized)."""
    ua = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any(~(ua > 0)):
        raise DomainError("eta_star needs u > 0")
    out = np.zeros(ua.shape)
    live = ua < eta0(rho)
    if np.any(live):
        uu = ua[live]
        lo = np.zeros(uu.shape)
        if math.isfinite(rho.support_upper):
            hi = np.full(uu.shape, rho.support_upper)
        else:
            hi = np.full(uu.shape, rho.scale)
            for _ in range(2000):
                grow = eta(rho, hi) > uu
                if not np.any(grow):
                    break
                hi = np.where(grow, 2.0 * hi, hi)
                lo = np.where(grow, 0.5 * hi, lo)
        while np.any(hi - lo > atol):
            mid = 0.5 * (lo + hi)
            below = eta(rho, mid) <= uu
            hi = np.where(below, mid, hi)
            lo = np.where(below, lo, mid)
        out[live] = 0.5 * (lo + hi)
    return float(out[0]) if np.ndim(u) == 0 else out.reshape(np.shape(u))


class TailInverse:
    """Tabulated ``H(s) = int_s^upper h`` on ``[lower, upper)`` with its inverse.

    Panels are geometric in s, and geometric in the distance to a finite
    upper bound near it; panel integrals use 16-point Gauss-Legendre.  The
    inverse starts from log-log interpolation of the table and is polished by
    safeguarded Newton steps.  Below the first node (only when ``lower`` is 0)
    h is taken as a pure power with the declared origin exponent; above the
    last node, a PowerLaw tail continues as a Pareto law.
    """

    def __init__(self, h, lower: float, upper: float, *, scale: float = 1.0,
                 origin_exponent: float = math.nan, upper_exponent: float = math.nan,
                 tail=None):
        self.h = h
        self.lower = float(lower)
        self.upper = float(upper)
        self.tail = tail
        self.origin_exponent = origin_exponent
        nodes = self._nodes(scale)
        a, b = nodes[:-1], nodes[1:]
        s = a[:, None] + (b - a)[:, None] * _GL_X[None, :]
        panels = (b - a) * (np.asarray(h(s.ravel())).reshape(s.shape) @ _GL_W)
        top = nodes[-1]
        if top < self.upper:
            ue = upper_exponent if math.isfinite(self.upper) else math.nan
            if isinstance(tail, PowerLaw):
                ue = -tail.theta_inf - 1.0
            rest = integrate_batch(lambda x, i: h(x), top, self.upper, upper_exp=ue,
                                   tol=_TINY, rtol=1e-12, size=1).values[0]
        else:
            rest = 0.0
        self.top_mass = float(rest)
        self.nodes = nodes
        self.values = rest + np.concatenate([np.cumsum(panels[::-1])[::-1], [0.0]])
        self.head_mass = 0.0
        if self.lower == 0.0 and nodes[0] > 0:
            # int_0^{s0} h ~ h(s0) s0 / (-a) when h ~ s^(-a-1), a < 0
            a0 = self.origin_exponent
            if not a0 < 0:
                raise ValueError("lower = 0 needs an integrable origin (exponent < 0)")
            self.head_mass = float(h(np.array([nodes[0]]))[0] * nodes[0] / -a0)
        self.total = float(self.values[0] + self.head_mass)

    def _nodes(self, scale):
        lo, S = self.lower, self.upper
        start = lo if lo > 0 else 1e-12 * scale
        if math.isfinite(S):
            mid = 0.5 * S
            if start >= mid:
                near = S - (S - start) * _RATIO ** -np.arange(0, 400)
                near = near[S - near > 1e-14 * S]
                return np.unique(near)
            k = max(1, int(math.ceil(math.log(mid / start) / math.log(_RATIO))))
            far = start * (mid / start) ** (np.arange(k + 1) / k)
            near = S - mid * _RATIO ** -np.arange(1, 400)
            near = near[S - near > 1e-14 * S]
            return np.unique(np.concatenate([far, near]))
        # march out until the density is negligible or a hard cap is hit
        out = [start]
        cap = 1e40 * max(scale, start)
        s = start
        while s < cap:
            s *= _RATIO
            out.append(s)
            if s > 4.0 * scale and not isinstance(self.tail, PowerLaw):
                with np.errstate(under="ignore"):
                    val = float(np.asarray(self.h(np.array([s])))[0]) * s
                if val < 1e-320:
                    break
            if isinstance(self.tail, PowerLaw) and s > 1e8 * max(scale, start):
                break
        return np.array(out)

    def mass_above(self, s):
        """``H(s)`` for s inside the table (vectorized)."""
        s = np.asarray(s, dtype=float)
        k = np.clip(np.searchsorted(self.nodes, s, side="right") - 1, 0, self.nodes.size - 2)
        a = self.nodes[k]
        return self.values[k] - self._partial(a, s)

    def _partial(self, a, s):
        x = a[:, None] + (s - a)[:, None] * _GL8_X[None, :]
        vals = np.asarray(self.h(x.ravel())).reshape(x.shape)
        return (s - a) * (vals @ _GL8_W)

    def inverse(self, u):
        """``inf{s : H(s) <= u}`` for 0 < u (vectorized)."""
        u = np.asarray(u, dtype=float)
        out = np.empty(u.shape)
        v = self.values
        nodes = self.nodes
        head = u >= v[0]
        tailm = u < v[-1]
        mid = ~head & ~tailm
        if np.any(head):
            if self.lower > 0 or self.head_mass == 0.0:
                out[head] = nodes[0]
            else:
                frac = np.clip((self.total - u[head]) / self.head_mass, 0.0, 1.0)
                out[head] = nodes[0] * frac ** (1.0 / -self.origin_exponent)
        if np.any(tailm):
            if isinstance(self.tail, PowerLaw) and v[-1] > 0:
                th = self.tail.theta_inf
                out[tailm] = nodes[-1] * (u[tailm] / v[-1]) ** (-1.0 / th)
            else:
                out[tailm] = nodes[-1]
        if np.any(mid):
            out[mid] = self._solve(u[mid])
        return out

    def _solve(self, u):
        v, nodes = self.values, self.nodes
        # v is decreasing; find k with v[k] >= u > v[k+1]
        k = np.clip(np.searchsorted(-v, -u, side="left") - 1, 0, nodes.size - 2)
        a, b = nodes[k], nodes[k + 1]
        va = v[k]
        s = self._guess(u, k)
        lo, hi = a.copy(), b.copy()
        act = np.arange(u.size)
        for _ in range(60):
            sa, aa, ua = s[act], a[act], u[act]
            F = va[act] - self._partial(aa, sa) - ua
            lo[act] = np.where(F > 0, sa, lo[act])
            hi[act] = np.where(F > 0, hi[act], sa)
            with np.errstate(divide="ignore", invalid="ignore"):
                new = sa + F / np.asarray(self.h(sa))
            bad = ~np.isfinite(new) | (new <= lo[act]) | (new >= hi[act])
            new = np.where(bad, 0.5 * (lo[act] + hi[act]), new)
            done = np.abs(new - sa) <= 1e-14 * np.abs(sa) + 1e-300
            s[act] = new
            act = act[~done]
            if act.size == 0:
                break
        return s

    def _guess(self, u, k):
        """Cubic Hermite of s against log H on the bracketing panel."""
        v, nodes = self.values, self.nodes
        if not hasattr(self, "_slope"):
            with np.errstate(divide="ignore", invalid="ignore"):
                self._logv = np.log(v)
                self._slope = -v / np.asarray(self.h(nodes))
        a, b = nodes[k], nodes[k + 1]
        ya, yb = self._logv[k], self._logv[k + 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            dy = yb - ya
            t = (np.log(u) - ya) / dy
            da = self._slope[k] * dy
            db = self._slope[k + 1] * dy
            t2, t3 = t * t, t * t * t
            s = ((2 * t3 - 3 * t2 + 1) * a + (t3 - 2 * t2 + t) * da
                 + (-2 * t3 + 3 * t2) * b + (t3 - t2) * db)
        ok = np.isfinite(s) & (s > a) & (s < b)
        return np.where(ok, s, 0.5 * (a + b))


def kernel_inverse(rho: DilationMeasure, lower: float = 0.0) -> TailInverse:
    """TailInverse for ``eta`` on ``[lower, support_upper)``."""
    return TailInverse(
        rho.g, lower, rho.support_upper, scale=rho.scale,
        origin_exponent=rho.origin_exponent, upper_exponent=rho.upper_exponent,
        tail=rho.tail,
    )


# --- truncated jump law --------------------------------------------------------------


class _RadialSampler:
    """Inverse-CDF sampler for a radial measure restricted to ``[eps, inf)``."""

    def __init__(self, radial, eps: float):
        self.atoms = [(r, w) for r, w in radial.atoms if r >= eps]
        self.atom_mass = float(sum(w for _, w in self.atoms))
        self.table = None
        dens: RadialDensity | None = radial.density
        if dens is not None:
            upper = dens.tail.r_max if isinstance(dens.tail, CompactSupport) else math.inf
            if eps < upper:
                self.table = TailInverse(
                    dens, eps, upper, scale=dens.scale,
                    upper_exponent=dens.edge_exponent, tail=dens.tail,
                )
        self.density_mass = self.table.total if self.table is not None else 0.0
        self.mass = self.atom_mass + self.density_mass

    def radii(self, w):
        """Map ``w`` uniform on ``[0, mass)`` to radii."""
        out = np.empty(w.shape)
        acc = 0.0
        done = np.zeros(w.shape, dtype=bool)
        for r, m in self.atoms:
            sel = ~done & (w < acc + m)
            out[sel] = r
            done |= sel
            acc += m
        rest = ~done
        if np.any(rest):
            # remaining mass above the radius equals mass - w
            out[rest] = self.table.inverse(np.maximum(self.mass - w[rest], 1e-300))
        return out


# --- simulation ----------------------------------------------------------------------


def _second_moment(rho: DilationMeasure, upper: float) -> float:
    if upper <= 0:
        return 0.0
    S = min(upper, rho.support_upper)
    ue = rho.upper_exponent if (S == rho.support_upper and math.isfinite(S)) else math.nan
    res = integrate_batch(
        lambda s, i: s * s * rho.g(s), 0.0, S, lower_exp=1.0 - rho.origin_exponent,
        upper_exp=ue, tol=_TINY, rtol=1e-10, cut=rho.scale, size=1, strict=False,
    )
    return float(res.values[0])


def _k_trunc(rho: DilationMeasure, r: np.ndarray, s_hi: float) -> np.ndarray:
    """``int_0^{s_hi} min(1, (s r)^2) g(s) ds`` for each r."""
    out = np.zeros(r.shape)
    if s_hi <= 0 or r.size == 0:
        return out
    S = min(s_hi, rho.support_upper)
    ue = rho.upper_exponent if (S == rho.support_upper and math.isfinite(S)) else math.nan
    res = integrate_batch(
        lambda s, i: np.minimum(1.0, (s * r[i]) ** 2) * rho.g(s), 0.0, S,
        points=(1.0 / r)[:, None], lower_exp=1.0 - rho.origin_exponent, upper_exp=ue,
        tol=_TINY, rtol=1e-8, cut=rho.scale, size=r.size, strict=False,
    )
    return res.values


def discarded_mass_bound(rho: DilationMeasure, M: LevyMeasure, eps: float, s_cut: float) -> float:
    """``int int min(1, |s x|^2) rho(ds) M(dx)`` over the dropped region
    ``{|x| < eps} u {s < s_cut}``."""
    total = 0.0
    for comp in M.components:
        rad = comp.radial
        for r, w in rad.atoms:
            hi = math.inf if r < eps else s_cut
            total += w * float(_k_trunc(rho, np.array([r]), hi)[0])
        dens = rad.density
        if dens is None:
            continue
        rmax = dens.tail.r_max if isinstance(dens.tail, CompactSupport) else math.inf
        pieces = [(0.0, min(eps, rmax), math.inf)]
        if s_cut > 0 and eps < rmax:
            pieces.append((eps, rmax, s_cut))
        for lo, hi, shi in pieces:
            if hi <= lo:
                continue
            ue = math.nan
            if math.isinf(hi) and isinstance(dens.tail, PowerLaw):
                ue = -dens.tail.theta_inf - 1.0
            le = 1.0 - dens.origin_exponent if lo == 0 else math.nan
            res = integrate_batch(
                lambda x, i, shi=shi: dens(x) * _k_trunc(rho, x, shi), lo, hi,
                lower_exp=le, upper_exp=ue, tol=_TINY, rtol=1e-6, cut=dens.scale,
                size=1, strict=False,
            )
            total += float(res.values[0])
    return total


def _time_window(rho: DilationMeasure, cfg: SimConfig):
    """(T_eff, s_cut, choice): dilations below s_cut are never reached."""
    e0 = eta0(rho)
    eps = float(cfg.jump_cutoff)
    if cfg.time_truncation == "auto":
        if math.isfinite(e0):
            return e0, 0.0, "eta(0+)"
        if not rho.second_moment_finite:
            raise ConfigError(
                "time_truncation='auto' needs a finite second moment of rho to bound the "
                "discarded-time contribution"
            )
        frac = _second_moment(rho, eps) / _second_moment(rho, rho.support_upper)
        if not frac <= MAX_DISCARDED_TIME_FRACTION:
            raise ConfigError(
                f"time_truncation='auto' drops dilations below eps={eps:g}, which carry "
                f"{frac:.3g} of int s^2 rho(ds) (bound {MAX_DISCARDED_TIME_FRACTION:g})"
            )
        return float(eta(rho, eps)), eps, f"eta(eps) = eta({eps:g})"
    T = float(cfg.time_truncation)
    if T >= e0:
        return e0, 0.0, "eta(0+)"
    return T, float(eta_star(rho, T)), "explicit"


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(block)])))


def simulate_y(rho: DilationMeasure, M: LevyMeasure, cfg: SimConfig) -> SampleBatch:
    """Samples of ``Y`` from the eps-truncated compound Poisson version of X."""
    _require_domain(rho, M)
    d = M.dimension
    n = int(cfg.sample_count)
    eps = float(cfg.jump_cutoff)
    T, s_cut, choice = _time_window(rho, cfg)

    samplers = [_RadialSampler(c.radial, eps) for c in M.components]
    rates = np.array([s.mass for s in samplers], dtype=float)
    lam = float(rates.sum())
    dirs = M.directions()
    inv = kernel_inverse(rho, 0.0 if s_cut == 0 else s_cut) if lam > 0 else None

    nblocks = -(-n // BLOCK)
    values = np.zeros((nblocks * BLOCK, d))
    jumps = 0
    for b in range(nblocks):
        rng = _block_rng(cfg.seed, b)
        counts = rng.poisson(lam * T, BLOCK) if lam > 0 else np.zeros(BLOCK, dtype=np.int64)
        tot = int(counts.sum())
        t = T * (1.0 - rng.random(tot))
        comp = rng.choice(len(rates), tot, p=rates / lam) if tot else np.zeros(0, dtype=int)
        w = rng.random(tot)
        jumps += int(counts[: n - b * BLOCK].sum())
        if tot == 0:
            continue
        r = np.empty(tot)
        for c, smp in enumerate(samplers):
            sel = comp == c
            if np.any(sel):
                r[sel] = smp.radii(w[sel] * smp.mass)
        # on [s_cut, S) the table's mass above s is eta(s) itself
        size = inv.inverse(t) * r
        owner = np.repeat(np.arange(BLOCK), counts)
        for j in range(d):
            np.add.at(values[b * BLOCK:(b + 1) * BLOCK, j], owner, size * dirs[comp, j])
    values = values[:n]

    diagnostics = {
        "mean_jump_count": jumps / n,
        "discarded_mass_bound": discarded_mass_bound(rho, M, eps, s_cut),
        "jump_rate": lam,
        "time_window": T,
        "time_window_choice": choice,
        "dilation_cutoff": s_cut,
        "block_size": BLOCK,
        "rng": RNG_NAME,
    }
    return SampleBatch(values, cfg, diagnostics)


# --- characteristic functions --------------------------------------------------------


def _sin_minus_x(x):
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 0.1
    x2 = x * x
    ser = -x * x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0 * (1.0 - x2 / 72.0)))
    return np.where(small, ser, np.sin(x) - x)


def _density_survival(dens, R: float) -> float:
    return float(density_integral(dens, None, R, math.inf)[0])


# the CF is only compared against Monte Carlo estimates, so its integrals may
# settle well above their rtol when the integrand is itself a quadrature
CF_ACCEPT_RTOL = 1e-7


def _radial_exponent(radial, k: float, imag: bool = True) -> complex:
    """``int (e^{ikr} - 1 - ikr 1_{r<=1}) m(dr)`` for one direction."""
    if k == 0.0:
        return 0j
    total = 0j
    for r, w in radial.atoms:
        comp = -1.0 if r <= 1.0 else 0.0
        total += w * complex(math.cos(k * r) - 1.0, math.sin(k * r) + comp * k * r)
    dens = radial.density
    if dens is None:
        return total
    if isinstance(dens.tail, CompactSupport):
        R = dens.tail.r_max
        rest = 0.0
    else:
        # cut at R where the remaining mass is negligible; what is left of
        # int_R^inf (e^{ikr} - 1) m dr is -M(R, inf) up to O(m(R)/|k|)
        R = 4.0 * dens.scale
        while R < 1e6 * dens.scale and _density_survival(dens, R) > 1e-13:
            R *= 2.0
        rest = _density_survival(dens, R)
    le_re = 1.0 - dens.origin_exponent
    le_im = 2.0 - dens.origin_exponent
    period = 2.0 * math.pi / abs(k)
    npts = int(min(4000, R / period))
    osc = [period * (j + 0.5) for j in range(1, npts + 1) if period * (j + 0.5) < R]
    base = [b for b, _, _ in dens.breakpoints if b < R]
    pts_re = np.array(sorted(set(base + osc)), dtype=float)[None, :] if (base or osc) else None
    pts_im = np.array(sorted(set(base + osc + ([1.0] if R > 1.0 else []))), dtype=float)[None, :]
    ue = dens.edge_exponent if isinstance(dens.tail, CompactSupport) else math.nan

    def f_re(r, i):
        return -2.0 * np.sin(0.5 * k * r) ** 2 * dens(r)

    def f_im(r, i):
        kr = k * r
        return np.where(r <= 1.0, _sin_minus_x(kr), np.sin(kr)) * dens(r)

    re = integrate_batch(f_re, 0.0, R, points=pts_re, lower_exp=le_re, upper_exp=ue,
                         tol=1e-14, rtol=1e-10, cut=dens.scale, size=1,
                         accept_rtol=CF_ACCEPT_RTOL).values[0]
    if not imag:
        return total + complex(re - rest, 0.0)
    im = integrate_batch(f_im, 0.0, R, points=pts_im, lower_exp=le_im, upper_exp=ue,
                         tol=1e-14, rtol=1e-10, cut=dens.scale, size=1,
                         accept_rtol=CF_ACCEPT_RTOL).values[0]
    return total + complex(re - rest, im)


def levy_exponent(Mstar: LevyMeasure, u, imag: bool = True) -> complex:
    ua = np.atleast_1d(np.asarray(u, dtype=float))
    if ua.shape != (Mstar.dimension,):
        raise DomainError(f"u must be a {Mstar.dimension}-vector")
    total = 0j
    for comp in Mstar.components:
        k = float(np.dot(ua, np.asarray(comp.direction, dtype=float)))
        total += _radial_exponent(comp.radial, k, imag)
    return total


def charfn_levy(Mstar: LevyMeasure, u) -> complex:
    """``exp(int (e^{i<u,x>} - 1 - i<u,x> 1_{|x|<=1}) Mstar(dx))``."""
    return complex(np.exp(levy_exponent(Mstar, u)))


def _as_grid(ugrid, d):
    g = np.asarray(ugrid, dtype=float)
    if g.ndim == 1 and d == 1:
        g = g[:, None]
    if g.ndim != 2 or g.shape[1] != d:
        raise DomainError(f"ugrid must hold {d}-vectors")
    return g


def empirical_charfn(values: np.ndarray, ugrid) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    g = _as_grid(ugrid, v.shape[1])
    return np.exp(1j * (v @ g.T)).mean(axis=0)


def ecf_residual(batch: SampleBatch, Mstar: LevyMeasure, ugrid) -> float:
    """``sup_u | |ECF(u)| - |phi(u)| |`` over the grid."""
    if len(batch) == 0:
        raise DomainError("empty batch")
    g = _as_grid(ugrid, batch.values.shape[1])
    emp = np.abs(empirical_charfn(batch.values, g))
    # |phi| = exp(Re psi) needs only the real part of the exponent
    th = np.array([math.exp(levy_exponent(Mstar, u, imag=False).real) for u in g])
    return float(np.max(np.abs(emp - th)))
