"""Levy measures in finite spectral form and their moment functionals.

A measure is a list of components, each a unit direction carrying a radial
measure on (0, inf): finitely many atoms plus an optional density.  Every
density declares its behaviour at the origin, ``m(r) ~ r**(-theta0 - 1)``,
and a tail class; class membership is decided from these declarations alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence, Union

import numpy as np

from .errors import DimensionMismatch, SpecError
from .numkit import default_tol, integrate_batch

# --- tail classes --------------------------------------------------------------


@dataclass(frozen=True)
class PowerLaw:
    """``m(r) ~ r**(-theta_inf - 1)`` as r -> inf."""

    theta_inf: float

    def __post_init__(self):
        if not self.theta_inf > 0:
            raise ValueError("PowerLaw theta_inf must be > 0")

    def to_dict(self):
        return {"kind": "PowerLaw", "params": {"theta_inf": self.theta_inf}}


@dataclass(frozen=True)
class ExpPower:
    """``m(r) ~ r**power * exp(-c r**p)`` as r -> inf."""

    p: float
    power: float = 0.0

    def __post_init__(self):
        if not self.p > 0:
            raise ValueError("ExpPower p must be > 0")

    def to_dict(self):
        return {"kind": "ExpPower", "params": {"p": self.p, "power": self.power}}


@dataclass(frozen=True)
class CompactSupport:
    """No mass beyond ``r_max``."""

    r_max: float

    def __post_init__(self):
        if not self.r_max > 0:
            raise ValueError("CompactSupport r_max must be > 0")

    def to_dict(self):
        return {"kind": "CompactSupport", "params": {"r_max": self.r_max}}


TailClass = Union[PowerLaw, ExpPower, CompactSupport]


def _heaviness(t: TailClass):
    if isinstance(t, PowerLaw):
        return (3, -t.theta_inf, 0.0)
    if isinstance(t, ExpPower):
        return (2, -t.p, t.power)
    return (1, t.r_max, 0.0)


def heavier_tail(*tails: TailClass) -> TailClass:
    """The heaviest of the given tail classes (the conservative combination)."""
    return max(tails, key=_heaviness)


def tail_from_dict(d: Mapping) -> TailClass:
    kinds = {
        "powerlaw": (PowerLaw, {"theta_inf"}),
        "exppower": (ExpPower, {"p", "power"}),
        "compactsupport": (CompactSupport, {"r_max"}),
    }
    problems = []
    extra = set(d) - {"kind", "params"}
    if extra:
        problems.append(f"tail: unknown fields {sorted(extra)}")
    kind = str(d.get("kind", "")).replace("-", "").replace("_", "").lower()
    if kind not in kinds:
        raise SpecError(problems + [f"tail.kind: unknown tail class {d.get('kind')!r}"])
    cls, allowed = kinds[kind]
    params = dict(d.get("params", {}))
    bad = set(params) - allowed
    if bad:
        problems.append(f"tail.params: unknown fields {sorted(bad)}")
    if problems:
        raise SpecError(problems)
    try:
        return cls(**{k: float(v) for k, v in params.items()})
    except (TypeError, ValueError) as exc:
        raise SpecError([f"tail: {exc}"]) from None


# --- moment classes ------------------------------------------------------------


@dataclass(frozen=True)
class MomentClass:
    """One of M0, MLog, MAlpha(alpha) with alpha in (0, 2), or M2."""

    kind: str
    alpha: float | None = None

    def __post_init__(self):
        if self.kind not in ("M0", "MLog", "MAlpha", "M2"):
            raise ValueError(f"unknown moment class {self.kind!r}")
        if self.kind == "MAlpha" and not (self.alpha is not None and 0 < self.alpha < 2):
            raise ValueError("MAlpha needs alpha in (0, 2)")

    @classmethod
    def m0(cls):
        return cls("M0")

    @classmethod
    def mlog(cls):
        return cls("MLog")

    @classmethod
    def malpha(cls, alpha):
        return cls("MAlpha", float(alpha))

    @classmethod
    def m2(cls):
        return cls("M2")

    def __str__(self):
        if self.kind == "MAlpha":
            return f"M^{self.alpha:g}"
        return {"M0": "M0", "MLog": "M_log", "M2": "M^2"}[self.kind]


# --- radial measures -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RadialDensity:
    """Density of a radial measure with its declared metadata.

    ``pdf`` maps an array of radii to density values and must return 0
    outside the support.  ``breakpoints`` holds ``(location, left_exp,
    right_exp)`` triples marking kinks or algebraic singularities (NaN
    exponents mean "just split here").  ``edge_exponent`` describes
    ``(r_max - r)**e`` at the edge of a compact support.
    """

    pdf: Callable[[np.ndarray], np.ndarray]
    origin_exponent: float
    tail: TailClass
    breakpoints: tuple = ()
    edge_exponent: float = 0.0
    name: str = "custom"
    params: Mapping = field(default_factory=dict)
    scale: float = 1.0

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = np.zeros(r.shape)
        pos = r > 0
        if isinstance(self.tail, CompactSupport):
            pos &= r < self.tail.r_max
        if np.any(pos):
            out[pos] = self.pdf(r[pos])
        return float(out) if out.ndim == 0 else out

    def spec(self) -> dict | None:
        if self.name == "custom":
            return None
        return {
            "kind": self.name,
            "params": dict(self.params),
            "origin_exponent": self.origin_exponent,
            "tail": self.tail.to_dict(),
        }


@dataclass(frozen=True, eq=False)
class RadialMeasure:
    atoms: tuple = ()
    density: RadialDensity | None = None

    def __post_init__(self):
        locs = [r for r, _ in self.atoms]
        if any(not (r > 0 and math.isfinite(r)) for r in locs):
            raise ValueError("atom locations must be positive and finite")
        if any(not (w > 0 and math.isfinite(w)) for _, w in self.atoms):
            raise ValueError("atom masses must be positive and finite")
        if len(set(locs)) != len(locs):
            raise ValueError("atom locations must be distinct")
        if self.density is not None and not self.density.origin_exponent < 2:
            raise ValueError("density origin exponent must be < 2")

    @property
    def is_zero(self) -> bool:
        return not self.atoms and self.density is None

    @property
    def origin_exponent(self) -> float:
        """Declared origin exponent; ``-inf`` when there is no density."""
        return self.density.origin_exponent if self.density is not None else -math.inf

    @property
    def tail(self) -> TailClass | None:
        cands = []
        if self.atoms:
            cands.append(CompactSupport(max(r for r, _ in self.atoms)))
        if self.density is not None:
            cands.append(self.density.tail)
        return heavier_tail(*cands) if cands else None

    def survival(self, v):
        """Mass of ``(v, inf)`` for each v > 0 (vectorized)."""
        v = np.atleast_1d(np.asarray(v, dtype=float))
        out = np.zeros(v.shape)
        for r, w in self.atoms:
            out += np.where(r > v, w, 0.0)
        if self.density is not None:
            out += density_integral(self.density, None, v, np.inf)
        return out


@dataclass(frozen=True, eq=False)
class Component:
    direction: tuple
    radial: RadialMeasure


@dataclass(frozen=True, eq=False)
class LevyMeasure:
    dimension: int
    components: tuple = ()
    label: str = ""

    def __post_init__(self):
        if not (isinstance(self.dimension, int) and self.dimension >= 1):
            raise ValueError("dimension must be a positive integer")
        dirs = []
        for c in self.components:
            d = np.asarray(c.direction, dtype=float)
            if d.shape != (self.dimension,):
                raise DimensionMismatch(
                    f"direction {c.direction} does not have dimension {self.dimension}"
                )
            if abs(np.linalg.norm(d) - 1.0) > 1e-12:
                raise ValueError(f"direction {c.direction} is not a unit vector")
            for e in dirs:
                if np.max(np.abs(e - d)) <= 1e-12:
                    raise ValueError(f"direction {c.direction} appears twice")
            dirs.append(d)

    @property
    def is_zero(self) -> bool:
        return all(c.radial.is_zero for c in self.components)

    def directions(self) -> np.ndarray:
        return np.array([c.direction for c in self.components], dtype=float).reshape(
            -1, self.dimension
        )

    def spec(self) -> dict | None:
        """JSON description, or None when a component density is not named."""
        comps = []
        for c in self.components:
            item = {
                "direction": list(c.direction),
                "atoms": [{"r": r, "w": w} for r, w in c.radial.atoms],
            }
            if c.radial.density is not None:
                ds = c.radial.density.spec()
                if ds is None:
                    return None
                item["density"] = ds
            comps.append(item)
        return {"dimension": self.dimension, "components": comps}


# --- density quadrature --------------------------------------------------------


def density_integral(dens, weight, lower, upper, *, weight_exp0=0.0, weight_exp_inf=0.0,
                     points=(), tol=None, rtol=1e-10):
    """Vectorized ``int_lower^upper weight(r) m(r) dr``.

    ``weight(r, idx)`` may be None (weight 1).  ``weight_exp0`` and
    ``weight_exp_inf`` give the power behaviour of the weight at 0 and at
    infinity; together with the declared metadata they become the quadrature
    hints.
    """
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    n = max(lower.size, upper.size)
    lower = np.broadcast_to(lower, (n,)).copy()
    upper = np.broadcast_to(upper, (n,)).copy()
    tol = default_tol() if tol is None else tol

    edge_exp = np.full(n, np.nan)
    if isinstance(dens.tail, CompactSupport):
        rmax = dens.tail.r_max
        clip = upper >= rmax
        upper = np.where(clip, rmax, upper)
        edge_exp = np.where(clip, dens.edge_exponent, np.nan)
        lower = np.minimum(lower, upper)
    elif isinstance(dens.tail, PowerLaw):
        edge_exp = np.where(np.isinf(upper), -dens.tail.theta_inf - 1.0 + weight_exp_inf, np.nan)
    lower_exp = np.where(lower == 0.0, -dens.origin_exponent - 1.0 + weight_exp0, np.nan)

    bp = list(dens.breakpoints) + [(float(x), np.nan, np.nan) for x in points]
    if bp:
        pts = np.broadcast_to(np.array([b[0] for b in bp], dtype=float), (n, len(bp)))
        pl = np.broadcast_to(np.array([b[1] for b in bp], dtype=float), (n, len(bp)))
        pr = np.broadcast_to(np.array([b[2] for b in bp], dtype=float), (n, len(bp)))
    else:
        pts = pl = pr = None

    if weight is None:
        def f(s, idx):
            return dens(s)
    else:
        def f(s, idx):
            return weight(s, idx) * dens(s)

    res = integrate_batch(
        f, lower, upper, points=pts, point_left_exp=pl, point_right_exp=pr,
        lower_exp=lower_exp, upper_exp=edge_exp, tol=tol, rtol=rtol, cut=dens.scale,
    )
    return res.values


# --- named densities -----------------------------------------------------------


def exp_density(c: float = 1.0, scale: float = 1.0) -> RadialDensity:
    """``c * exp(-r / scale)``."""
    c, scale = float(c), float(scale)
    if not (c > 0 and scale > 0):
        raise ValueError("exp density needs c > 0 and scale > 0")
    return RadialDensity(
        lambda r: c * np.exp(-r / scale), -1.0, ExpPower(1.0, 0.0),
        name="exp", params={"c": c, "scale": scale}, scale=scale,
    )


def power_law_spliced(theta0: float, theta_inf: float, c: float = 1.0,
                      r0: float = 1.0) -> RadialDensity:
    """``c (r/r0)**(-1-theta0)`` below r0 and ``c (r/r0)**(-1-theta_inf)`` above."""
    theta0, theta_inf, c, r0 = map(float, (theta0, theta_inf, c, r0))
    if not (c > 0 and r0 > 0 and theta_inf > 0):
        raise ValueError("power-law-spliced needs c > 0, r0 > 0, theta_inf > 0")

    def pdf(r):
        x = r / r0
        return c * np.where(x < 1.0, x ** (-1.0 - theta0), x ** (-1.0 - theta_inf))

    return RadialDensity(
        pdf, theta0, PowerLaw(theta_inf), breakpoints=((r0, np.nan, np.nan),),
        name="power-law-spliced",
        params={"theta0": theta0, "theta_inf": theta_inf, "c": c, "r0": r0}, scale=r0,
    )


def tempered_power(theta0: float, p: float, c: float = 1.0,
                   scale: float = 1.0) -> RadialDensity:
    """``c r**(-1-theta0) exp(-(r/scale)**p)``."""
    theta0, p, c, scale = map(float, (theta0, p, c, scale))
    if not (c > 0 and p > 0 and scale > 0):
        raise ValueError("tempered-power needs c > 0, p > 0, scale > 0")
    return RadialDensity(
        lambda r: c * r ** (-1.0 - theta0) * np.exp(-((r / scale) ** p)),
        theta0, ExpPower(p, -1.0 - theta0), name="tempered-power",
        params={"theta0": theta0, "p": p, "c": c, "scale": scale}, scale=scale,
    )


def compact_poly(c: float = 1.0, radius: float = 1.0, k: float = 2.0) -> RadialDensity:
    """``c (1 - r/radius)**k`` on ``(0, radius)``."""
    c, radius, k = map(float, (c, radius, k))
    if not (c > 0 and radius > 0 and k > -1):
        raise ValueError("compact-poly needs c > 0, radius > 0, k > -1")
    return RadialDensity(
        lambda r: c * np.clip(1.0 - r / radius, 0.0, None) ** k,
        -1.0, CompactSupport(radius), edge_exponent=k, name="compact-poly",
        params={"c": c, "radius": radius, "k": k}, scale=radius,
    )


NAMED_DENSITIES = {
    "exp": (exp_density, {"c", "scale"}),
    "power-law-spliced": (power_law_spliced, {"theta0", "theta_inf", "c", "r0"}),
    "tempered-power": (tempered_power, {"theta0", "p", "c", "scale"}),
    "compact-poly": (compact_poly, {"c", "radius", "k"}),
}


# --- construction --------------------------------------------------------------


def atom_measure(r: float = 1.0, w: float = 1.0, direction=(1.0,)) -> LevyMeasure:
    """Point mass ``w`` at radius ``r`` along ``direction``."""
    direction = tuple(float(x) for x in direction)
    return LevyMeasure(
        len(direction), (Component(direction, RadialMeasure(((float(r), float(w)),))),)
    )


def density_measure(dens: RadialDensity, direction=(1.0,)) -> LevyMeasure:
    direction = tuple(float(x) for x in direction)
    return LevyMeasure(len(direction), (Component(direction, RadialMeasure((), dens)),))


def zero_measure(dimension: int = 1) -> LevyMeasure:
    return LevyMeasure(dimension, ())


def _origin_spot_check(dens: RadialDensity):
    r = np.array([1e-6, 1e-5])
    vals = np.asarray(dens(r)) * r ** (dens.origin_exponent + 1.0)
    return bool(np.all((vals >= 1e-6) & (vals <= 1e6)))


def _parse_density(d, where, problems):
    extra = set(d) - {"kind", "params", "origin_exponent", "tail"}
    if extra:
        problems.append(f"{where}: unknown fields {sorted(extra)}")
    kind = d.get("kind")
    if kind not in NAMED_DENSITIES:
        problems.append(f"{where}.kind: unknown density {kind!r}; known: {sorted(NAMED_DENSITIES)}")
        return None
    ctor, allowed = NAMED_DENSITIES[kind]
    params = d.get("params", {})
    if not isinstance(params, Mapping):
        problems.append(f"{where}.params: must be an object")
        return None
    bad = set(params) - allowed
    if bad:
        problems.append(f"{where}.params: unknown fields {sorted(bad)}")
        return None
    try:
        dens = ctor(**params)
    except (TypeError, ValueError) as exc:
        problems.append(f"{where}.params: {exc}")
        return None
    theta0 = d.get("origin_exponent", dens.origin_exponent)
    try:
        theta0 = float(theta0)
    except (TypeError, ValueError):
        problems.append(f"{where}.origin_exponent: not a number")
        return None
    if not theta0 < 2:
        problems.append(
            f"{where}.origin_exponent: {theta0:g} >= 2 is not integrable at the origin"
        )
        return None
    tail = dens.tail
    if "tail" in d:
        try:
            tail = tail_from_dict(d["tail"])
        except SpecError as exc:
            problems.extend(f"{where}.{p}" for p in exc.problems)
            return None
    dens = RadialDensity(
        dens.pdf, theta0, tail, dens.breakpoints, dens.edge_exponent,
        dens.name, dens.params, dens.scale,
    )
    if not _origin_spot_check(dens):
        problems.append(
            f"{where}: declared origin_exponent {theta0:g} disagrees with the density near 0"
        )
        return None
    return dens


def make_measure(spec: Mapping) -> LevyMeasure:
    """Validate a JSON-style measure description and build the measure.

    Raises SpecError listing every problem found.
    """
    problems: list[str] = []
    if not isinstance(spec, Mapping):
        raise SpecError(["measure spec must be an object"])
    extra = set(spec) - {"dimension", "components", "label"}
    if extra:
        problems.append(f"unknown fields {sorted(extra)}")
    dim = spec.get("dimension")
    if not (isinstance(dim, int) and not isinstance(dim, bool) and dim >= 1):
        raise SpecError(problems + ["dimension: must be a positive integer"])
    comps_in = spec.get("components", [])
    if not isinstance(comps_in, Sequence):
        raise SpecError(problems + ["components: must be a list"])
    comps = []
    seen = []
    for i, c in enumerate(comps_in):
        where = f"components[{i}]"
        if not isinstance(c, Mapping):
            problems.append(f"{where}: must be an object")
            continue
        bad = set(c) - {"direction", "atoms", "density"}
        if bad:
            problems.append(f"{where}: unknown fields {sorted(bad)}")
        try:
            direction = np.asarray(c.get("direction"), dtype=float)
        except (TypeError, ValueError):
            problems.append(f"{where}.direction: not a list of numbers")
            continue
        if direction.shape != (dim,):
            problems.append(f"{where}.direction: expected {dim} entries")
            continue
        if abs(np.linalg.norm(direction) - 1.0) > 1e-12:
            problems.append(f"{where}.direction: not a unit vector (norm {np.linalg.norm(direction)!r})")
            continue
        if any(np.max(np.abs(direction - s)) <= 1e-12 for s in seen):
            problems.append(f"{where}.direction: duplicates an earlier component")
            continue
        seen.append(direction)
        atoms = []
        for j, a in enumerate(c.get("atoms", [])):
            aw = f"{where}.atoms[{j}]"
            if not isinstance(a, Mapping) or set(a) - {"r", "w"}:
                problems.append(f"{aw}: expected an object with fields r, w")
                continue
            try:
                r, w = float(a["r"]), float(a["w"])
            except (KeyError, TypeError, ValueError):
                problems.append(f"{aw}: r and w must be numbers")
                continue
            if not (r > 0 and math.isfinite(r)):
                problems.append(f"{aw}.r: must be positive")
            elif not (w > 0 and math.isfinite(w)):
                problems.append(f"{aw}.w: must be positive")
            elif any(r == b for b, _ in atoms):
                problems.append(f"{aw}.r: duplicate atom location {r:g}")
            else:
                atoms.append((r, w))
        dens = None
        if c.get("density") is not None:
            if not isinstance(c["density"], Mapping):
                problems.append(f"{where}.density: must be an object")
            else:
                dens = _parse_density(c["density"], f"{where}.density", problems)
        comps.append(Component(tuple(direction.tolist()), RadialMeasure(tuple(atoms), dens)))
    if problems:
        raise SpecError(problems)
    return LevyMeasure(dim, tuple(comps), str(spec.get("label", "")))


# --- moment functionals ----------------------------------------------------------


def moment_functional(M: LevyMeasure, alpha: float) -> float:
    """``int (|x|^2 min |x|^alpha) M(dx)``; ``math.inf`` when the tail class
    makes it diverge."""
    alpha = float(alpha)
    e_lo, e_hi = max(2.0, alpha), min(2.0, alpha)
    total = 0.0
    for c in M.components:
        rm = c.radial
        total += math.fsum(w * min(r * r, r**alpha) for r, w in rm.atoms)
        dens = rm.density
        if dens is None:
            continue
        if isinstance(dens.tail, PowerLaw) and dens.tail.theta_inf <= e_hi:
            return math.inf

        def weight(r, idx):
            return np.where(r <= 1.0, r**e_lo, r**e_hi)

        total += float(density_integral(
            dens, weight, 0.0, np.inf, weight_exp0=e_lo, weight_exp_inf=e_hi, points=(1.0,)
        )[0])
    return total


def log_moment(M: LevyMeasure) -> float:
    """``int_{|x|>1} log|x| M(dx)``."""
    total = 0.0
    for c in M.components:
        rm = c.radial
        total += math.fsum(w * math.log(r) for r, w in rm.atoms if r > 1)
        dens = rm.density
        if dens is not None:
            # log r grows slower than any power; half the tail margin is a safe hint
            slack = 0.5 * dens.tail.theta_inf if isinstance(dens.tail, PowerLaw) else 0.0
            total += float(density_integral(
                dens, lambda r, idx: np.log(r), 1.0, np.inf, weight_exp_inf=slack,
            )[0])
    return total


def class_membership(M: LevyMeasure, c: MomentClass) -> bool:
    """Symbolic membership test from declared metadata only."""
    for comp in M.components:
        dens = comp.radial.density
        if dens is None:
            continue
        if not dens.origin_exponent < 2:
            return False
        if c.kind in ("M0", "MLog"):
            continue
        bound = 2.0 if c.kind == "M2" else c.alpha
        if isinstance(dens.tail, PowerLaw) and dens.tail.theta_inf <= bound:
            return False
    return True


# --- algebra on measures ---------------------------------------------------------


def _scale_density(d: RadialDensity, c: float) -> RadialDensity:
    tail = d.tail
    if isinstance(tail, CompactSupport):
        tail = CompactSupport(tail.r_max * c)
    pdf = d.pdf
    return RadialDensity(
        lambda r: pdf(r / c) / c, d.origin_exponent, tail,
        tuple((x * c, a, b) for x, a, b in d.breakpoints), d.edge_exponent,
        "custom", {}, d.scale * c,
    )


def scale_measure(M: LevyMeasure, c: float) -> LevyMeasure:
    """Image of M under ``x -> c x``."""
    c = float(c)
    if not c > 0:
        raise ValueError("scale factor must be positive")
    comps = []
    for comp in M.components:
        rm = comp.radial
        dens = None if rm.density is None else _scale_density(rm.density, c)
        comps.append(Component(comp.direction, RadialMeasure(
            tuple((r * c, w) for r, w in rm.atoms), dens)))
    return LevyMeasure(M.dimension, tuple(comps), M.label)


def sum_density(*ds: RadialDensity) -> RadialDensity:
    if len(ds) == 1:
        return ds[0]
    tails = [d.tail for d in ds]

    def pdf(r):
        out = np.zeros(np.shape(r))
        for d in ds:
            out = out + np.asarray(d(r))
        return out

    bps = []
    for d in ds:
        bps.extend(d.breakpoints)
        if isinstance(d.tail, CompactSupport):
            bps.append((d.tail.r_max, np.nan, np.nan))
    return RadialDensity(
        pdf, max(d.origin_exponent for d in ds), heavier_tail(*tails),
        tuple(bps), min(d.edge_exponent for d in ds), "custom", {},
        min(d.scale for d in ds),
    )


def add_measures(M1: LevyMeasure, M2: LevyMeasure) -> LevyMeasure:
    """Sum of two measures; components along a shared direction are merged."""
    if M1.dimension != M2.dimension:
        raise DimensionMismatch(f"dimensions {M1.dimension} and {M2.dimension} differ")
    merged: list[list] = []
    for comp in list(M1.components) + list(M2.components):
        d = np.asarray(comp.direction)
        for item in merged:
            if np.max(np.abs(np.asarray(item[0]) - d)) <= 1e-12:
                item[1].append(comp.radial)
                break
        else:
            merged.append([comp.direction, [comp.radial]])
    comps = []
    for direction, radials in merged:
        masses: dict[float, float] = {}
        for rm in radials:
            for r, w in rm.atoms:
                masses[r] = masses.get(r, 0.0) + w
        dens = [rm.density for rm in radials if rm.density is not None]
        comps.append(Component(direction, RadialMeasure(
            tuple(sorted(masses.items())), sum_density(*dens) if dens else None)))
    return LevyMeasure(M1.dimension, tuple(comps))
