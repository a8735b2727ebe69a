"""Spectrally negative (possibly killed) Lévy processes and their Laplace exponent.

A driving process is described by a :class:`LevyTriplet` ``(gamma, sigma2, Pi, q)``
whose jump measure ``Pi`` lives on ``(-inf, 0)``.  Its Laplace exponent is

    Psi(lam) = gamma*lam + sigma2*lam**2/2
               + int (exp(lam*u) - 1 - lam*u*1{|u|<=1}) Pi(du) - q,

evaluated exactly for atomic measures and by adaptive quadrature for densities.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Literal, Union

import numpy as np
from scipy import integrate, optimize

DEFAULT_QUAD_TOL = 1e-10
REGIMES = ("killed", "drifts_to_minus_infinity", "oscillates", "drifts_to_plus_infinity")


class ModelError(ValueError):
    """An invalid triplet or model file.  ``errors`` holds one message per failed check."""

    def __init__(self, message: str, errors: list[str] | None = None):
        super().__init__(message)
        self.errors = errors or [message]


class AssumptionError(ValueError):
    """Raised when Psi(1) > 0 does not hold (or cannot be decided)."""


class QuadratureError(ArithmeticError):
    def __init__(self, message: str, error_estimate: float):
        super().__init__(f"{message} (achieved error estimate {error_estimate:.3g})")
        self.error_estimate = error_estimate


def _expm1_minus_x(x):
    """exp(x) - 1 - x without cancellation for small |x|."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-3
    xs = np.where(small, x, 0.0)
    series = xs * xs * (0.5 + xs * (1.0 / 6.0 + xs * (1.0 / 24.0 + xs * (1.0 / 120.0))))
    return np.where(small, series, np.expm1(x) - x)


def _guarded(g):
    # deep in a power-law singularity the density alone overflows while the
    # weighted integrand is far below double precision; count it as zero
    def wrapped(v):
        try:
            val = g(v)
        except OverflowError:
            return 0.0
        return 0.0 if val != val else val

    return wrapped


def _quad(fn, a, b, tol, what, points=None):
    kwargs = dict(epsabs=tol, epsrel=1e-12, limit=500, full_output=1)
    if points is not None and len(points) and np.isfinite(a) and np.isfinite(b):
        kwargs["points"] = points
    out = integrate.quad(_guarded(fn), a, b, **kwargs)
    val, err = out[0], out[1]
    if len(out) > 3 and err > 10.0 * max(tol, 1e-12 * abs(val)):
        raise QuadratureError(f"{what}: quadrature did not converge", err)
    if not np.isfinite(val):
        raise QuadratureError(f"{what}: integral is not finite", float("inf"))
    return val


# ---------------------------------------------------------------------------
# jump measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AtomMeasure:
    """Finite sum of point masses ``mass_k * delta(location_k)``."""

    locations: tuple[float, ...] = ()
    masses: tuple[float, ...] = ()

    activity: Literal["finite"] = field(default="finite", init=False)

    def __post_init__(self):
        object.__setattr__(self, "locations", tuple(float(u) for u in self.locations))
        object.__setattr__(self, "masses", tuple(float(m) for m in self.masses))
        if len(self.locations) != len(self.masses):
            raise ModelError("atom locations and masses differ in length")

    @classmethod
    def from_pairs(cls, pairs) -> "AtomMeasure":
        pairs = list(pairs)
        return cls(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))

    def pairs(self) -> list[tuple[float, float]]:
        return list(zip(self.locations, self.masses))

    def with_atom(self, location: float, mass: float) -> "AtomMeasure":
        return AtomMeasure(self.locations + (location,), self.masses + (mass,))

    @property
    def total_mass(self) -> float:
        return float(sum(self.masses))

    def integrate(self, fn: Callable, lo: float = -math.inf, hi: float = 0.0, tol: float = DEFAULT_QUAD_TOL) -> float:
        """Sum of ``mass * fn(u)`` over atoms with ``lo <= u < hi`` (exact)."""
        total = 0.0
        for u, m in zip(self.locations, self.masses):
            if lo <= u < hi:
                total += m * float(fn(u))
        return total

    def integrability(self, tol: float = DEFAULT_QUAD_TOL) -> "Integrability":
        value = sum(m * min(1.0, u * u) for u, m in zip(self.locations, self.masses))
        return Integrability(True, float(value), "finite atom sum")


@dataclass(frozen=True)
class Integrability:
    finite: bool
    value: float
    detail: str = ""


def _tail_behaviour(g: Callable[[float], float], v0: float, tol: float, what: str) -> tuple[bool, float]:
    """Decide convergence of int_{v0}^inf g(v) dv for g with exponential-type tails.

    Power-law densities become exponentials after the log substitution, so the
    decay rate estimated from two equal windows separates the convergent and
    divergent cases.  Returns (finite, value).
    """
    w = 20.0
    d1 = _quad(g, v0 + w, v0 + 2 * w, tol, what)
    d2 = _quad(g, v0 + 2 * w, v0 + 3 * w, tol, what)
    if d2 <= 0.0 or d1 <= 0.0:
        finite = True
    else:
        rate = math.log(d1 / d2) / w
        finite = rate > 1e-3
    if not finite:
        return False, math.inf
    head = _quad(g, v0, v0 + 3 * w, tol, what)
    if d2 <= 0.0 or d1 <= 0.0:
        return True, head
    ratio = d2 / d1
    return True, head + d2 * ratio / (1.0 - ratio)


@dataclass(frozen=True)
class DensityMeasure:
    """Jump measure ``Pi(du) = density(u) du`` supported on ``[lower, upper]``, ``upper <= 0``.

    ``density`` must accept a float and return a float.  ``activity`` declares
    whether the total mass is finite; ``breakpoints`` are kinks handed to the
    quadrature.
    """

    density: Callable[[float], float]
    lower: float = -math.inf
    upper: float = 0.0
    activity: Literal["finite", "infinite"] = "infinite"
    breakpoints: tuple[float, ...] = ()
    family: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def _pieces(self, lo: float, hi: float):
        a, b = max(lo, self.lower), min(hi, self.upper)
        if not a < b:
            return []
        cuts = [a] + ([-1.0] if a < -1.0 < b else []) + [b]
        return list(zip(cuts[:-1], cuts[1:]))

    def integrate(self, fn: Callable, lo: float = -math.inf, hi: float = 0.0, tol: float = DEFAULT_QUAD_TOL) -> float:
        """``int_{lo}^{hi} fn(u) Pi(du)`` by adaptive quadrature.

        The piece touching zero is integrated in ``v = -log(-u)`` and an infinite
        left tail in ``v = log(-u)``, which turns power-law singularities into
        exponentials that the adaptive rule resolves reliably.
        """
        f = self.density
        total = 0.0
        for p, r in self._pieces(lo, hi):
            if r == 0.0:
                v0 = -math.log(-p)
                total += _quad(lambda v: fn(-math.exp(-v)) * f(-math.exp(-v)) * math.exp(-v),
                               v0, math.inf, tol, f"density integral near 0 ({self.family})")
            elif p == -math.inf:
                v0 = math.log(-r)
                total += _quad(lambda v: fn(-math.exp(v)) * f(-math.exp(v)) * math.exp(v),
                               v0, math.inf, tol, f"density tail integral ({self.family})")
            else:
                pts = [x for x in self.breakpoints if p < x < r]
                total += _quad(lambda u: fn(u) * f(u), p, r, tol, f"density integral ({self.family})", pts)
        return total

    @property
    def total_mass(self) -> float:
        if self.activity == "infinite":
            return math.inf
        return self.integrate(lambda u: 1.0)

    def integrability(self, tol: float = DEFAULT_QUAD_TOL) -> Integrability:
        """Witness for ``int min(1, u^2) Pi(du) < inf``."""
        f = self.density
        value = 0.0
        for p, r in self._pieces(-math.inf, 0.0):
            if r == 0.0:
                v0 = -math.log(-p)
                ok, part = _tail_behaviour(lambda v: math.exp(-3.0 * v) * f(-math.exp(-v)), v0, tol,
                                           "integrability near 0")
                if not ok:
                    return Integrability(False, math.inf, "int u^2 Pi(du) diverges at 0")
            elif p == -math.inf:
                v0 = math.log(-r)
                ok, part = _tail_behaviour(lambda v: math.exp(v) * f(-math.exp(v)), v0, tol,
                                           "integrability at -inf")
                if not ok:
                    return Integrability(False, math.inf, "Pi((-inf, -1)) is infinite")
            else:
                pts = [x for x in self.breakpoints if p < x < r]
                part = _quad(lambda u: min(1.0, u * u) * f(u), p, r, tol, "integrability", pts)
            value += part
        return Integrability(True, value, "quadrature")


JumpMeasure = Union[AtomMeasure, DensityMeasure]


def exp_tilted_stable(c: float, alpha: float, beta: float = 0.0) -> DensityMeasure:
    """Tempered stable density ``c * exp(beta*u) * |u|**(-1-alpha)`` on ``u < 0``."""
    c, alpha, beta = float(c), float(alpha), float(beta)

    def dens(u: float) -> float:
        return c * math.exp(beta * u) * (-u) ** (-1.0 - alpha) if u < 0 else 0.0

    return DensityMeasure(dens, -math.inf, 0.0, "infinite" if alpha >= 0 else "finite",
                          family="exp_tilted_stable", params={"c": c, "alpha": alpha, "beta": beta})


def custom_table(u, density) -> DensityMeasure:
    """Piecewise-linear density through the points ``(u_i, density_i)``, zero outside."""
    u = np.asarray(u, dtype=float)
    d = np.asarray(density, dtype=float)

    def dens(x: float) -> float:
        return float(np.interp(x, u, d, left=0.0, right=0.0))

    return DensityMeasure(dens, float(u[0]), float(u[-1]), "finite", tuple(float(x) for x in u),
                          family="custom_table", params={"u": u.tolist(), "density": d.tolist()})


# ---------------------------------------------------------------------------
# triplets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LevyTriplet:
    gamma: float
    sigma2: float = 0.0
    jump_measure: JumpMeasure = field(default_factory=AtomMeasure)
    kill_rate: float = 0.0

    @classmethod
    def from_dict(cls, doc: dict) -> "LevyTriplet":
        return triplet_from_dict(doc)

    def to_dict(self) -> dict:
        jm = self.jump_measure
        if isinstance(jm, AtomMeasure):
            jumps = {"atoms": [[u, m] for u, m in jm.pairs()]}
        else:
            jumps = {"density": {"family": jm.family, "params": dict(jm.params)}}
        return {"gamma": self.gamma, "sigma2": self.sigma2, "q": self.kill_rate, "jumps": jumps}


@dataclass
class ValidationResult:
    errors: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def __bool__(self) -> bool:
        return self.ok

    def raise_if_invalid(self):
        if self.errors:
            raise ModelError("invalid triplet: " + "; ".join(self.errors), list(self.errors))


def validate_triplet(t: LevyTriplet, tol: float = DEFAULT_QUAD_TOL) -> ValidationResult:
    """Check every triplet invariant; failures are reported, not raised."""
    res = ValidationResult()
    for name, val in (("gamma", t.gamma), ("sigma2", t.sigma2), ("q", t.kill_rate)):
        if not np.isfinite(val):
            res.errors.append(f"{name}: must be finite, got {val!r}")
    if t.sigma2 < 0:
        res.errors.append(f"sigma2: must be >= 0, got {t.sigma2!r}")
    if t.kill_rate < 0:
        res.errors.append(f"q: must be >= 0, got {t.kill_rate!r}")
    jm = t.jump_measure
    if isinstance(jm, AtomMeasure):
        for k, (u, m) in enumerate(jm.pairs()):
            if not u < 0 or not np.isfinite(u):
                res.errors.append(f"jumps.atoms[{k}][0]: location {u!r} is not < 0 (spectral negativity, A1)")
            if not m > 0 or not np.isfinite(m):
                res.errors.append(f"jumps.atoms[{k}][1]: mass {m!r} is not > 0")
    elif isinstance(jm, DensityMeasure):
        if jm.upper > 0:
            res.errors.append(f"jumps.density: support reaches {jm.upper!r} > 0 (spectral negativity, A1)")
        if not jm.lower < jm.upper:
            res.errors.append("jumps.density: empty support")
        if not res.errors:
            probe = _density_probe(jm)
            vals = np.array([jm.density(u) for u in probe])
            if np.any(~np.isfinite(vals)) or np.any(vals < 0):
                res.errors.append("jumps.density: density is negative or not finite somewhere on its support")
        if not res.errors:
            try:
                w = jm.integrability(tol)
            except QuadratureError as exc:
                res.errors.append(f"jumps.density: integrability check failed: {exc}")
            else:
                if not w.finite:
                    res.errors.append(f"jumps.density: int min(1,u^2) Pi(du) diverges ({w.detail})")
    else:
        res.errors.append(f"jumps: unsupported jump measure type {type(jm).__name__}")
    return res


def _density_probe(jm: DensityMeasure) -> np.ndarray:
    lo = jm.lower if np.isfinite(jm.lower) else -1e3
    hi = jm.upper
    if hi == 0.0:
        near = -np.logspace(-12, np.log10(min(1.0, -lo)), 200)
        far = np.linspace(lo, max(lo, -1.0), 50)
        pts = np.concatenate([near, far])
    else:
        pts = np.linspace(lo, hi, 400)
    return pts[(pts >= jm.lower) & (pts < 0) & (pts <= jm.upper)]


# ---------------------------------------------------------------------------
# Laplace exponent
# ---------------------------------------------------------------------------


def _psi_uncached(t: LevyTriplet, lam: float, tol: float) -> float:
    jm = t.jump_measure
    drift = t.gamma * lam + 0.5 * t.sigma2 * lam * lam
    if isinstance(jm, AtomMeasure):
        jumps = 0.0
        for u, m in zip(jm.locations, jm.masses):
            comp = lam * u if abs(u) <= 1.0 else 0.0
            jumps += m * (math.expm1(lam * u) - comp)
    else:
        if lam == 0.0:
            jumps = 0.0
        else:
            small = jm.integrate(lambda u: float(_expm1_minus_x(lam * u)), -1.0, 0.0, tol)
            big = jm.integrate(lambda u: math.expm1(lam * u), -math.inf, -1.0, tol)
            jumps = small + big
    return drift + jumps - t.kill_rate


class LaplaceExponent:
    """Callable ``lam -> Psi(lam)`` for a triplet, caching integer arguments.

    Cache writes are idempotent (same key, same value), so concurrent readers
    may fill it without locking.
    """

    def __init__(self, triplet: LevyTriplet, tol: float = DEFAULT_QUAD_TOL):
        self.triplet = triplet
        self.tol = tol
        self.exact = isinstance(triplet.jump_measure, AtomMeasure)
        self._cache: dict[int, float] = {}

    def __call__(self, lam: float) -> float:
        lam = float(lam)
        if lam < 0 or not np.isfinite(lam):
            raise ValueError(f"Psi is evaluated on [0, inf); got lambda={lam!r}")
        if lam.is_integer():
            key = int(lam)
            val = self._cache.get(key)
            if val is None:
                val = _psi_uncached(self.triplet, lam, self.tol)
                self._cache[key] = val
            return val
        return _psi_uncached(self.triplet, lam, self.tol)

    def at_integers(self, n_max: int) -> np.ndarray:
        """Psi(1), ..., Psi(n_max)."""
        return np.array([self(k) for k in range(1, n_max + 1)], dtype=float)

    def __repr__(self) -> str:
        return f"LaplaceExponent({self.triplet!r})"


PsiSource = Union[LevyTriplet, LaplaceExponent, Callable[[float], float]]


def as_exponent(source: PsiSource) -> Callable[[float], float]:
    if isinstance(source, LevyTriplet):
        return LaplaceExponent(source)
    if callable(source):
        return source
    raise TypeError(f"cannot interpret {type(source).__name__} as a Laplace exponent")


def psi(source: PsiSource, lam: float) -> float:
    return float(as_exponent(source)(lam))


def _tolerance(source) -> float:
    exp = source if isinstance(source, LaplaceExponent) else None
    if isinstance(source, LevyTriplet):
        exp = LaplaceExponent(source)
    if exp is None or exp.exact:
        return 0.0
    return exp.tol


def check_a2(source: PsiSource) -> bool | None:
    """Return True iff Psi(1) > 0.

    For quadrature-backed exponents a value within the quadrature tolerance of
    zero is undecidable and yields ``None``; callers must treat that as a
    failure rather than a pass.
    """
    val = psi(source, 1.0)
    band = _tolerance(source)
    if band and abs(val) <= band:
        return None
    return val > 0.0


def require_a2(source: PsiSource) -> Callable[[float], float]:
    fn = as_exponent(source)
    status = check_a2(fn)
    if status is None:
        raise AssumptionError("assumption A2 (Psi(1) > 0) is indeterminate within quadrature tolerance")
    if not status:
        raise AssumptionError(f"assumption A2 (Psi(1) > 0) does not hold: Psi(1) = {fn(1.0)!r}")
    return fn


def cramer_root(source: PsiSource, xtol: float = 1e-12) -> float | None:
    """Unique theta in (0, 1) with Psi(theta) = 0, or None when Psi > 0 on (0, 1).

    Requires Psi(1) > 0.  Convexity makes the root unique and bisection safe.
    """
    fn = require_a2(source)
    lo = None
    if fn(0.0) < 0.0:
        lo = 0.0
    else:
        res = optimize.minimize_scalar(fn, bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-12})
        if res.fun < 0.0:
            lo = float(res.x)
        else:
            for k in range(1, 60):
                x = 2.0 ** -k
                if fn(x) < 0.0:
                    lo = x
                    break
    if lo is None:
        return None
    return float(optimize.bisect(fn, lo, 1.0, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=200))


# ---------------------------------------------------------------------------
# regimes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegimeReport:
    a1_holds: bool
    a2_holds: bool
    mean_xi1: float
    regime: str
    hits_zero: bool


def mean_xi1(t: LevyTriplet, tol: float = DEFAULT_QUAD_TOL) -> float:
    """E(xi_1) = gamma + int_{u<-1} u Pi(du) for the unkilled process; may be -inf."""
    jm = t.jump_measure
    if isinstance(jm, AtomMeasure):
        return t.gamma + jm.integrate(lambda u: u, -math.inf, -1.0)
    lo, hi = jm.lower, min(jm.upper, -1.0)
    if not lo < hi:
        return t.gamma
    if lo == -math.inf:
        v0 = math.log(-hi)
        ok, val = _tail_behaviour(lambda v: math.exp(2.0 * v) * jm.density(-math.exp(v)), v0, tol, "mean tail")
        if not ok:
            return -math.inf
        return t.gamma - val
    return t.gamma + jm.integrate(lambda u: u, lo, hi, tol)


def classify_regime(t: LevyTriplet, tol: float = DEFAULT_QUAD_TOL) -> RegimeReport:
    jm = t.jump_measure
    if isinstance(jm, AtomMeasure):
        a1 = all(u < 0 for u in jm.locations)
        band = 0.0
    else:
        a1 = jm.upper <= 0
        band = tol
    mean = mean_xi1(t, tol)
    if t.kill_rate > 0:
        regime = "killed"
    elif mean == -math.inf or mean < -band:
        regime = "drifts_to_minus_infinity"
    elif mean > band:
        regime = "drifts_to_plus_infinity"
    else:
        regime = "oscillates"
    a2 = check_a2(LaplaceExponent(t, tol)) is True
    return RegimeReport(a1, a2, mean, regime, regime in ("killed", "drifts_to_minus_infinity"))


# ---------------------------------------------------------------------------
# model files
# ---------------------------------------------------------------------------


def _number(doc: dict, key: str, path: str, default=None) -> float:
    if key not in doc:
        if default is None:
            raise ModelError(f"{path}{key}: missing required field")
        return default
    val = doc[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ModelError(f"{path}{key}: expected a number, got {val!r}")
    return float(val)


def _parse_density(doc: Any) -> DensityMeasure:
    if not isinstance(doc, dict):
        raise ModelError("jumps.density: expected an object")
    family = doc.get("family")
    params = doc.get("params", {})
    if not isinstance(params, dict):
        raise ModelError("jumps.density.params: expected an object")
    if family == "exp_tilted_stable":
        p = "jumps.density.params."
        c = _number(params, "c", p)
        alpha = _number(params, "alpha", p)
        beta = _number(params, "beta", p, 0.0)
        if c <= 0:
            raise ModelError(f"{p}c: must be > 0")
        if not alpha < 2:
            raise ModelError(f"{p}alpha: must be < 2")
        if beta < 0:
            raise ModelError(f"{p}beta: must be >= 0")
        return exp_tilted_stable(c, alpha, beta)
    if family == "custom_table":
        p = "jumps.density.params"
        u, d = params.get("u"), params.get("density")
        for name, arr in (("u", u), ("density", d)):
            if not isinstance(arr, list) or len(arr) < 2:
                raise ModelError(f"{p}.{name}: expected a list of at least two numbers")
            for i, x in enumerate(arr):
                if isinstance(x, bool) or not isinstance(x, (int, float)):
                    raise ModelError(f"{p}.{name}[{i}]: expected a number, got {x!r}")
        if len(u) != len(d):
            raise ModelError(f"{p}: u and density differ in length")
        if any(b <= a for a, b in zip(u, u[1:])):
            raise ModelError(f"{p}.u: must be strictly increasing")
        return custom_table(u, d)
    raise ModelError(f"jumps.density.family: unknown family {family!r} "
                     "(expected 'exp_tilted_stable' or 'custom_table')")


def triplet_from_dict(doc: Any) -> LevyTriplet:
    """Parse a model document; errors name the offending field path."""
    if not isinstance(doc, dict):
        raise ModelError("model: expected a JSON object")
    gamma = _number(doc, "gamma", "")
    sigma2 = _number(doc, "sigma2", "", 0.0)
    q = _number(doc, "q", "", 0.0)
    jumps = doc.get("jumps")
    if jumps is None:
        jumps = {"atoms": []}
    if not isinstance(jumps, dict):
        raise ModelError("jumps: expected an object")
    if "atoms" in jumps and "density" in jumps:
        raise ModelError("jumps: give either 'atoms' or 'density', not both")
    if "density" in jumps:
        measure: JumpMeasure = _parse_density(jumps["density"])
    else:
        atoms = jumps.get("atoms", [])
        if not isinstance(atoms, list):
            raise ModelError("jumps.atoms: expected a list of [u, mass] pairs")
        pairs = []
        for k, a in enumerate(atoms):
            if not isinstance(a, list) or len(a) != 2:
                raise ModelError(f"jumps.atoms[{k}]: expected [u, mass]")
            for i, x in enumerate(a):
                if isinstance(x, bool) or not isinstance(x, (int, float)):
                    raise ModelError(f"jumps.atoms[{k}][{i}]: expected a number, got {x!r}")
            pairs.append((float(a[0]), float(a[1])))
        measure = AtomMeasure.from_pairs(pairs)
    return LevyTriplet(gamma, sigma2, measure, q)


def load_triplet(path: str | Path, validate: bool = True) -> LevyTriplet:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelError(f"model: not valid JSON ({exc})") from exc
    except OSError as exc:
        raise ModelError(f"model: cannot read {path} ({exc})") from exc
    t = triplet_from_dict(doc)
    if validate:
        validate_triplet(t).raise_if_invalid()
    return t
