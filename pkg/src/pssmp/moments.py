"""Exact integer moments of the index-1 self-similar process.

For ``n >= 1`` the moment ``E_z(Z_t**n)`` is a homogeneous polynomial in
``(z, t)`` whose coefficient on ``z**(n-l) * t**l`` is
``Psi(n) Psi(n-1) ... Psi(n-l+1) / l!``.  The same polynomial is reachable by
iterating ``E(Z_t**k) = z**k + Psi(k) * int_0^t E(Z_s**(k-1)) ds``, which is
implemented independently with exact polynomial integration.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.special import logsumexp

from .levy import PsiSource, require_a2


class MomentOverflowError(OverflowError):
    pass


@dataclass(frozen=True)
class MomentQuery:
    z: float
    t: float
    n: int

    def __post_init__(self):
        if not (self.z >= 0 and math.isfinite(self.z)):
            raise ValueError(f"z must be finite and >= 0, got {self.z!r}")
        if not (self.t >= 0 and math.isfinite(self.t)):
            raise ValueError(f"t must be finite and >= 0, got {self.t!r}")
        if int(self.n) != self.n or self.n < 0:
            raise ValueError(f"n must be a non-negative integer, got {self.n!r}")


@dataclass(frozen=True)
class PsiProductLadder:
    """``products[l-1] = Psi(n) ... Psi(n-l+1)`` for ``l = 1..n``."""

    n: int
    products: tuple


def psi_ladder(source: PsiSource, n: int) -> PsiProductLadder:
    fn = require_a2(source)
    prods = []
    p = 1
    for ell in range(1, n + 1):
        p = p * fn(n - ell + 1)
        prods.append(p)
    return PsiProductLadder(n, tuple(prods))


def _coefficients(fn, n: int) -> list:
    # c_l = c_{l-1} * Psi(n-l+1) / l, so l! never appears on its own and
    # large orders do not overflow before the division
    coeffs = [1]
    c = 1
    for ell in range(1, n + 1):
        c = c * fn(n - ell + 1) / ell
        coeffs.append(c)
    return coeffs


def moment_polynomial(source: PsiSource, n: int) -> list:
    """Coefficients ``[1, p_1/1!, ..., p_n/n!]`` on monomials ``z**(n-l) * t**l``.

    Arithmetic follows whatever ``Psi`` returns, so a ``Fraction``-valued
    exponent yields exact rational coefficients.
    """
    if int(n) != n or n < 0:
        raise ValueError(f"order must be a non-negative integer, got {n!r}")
    fn = require_a2(source)
    return _coefficients(fn, int(n))


def evaluate_moment_polynomial(coeffs: Sequence, z: float, t: float) -> float:
    n = len(coeffs) - 1
    try:
        terms = [float(c) * (z ** (n - ell)) * (t ** ell) for ell, c in enumerate(coeffs)]
    except OverflowError as exc:
        raise MomentOverflowError(f"moment of order {n} overflows at z={z!r}, t={t!r}") from exc
    total = math.fsum(terms)
    if not math.isfinite(total):
        raise MomentOverflowError(f"moment of order {n} overflows at z={z!r}, t={t!r}")
    return total


def entire_moment(source: PsiSource, query: MomentQuery | None = None, *, z=None, t=None, n=None) -> float:
    """Closed-form ``E_z(Z_t**n)``.

    >>> entire_moment(lambda lam: lam, z=1.0, t=1.0, n=3)
    8.0
    """
    q = query if query is not None else MomentQuery(z, t, n)
    return evaluate_moment_polynomial(moment_polynomial(source, q.n), q.z, q.t)


def moment_recursion(source: PsiSource, query: MomentQuery | None = None, *, z=None, t=None, n=None) -> float:
    """``E_z(Z_t**n)`` by iterating the integral recursion on polynomials in ``t``."""
    q = query if query is not None else MomentQuery(z, t, n)
    fn = require_a2(source)
    c = np.array([1.0])
    with np.errstate(over="raise", invalid="raise"):
        try:
            for k in range(1, q.n + 1):
                c = fn(k) * P.polyint(c)
                c[0] += q.z ** k
            val = float(P.polyval(q.t, c))
        except (FloatingPointError, OverflowError) as exc:
            raise MomentOverflowError(f"recursion overflows at n={q.n}, z={q.z!r}, t={q.t!r}") from exc
    if not math.isfinite(val):
        raise MomentOverflowError(f"recursion overflows at n={q.n}, z={q.z!r}, t={q.t!r}")
    return val


# ---------------------------------------------------------------------------
# determinacy witness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DeterminacyReport:
    K: float
    theta_star: float
    ok: bool
    ratios: tuple
    message: str = ""


def _log_moment(fn, n: int, z: float, t: float) -> float:
    logs = []
    logc = 0.0
    for ell in range(0, n + 1):
        if ell:
            logc += math.log(fn(n - ell + 1)) - math.log(ell)
        zpart = 0.0 if n == ell else (math.log(z) * (n - ell) if z > 0 else -math.inf)
        tpart = 0.0 if ell == 0 else (math.log(t) * ell if t > 0 else -math.inf)
        logs.append(logc + zpart + tpart)
    return float(logsumexp(logs))


def determinacy_check(source: PsiSource, n_max: int, t: float, z: float) -> DeterminacyReport:
    """Finite-range witness that the moments determine the law.

    ``K`` bounds ``Psi(n)/n**2`` for ``n <= n_max``.  ``theta_star`` is a radius
    at which the terms of ``sum theta**n E_z(Z_t**n) / n!`` contract: with
    ``rho_n = E_{n+1} / ((n+1) E_n)`` the term ratio is ``theta * rho_n``, and
    ``theta_star`` keeps it at or below 1/2 over the upper half of the range.
    The ratios must also have levelled off (no growth in the last quarter
    beyond 5% of the third quarter), otherwise ``ok`` is False.  Moments are
    handled in log space, so large orders do not overflow.
    """
    if n_max < 2:
        raise ValueError("n_max must be >= 2")
    fn = require_a2(source)
    K = max(fn(k) / (k * k) for k in range(1, n_max + 1))
    if z == 0 and t == 0:
        return DeterminacyReport(K, math.inf, True, (), "all moments vanish")
    logE = [_log_moment(fn, k, z, t) for k in range(0, n_max + 1)]
    rho = np.array([math.exp(logE[k + 1] - logE[k]) / (k + 1) for k in range(0, n_max)])
    half = rho[n_max // 2:]
    q3 = rho[n_max // 2: (3 * n_max) // 4]
    q4 = rho[(3 * n_max) // 4:]
    top = float(half.max())
    if not (math.isfinite(K) and np.all(np.isfinite(rho))):
        return DeterminacyReport(K, math.nan, False, tuple(rho), "non-finite ratios; n_max too large")
    theta = math.inf if top == 0 else 0.5 / top
    stable = q3.size == 0 or float(q4.max()) <= 1.05 * float(q3.max())
    msg = "" if stable else "ratio test did not stabilize by n_max; increase n_max"
    return DeterminacyReport(float(K), theta, bool(stable), tuple(float(r) for r in rho), msg)


# ---------------------------------------------------------------------------
# tables
# ---------------------------------------------------------------------------

CSV_COLUMNS = ("n", "t", "z", "value", "kind", "se", "paths")


@dataclass
class MomentTable:
    """Values of ``E_z(Z_t**n)`` on an ``(orders, times, zs)`` grid.

    ``values`` has shape ``(len(orders), len(times), len(zs))``.  Estimated
    tables also carry ``se`` (same shape) and ``n_paths``.
    """

    orders: tuple
    times: tuple
    zs: tuple
    values: np.ndarray
    kind: str = "exact"
    se: np.ndarray | None = None
    n_paths: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.orders = tuple(int(n) for n in self.orders)
        self.times = tuple(float(t) for t in self.times)
        self.zs = tuple(float(z) for z in self.zs)
        self.values = np.asarray(self.values, dtype=float)
        shape = (len(self.orders), len(self.times), len(self.zs))
        if self.values.shape != shape:
            raise ValueError(f"values shape {self.values.shape} does not match axes {shape}")
        if self.kind not in ("exact", "estimated"):
            raise ValueError(f"kind must be 'exact' or 'estimated', got {self.kind!r}")
        if self.se is not None:
            self.se = np.asarray(self.se, dtype=float)
            if self.se.shape != shape:
                raise ValueError("se shape does not match values")

    def cell(self, n: int, t: float, z: float) -> float:
        return float(self.values[self.orders.index(n), self.times.index(float(t)), self.zs.index(float(z))])

    def cells(self):
        for i, n in enumerate(self.orders):
            for j, t in enumerate(self.times):
                for k, z in enumerate(self.zs):
                    se = None if self.se is None else float(self.se[i, j, k])
                    yield n, t, z, float(self.values[i, j, k]), se

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for n, t, z, v, se in self.cells():
            w.writerow([n, repr(t), repr(z), repr(v), self.kind,
                        "" if se is None else repr(se), "" if self.n_paths is None else self.n_paths])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "kind": self.kind,
            "orders": list(self.orders),
            "times": list(self.times),
            "zs": list(self.zs),
            "values": self.values.tolist(),
            "se": None if self.se is None else self.se.tolist(),
            "paths": self.n_paths,
            "meta": self.meta,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MomentTable":
        doc = json.loads(text)
        return cls(doc["orders"], doc["times"], doc["zs"], np.array(doc["values"], dtype=float), doc["kind"],
                   None if doc.get("se") is None else np.array(doc["se"], dtype=float), doc.get("paths"),
                   doc.get("meta", {}))

    def write(self, path: str | Path) -> Path:
        """Write CSV or JSON depending on the suffix (``.json`` selects JSON)."""
        path = Path(path)
        path.write_text(self.to_json() if path.suffix == ".json" else self.to_csv())
        return path


def exact_moment_table(source: PsiSource, orders: Sequence[int], times: Sequence[float], zs: Sequence[float],
                       mode: str = "closed") -> MomentTable:
    if mode not in ("closed", "recursion"):
        raise ValueError(f"mode must be 'closed' or 'recursion', got {mode!r}")
    fn = require_a2(source)
    f = entire_moment if mode == "closed" else moment_recursion
    vals = np.empty((len(orders), len(times), len(zs)))
    for i, n in enumerate(orders):
        for j, t in enumerate(times):
            for k, z in enumerate(zs):
                vals[i, j, k] = f(fn, MomentQuery(float(z), float(t), int(n)))
    return MomentTable(orders, times, zs, vals, "exact", meta={"mode": mode})
