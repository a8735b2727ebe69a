"""Monte Carlo moment estimates and their comparison with the exact formula.

Exit codes used by reports: 0 every cell passes, 1 some cell fails, 2 the
ensemble itself is invalid (see :class:`~pssmp.ensemble.EnsembleError`).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .ensemble import Ensemble, EnsembleError
from .lamperti import LevyPathConfig, lamperti_ensemble
from .levy import LevyTriplet, PsiSource, classify_regime, require_a2
from .moments import MomentQuery, MomentTable, entire_moment, moment_recursion
from .rng import check_seed
from .sde import SdeConfig, sde_ensemble

DEFAULT_K = 4.0
EXACT_RTOL = 1e-9
MAX_ABORTED = 0.01
SCHEMES = ("lamperti", "sde")
_SEED_SHIFT = 0x9E3779B97F4A7C15


@dataclass(frozen=True)
class McEstimate:
    value: float
    standard_error: float
    n_paths: int
    estimator: str = "sample mean of Z_t^n"

    @property
    def degenerate(self) -> bool:
        return not math.isfinite(self.standard_error)


def mc_estimate(samples, estimator: str = "sample mean of Z_t^n") -> McEstimate:
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n == 0:
        raise ValueError("no samples")
    if n == 1:
        return McEstimate(float(x[0]), math.nan, n, estimator)
    if np.ptp(x) == 0.0:
        # identical samples; the float mean/std would report rounding noise as spread
        return McEstimate(float(x[0]), 0.0, n, estimator)
    return McEstimate(float(x.mean()), float(x.std(ddof=1) / math.sqrt(n)), n, estimator)


def second_seed(seed: int) -> int:
    """Seed for the second ensemble of a two-sample test, so the samples stay independent."""
    return (check_seed(seed) + _SEED_SHIFT) % 2**64


def moments_from_ensemble(ens: Ensemble, n_max: int, max_aborted: float = MAX_ABORTED) -> MomentTable:
    """Sample moments of orders ``1..n_max`` at every output time (aborted paths excluded)."""
    ens.check(max_aborted)
    keep = ~ens.aborted
    vals = ens.values[keep]
    n_used = vals.shape[0]
    orders = list(range(1, n_max + 1))
    est = np.empty((n_max, ens.times.size, 1))
    se = np.empty_like(est)
    for i, n in enumerate(orders):
        for j in range(ens.times.size):
            e = mc_estimate(vals[:, j] ** n)
            est[i, j, 0], se[i, j, 0] = e.value, e.standard_error
    meta = {"scheme": ens.scheme, "dt": ens.config.get("dt"), "paths": ens.n_paths, "paths_used": n_used,
            "seed": ens.seed, "aborted_fraction": ens.aborted_fraction, "config_digest": ens.digest,
            "config": ens.config}
    return MomentTable(orders, ens.times, [ens.z], est, "estimated", se, n_used, meta)


def run_ensemble(scheme: str, model: LevyTriplet, z: float, times, n_paths: int, config=None, master_seed: int = 0,
                 workers: int = 1, backend: str | None = None, order: int = 0) -> Ensemble:
    if scheme == "lamperti":
        if not z > 0:
            raise ValueError("the Lamperti scheme needs z > 0; use scheme 'sde' for z = 0")
        return lamperti_ensemble(model, z, times, n_paths, master_seed, config or LevyPathConfig(), workers, backend)
    if scheme == "sde":
        return sde_ensemble(model, z, times, n_paths, master_seed, config or SdeConfig(), workers, backend, order)
    raise ValueError(f"scheme must be one of {SCHEMES}")


def estimate_moments(scheme: str, model: LevyTriplet, z: float, times, n_max: int, n_paths: int, config=None,
                     master_seed: int = 0, workers: int = 1, backend: str | None = None) -> MomentTable:
    """Estimated ``E_z(Z_t^n)`` for ``n = 1..n_max``; deterministic in ``master_seed``."""
    require_a2(model)
    ens = run_ensemble(scheme, model, z, times, n_paths, config, master_seed, workers, backend)
    table = moments_from_ensemble(ens, n_max)
    table.meta["hits_zero"] = classify_regime(model).hits_zero
    return table


# ---------------------------------------------------------------------------
# comparison with the formula
# ---------------------------------------------------------------------------


@dataclass
class Cell:
    n: int
    t: float
    z: float
    exact: float
    estimate: float
    se: float
    zscore: float
    verdict: str


@dataclass
class ComparisonReport:
    cells: list
    k: float
    meta: dict = field(default_factory=dict)
    ground_truth_ok: bool = True

    @property
    def passed(self) -> bool:
        return self.ground_truth_ok and all(c.verdict in ("pass", "degenerate") for c in self.cells)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1

    @property
    def hard_failures(self) -> list:
        return [c for c in self.cells if c.verdict == "hard_fail"]

    def to_dict(self) -> dict:
        return {"k": self.k, "passed": self.passed, "exit_code": self.exit_code,
                "ground_truth_ok": self.ground_truth_ok, "meta": self.meta, "cells": [asdict(c) for c in self.cells]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default) + "\n"

    def to_text(self) -> str:
        head = f"{'n':>3} {'t':>8} {'z':>8} {'exact':>14} {'estimate':>14} {'se':>10} {'z-score':>8}  verdict"
        rows = [head]
        for c in self.cells:
            rows.append(f"{c.n:>3} {c.t:>8.4g} {c.z:>8.4g} {c.exact:>14.8g} {c.estimate:>14.8g} "
                        f"{c.se:>10.3g} {c.zscore:>8.3f}  {c.verdict}")
        m = self.meta
        rows.append(f"k={self.k}  scheme={m.get('scheme')}  dt={m.get('dt')}  paths={m.get('paths')}  "
                    f"seed={m.get('seed')}  aborted={m.get('aborted_fraction') or 0.0:.4%}  "
                    f"result={'PASS' if self.passed else 'FAIL'}")
        return "\n".join(rows) + "\n"


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return repr(obj)


def _verdict(est: float, exact: float, se: float, k: float) -> tuple[float, str]:
    if not math.isfinite(se):
        return math.nan, "degenerate"
    if se == 0.0:
        if abs(est - exact) <= EXACT_RTOL * (1.0 + abs(exact)):
            return 0.0, "pass"
        return math.copysign(math.inf, est - exact), "hard_fail"
    zs = (est - exact) / se
    return zs, "pass" if abs(zs) <= k else "fail"


def compare_to_formula(est: MomentTable, psi_source: PsiSource, k: float = DEFAULT_K) -> ComparisonReport:
    """Fill in exact values, z-scores and verdicts for every estimated cell.

    Each exact value is also recomputed through the recursion; a disagreement
    beyond 1e-10 relative marks the report as failed.
    """
    if est.kind != "estimated" or est.se is None:
        raise ValueError("compare_to_formula needs an estimated table")
    fn = require_a2(psi_source)
    cells, truth_ok = [], True
    for n, t, z, value, se in est.cells():
        q = MomentQuery(z, t, n)
        exact = entire_moment(fn, q)
        if abs(exact - moment_recursion(fn, q)) > 1e-10 * (1.0 + abs(exact)):
            truth_ok = False
        zs, verdict = _verdict(value, exact, se, k)
        cells.append(Cell(n, t, z, exact, value, se, zs, verdict))
    meta = {key: est.meta.get(key) for key in ("scheme", "dt", "paths", "paths_used", "seed", "aborted_fraction",
                                              "config_digest", "hits_zero")}
    return ComparisonReport(cells, k, meta, truth_ok)


def scaling_check(psi_source: PsiSource, z: float, t: float, c: float, n_max: int) -> float:
    """Largest relative residual of ``c^-n E_z(Z_ct^n) = E_{z/c}(Z_t^n)`` over ``n <= n_max``."""
    if not c > 0:
        raise ValueError("c must be > 0")
    fn = require_a2(psi_source)
    worst = 0.0
    for n in range(1, n_max + 1):
        lhs = c ** (-n) * entire_moment(fn, MomentQuery(z, c * t, n))
        rhs = entire_moment(fn, MomentQuery(z / c, t, n))
        worst = max(worst, abs(lhs - rhs) / (1.0 + abs(rhs)))
    return worst


# ---------------------------------------------------------------------------
# martingales and pathwise identity
# ---------------------------------------------------------------------------


@dataclass
class ComponentStat:
    name: str
    mean: float
    se: float
    zscore: float
    verdict: str


@dataclass
class MartingaleReport:
    components: list
    k: float
    n: int
    residual_mean_abs: float
    meta: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.verdict in ("pass", "degenerate") for c in self.components)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def to_dict(self) -> dict:
        return {"k": self.k, "n": self.n, "passed": self.passed, "exit_code": self.exit_code,
                "residual_mean_abs": self.residual_mean_abs, "meta": self.meta,
                "components": [asdict(c) for c in self.components]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default) + "\n"

    def to_text(self) -> str:
        rows = [f"{'component':>10} {'mean':>14} {'se':>12} {'z-score':>9}  verdict"]
        for c in self.components:
            rows.append(f"{c.name:>10} {c.mean:>14.6g} {c.se:>12.4g} {c.zscore:>9.3f}  {c.verdict}")
        rows.append(f"n={self.n}  k={self.k}  mean |identity residual|={self.residual_mean_abs:.3g}  "
                    f"result={'PASS' if self.passed else 'FAIL'}")
        return "\n".join(rows) + "\n"


def _zero_mean(name: str, samples: np.ndarray, k: float) -> ComponentStat:
    e = mc_estimate(samples)
    if e.degenerate or e.standard_error == 0.0:
        ok = abs(e.value) <= EXACT_RTOL
        return ComponentStat(name, e.value, e.standard_error, 0.0 if ok else math.inf,
                             "degenerate" if ok else "hard_fail")
    zs = e.value / e.standard_error
    return ComponentStat(name, e.value, e.standard_error, zs, "pass" if abs(zs) <= k else "fail")


def identity_residuals(ens: Ensemble, psi_n: float) -> np.ndarray:
    """``Z_T^n - z^n - Psi(n) int Z^(n-1) ds - M1 - M2 - M3`` per path at the last time."""
    n = ens.extras["order"]
    m = ens.extras["martingales"]
    return ens.values[:, -1] ** n - ens.z ** n - psi_n * m[:, 3] - m[:, 0] - m[:, 1] - m[:, 2]


def martingale_zero_mean_test(model: LevyTriplet, z: float, n: int, horizon: float, n_paths: int,
                              config: SdeConfig = SdeConfig(), seed: int = 0, k: float = DEFAULT_K,
                              workers: int = 1, backend: str | None = None) -> MartingaleReport:
    """Ensemble means of the three martingales at ``horizon`` against zero."""
    if n < 1:
        raise ValueError("n must be >= 1")
    fn = require_a2(model)
    ens = sde_ensemble(model, z, [horizon], n_paths, seed, config, workers, backend, order=n)
    ens.check(MAX_ABORTED)
    keep = ~ens.aborted
    m = ens.extras["martingales"][keep]
    comps = [_zero_mean(name, m[:, i], k) for i, name in enumerate(("M1", "M2", "M3"))]
    res = identity_residuals(ens, fn(n))[keep]
    meta = {"scheme": ens.scheme, "dt": config.dt, "paths": n_paths, "seed": ens.seed,
            "aborted_fraction": ens.aborted_fraction, "config_digest": ens.digest}
    return MartingaleReport(comps, k, n, float(np.mean(np.abs(res))), meta)


@dataclass
class TrendReport:
    dts: list
    errors: list
    ratios: list
    detail: list = field(default_factory=list)

    @property
    def decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.errors, self.errors[1:]))


def identity_residual_trend(model: LevyTriplet, z: float, n: int, horizon: float, n_paths: int,
                            dts: Sequence[float], seed: int = 0, config: SdeConfig = SdeConfig(),
                            workers: int = 1, backend: str | None = None) -> TrendReport:
    """Mean absolute pathwise-identity residual at ``horizon`` for each step size."""
    fn = require_a2(model)
    errs = []
    for dt in dts:
        cfg = SdeConfig(**{**asdict(config), "dt": dt})
        ens = sde_ensemble(model, z, [horizon], n_paths, seed, cfg, workers, backend, order=n).check(MAX_ABORTED)
        errs.append(float(np.mean(np.abs(identity_residuals(ens, fn(n))[~ens.aborted]))))
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    return TrendReport(list(dts), errs, ratios)


def bias_trend(model: LevyTriplet, z: float, t: float, dts: Sequence[float], n_paths: int, seed: int = 0,
               config: SdeConfig = SdeConfig(), workers: int = 1, backend: str | None = None) -> TrendReport:
    """|estimate - exact| of ``E_z(Z_t)`` for decreasing step sizes.

    The trend is read from the conditional-mean estimator (the ``cv`` extra),
    whose mean equals the scheme's mean but whose noise is far below its
    bias, so a shrinking bias is visible at moderate path counts.  Plain
    sample means are kept in ``detail`` for reference.
    """
    fn = require_a2(model)
    exact = entire_moment(fn, MomentQuery(z, t, 1))
    errs, detail = [], []
    for dt in dts:
        cfg = SdeConfig(**{**asdict(config), "dt": dt})
        ens = sde_ensemble(model, z, [t], n_paths, seed, cfg, workers, backend).check(MAX_ABORTED)
        keep = ~ens.aborted
        plain = mc_estimate(ens.values[keep, -1])
        cv = mc_estimate(ens.extras["cv"][keep, -1], "mean of summed one-step conditional means")
        errs.append(abs(cv.value - exact))
        detail.append({"dt": dt, "exact": exact, "plain": asdict(plain), "conditional_mean": asdict(cv),
                       "plain_error": plain.value - exact, "cv_error": cv.value - exact})
    ratios = [a / b if b else math.inf for a, b in zip(errs, errs[1:])]
    return TrendReport(list(dts), errs, ratios, detail)


# ---------------------------------------------------------------------------
# two-scheme cross validation
# ---------------------------------------------------------------------------


@dataclass
class CrossCell:
    n: int
    t: float
    lamperti: float
    lamperti_se: float
    sde: float
    sde_se: float
    statistic: float
    verdict: str


@dataclass
class CrossReport:
    cells: list
    k: float
    meta: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.verdict in ("pass", "degenerate") for c in self.cells)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def to_dict(self) -> dict:
        return {"k": self.k, "passed": self.passed, "exit_code": self.exit_code, "meta": self.meta,
                "cells": [asdict(c) for c in self.cells]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default) + "\n"

    def to_text(self) -> str:
        rows = [f"{'n':>3} {'t':>8} {'lamperti':>14} {'se':>10} {'sde':>14} {'se':>10} {'welch':>8}  verdict"]
        for c in self.cells:
            rows.append(f"{c.n:>3} {c.t:>8.4g} {c.lamperti:>14.8g} {c.lamperti_se:>10.3g} {c.sde:>14.8g} "
                        f"{c.sde_se:>10.3g} {c.statistic:>8.3f}  {c.verdict}")
        rows.append(f"k={self.k}  paths={self.meta.get('paths')}  result={'PASS' if self.passed else 'FAIL'}")
        return "\n".join(rows) + "\n"


def welch(a: float, se_a: float, b: float, se_b: float) -> float:
    if not (math.isfinite(se_a) and math.isfinite(se_b)):
        return math.nan
    den = math.hypot(se_a, se_b)
    if den == 0.0:
        return 0.0 if abs(a - b) <= EXACT_RTOL * (1.0 + abs(a)) else math.copysign(math.inf, a - b)
    return (a - b) / den


def cross_validate(model: LevyTriplet, z: float, times, n_max: int, n_paths: int, seed: int = 0,
                   lamperti_config: LevyPathConfig = LevyPathConfig(), sde_config: SdeConfig = SdeConfig(),
                   k: float = DEFAULT_K, workers: int = 1, backend: str | None = None) -> CrossReport:
    """Welch statistics between Lamperti and SDE moment estimates.

    The SDE ensemble runs on :func:`second_seed` of ``seed`` so the two samples
    are independent.  Models that hit zero are refused: there the Lamperti
    process is absorbed while the SDE restarts from zero.
    """
    require_a2(model)
    if not z > 0:
        raise ValueError("cross validation needs z > 0")
    if classify_regime(model).hits_zero:
        raise ValueError("model hits zero: the Lamperti and SDE processes differ after T0")
    a = moments_from_ensemble(run_ensemble("lamperti", model, z, times, n_paths, lamperti_config, seed, workers,
                                           backend), n_max)
    b = moments_from_ensemble(run_ensemble("sde", model, z, times, n_paths, sde_config, second_seed(seed), workers,
                                           backend), n_max)
    cells = []
    for (n, t, _, va, sa), (_, _, _, vb, sb) in zip(a.cells(), b.cells()):
        st = welch(va, sa, vb, sb)
        verdict = "degenerate" if math.isnan(st) else ("pass" if abs(st) <= k else "fail")
        cells.append(CrossCell(n, t, va, sa, vb, sb, st, verdict))
    meta = {"paths": n_paths, "seed": seed, "sde_seed": second_seed(seed), "lamperti": a.meta, "sde": b.meta}
    return CrossReport(cells, k, meta)


__all__ = [
    "McEstimate", "mc_estimate", "moments_from_ensemble", "estimate_moments", "run_ensemble", "ComparisonReport",
    "compare_to_formula", "scaling_check", "martingale_zero_mean_test", "identity_residual_trend", "bias_trend",
    "cross_validate", "welch", "second_seed", "EnsembleError",
]
