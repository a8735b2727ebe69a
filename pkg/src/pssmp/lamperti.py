"""Lamperti construction ``Z_t = z * exp(xi(tau(t / z)))`` for starts ``z > 0``.

``xi`` is built on a grid of step ``dt``.  Inside a cell it moves linearly with
the drift, jumps arrive at their exact exponential times and the Gaussian
increment is added at the cell end.  Because ``xi`` is linear between
recorded points, ``I = int exp(xi)`` and its inverse ``tau`` are evaluated in
closed form per segment (``"exact"`` rule); the cruder left-endpoint rule is
available for comparison.

The single-path functions here are the readable reference.  Ensembles run
through the compiled or vectorised kernels, which follow the same steps and
read the same random numbers.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _nb_kernels, _np_kernels
from ._accel import resolve_backend
from .ensemble import Ensemble, SimPath, config_digest, run_chunked, STATUS_NAMES
from .levy import LevyTriplet, classify_regime
from .rng import ARRIVAL, KILL, MARK, NORMAL, check_seed, normals, stream_keys, uniforms
from .simparams import DEFAULT_EPS, SimParams, build_params

SCHEME_ID = "lamperti-exact-segment-v1"
RULES = ("exact", "left")


@dataclass(frozen=True)
class LevyPathConfig:
    dt: float = 1e-3
    horizon: float = 1000.0
    small_jump_cutoff: float = DEFAULT_EPS
    xi_floor: float = -40.0
    rule: str = "exact"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if not self.small_jump_cutoff > 0:
            raise ValueError("small_jump_cutoff must be > 0")
        if not self.horizon >= self.dt:
            raise ValueError("horizon must be >= dt")
        if self.rule not in RULES:
            raise ValueError(f"rule must be one of {RULES}")

    @property
    def max_cells(self) -> int:
        return int(math.ceil(self.horizon / self.dt - 1e-9))


@dataclass
class LevyPath:
    """Recorded points of ``xi`` (right limits); between points ``xi`` has slope ``drift``.

    After a killing time the values are ``-inf``.  ``status`` is one of ok,
    killed, floor (fell below the configured floor), overflow, horizon.
    """

    times: np.ndarray
    values: np.ndarray
    drift: float
    jumps: list = field(default_factory=list)
    lifetime: float = math.inf
    status: str = "horizon"


@dataclass
class TimeChange:
    times: np.ndarray
    values: np.ndarray
    path: LevyPath
    rule: str = "exact"
    saturated: bool = False

    @property
    def i_inf(self) -> float | None:
        """Terminal value of ``I`` when the path died or hit the floor."""
        return float(self.values[-1]) if self.saturated else None


def _params(model, eps) -> SimParams:
    return model if isinstance(model, SimParams) else build_params(model, eps)


def sample_levy_path(model: LevyTriplet | SimParams, config: LevyPathConfig = LevyPathConfig(), seed: int = 0,
                     path_index: int = 0, until: float | None = None) -> LevyPath:
    """Sample ``xi`` up to ``config.horizon``, its killing time, or the point where ``I`` exceeds ``until``."""
    p = _params(model, config.small_jump_cutoff)
    seed = check_seed(seed)
    idx = np.array([path_index])
    kn, ka, km, kk = (stream_keys(seed, idx, s) for s in (NORMAL, ARRIVAL, MARK, KILL))
    dt, a = config.dt, p.xi_drift
    lam = p.jump_rate
    cum = p.cum_masses
    sq = math.sqrt(p.xi_sigma2) * math.sqrt(dt)
    zeta = math.inf
    if p.kill_rate > 0:
        zeta = -math.log(uniforms(kk, [0])[0]) / p.kill_rate
    j = 0
    s_jump = -math.log(uniforms(ka, [0])[0]) / lam if lam > 0 else math.inf
    s = xi = big_i = 0.0
    times, values, jumps = [0.0], [0.0], []
    status = "horizon"
    block = np.empty(0)
    size = min(4096, config.max_cells)
    for i in range(config.max_cells):
        if i % size == 0:
            block = normals(np.repeat(kn, size), np.arange(i, i + size, dtype=np.uint64))
        cell_end = (i + 1) * dt
        stop = False
        while True:
            seg_end, ev = cell_end, 0
            if s_jump < seg_end:
                seg_end, ev = s_jump, 1
            if zeta < seg_end:
                seg_end, ev = zeta, 2
            delta = seg_end - s
            x = a * delta
            phi = 1.0 if x == 0.0 else math.expm1(x) / x
            big_i = big_i + math.exp(xi) * delta * phi
            xi += x
            s = seg_end
            if until is not None and big_i >= until:
                times.append(s)
                values.append(xi)
                status, stop = "ok", True
                break
            if ev == 0:
                break
            if ev == 1:
                k = min(int(np.searchsorted(cum, uniforms(km, [j])[0] * lam, side="right")), cum.size - 1)
                xi += p.locations[k]
                jumps.append((s, float(p.locations[k])))
                j += 1
                s_jump = s - math.log(uniforms(ka, [j])[0]) / lam
                times.append(s)
                values.append(xi)
                if xi < config.xi_floor:
                    status, stop = "floor", True
                    break
            else:
                times.append(s)
                values.append(-math.inf)
                status, stop = "killed", True
                break
        if stop:
            break
        xi += sq * block[i % size]
        times.append(cell_end)
        values.append(xi)
        if xi < config.xi_floor:
            status = "floor"
            break
        if xi > _nb_kernels.XI_MAX:
            status = "overflow"
            break
    lifetime = zeta if status == "killed" else math.inf
    return LevyPath(np.array(times), np.array(values), a, jumps, lifetime, status)


def exponential_functional(path: LevyPath, rule: str = "exact") -> TimeChange:
    """``I`` at every recorded point of ``path``.

    ``rule="exact"`` integrates ``exp`` of the linear segments exactly;
    ``rule="left"`` uses ``exp(xi(s_i)) * (s_{i+1} - s_i)``.  Killed segments
    contribute nothing.
    """
    if rule not in RULES:
        raise ValueError(f"rule must be one of {RULES}")
    if path.times.size == 0:
        raise ValueError("path has no points")
    if np.any(path.values > _nb_kernels.XI_MAX):
        raise OverflowError("exp(xi) overflows: the path escaped upward beyond float range")
    delta = np.diff(path.times)
    xi = path.values[:-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        x = path.drift * delta
        phi = np.where(x == 0.0, 1.0, np.expm1(x) / np.where(x == 0.0, 1.0, x)) if rule == "exact" else 1.0
        inc = np.where(np.isneginf(xi), 0.0, np.exp(xi) * delta * phi)
    values = np.concatenate([[0.0], np.cumsum(inc)])
    saturated = path.status in ("killed", "floor")
    return TimeChange(path.times, values, path, rule, saturated)


def _segment(tc: TimeChange, t: float) -> int:
    i = int(np.searchsorted(tc.values, t, side="left")) - 1
    return max(i, 0)


def time_change(tc: TimeChange, t: float) -> float:
    """``tau(t) = inf{s : I_s >= t}``; ``inf`` signals that ``I`` never reaches ``t``."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0:
        return 0.0
    if t > tc.values[-1]:
        return math.inf
    i = _segment(tc, t)
    xi = tc.path.values[i]
    gap = t - tc.values[i]
    a = tc.path.drift
    if tc.rule == "exact" and a != 0.0:
        r = math.log1p(a * gap / math.exp(xi)) / a
    else:
        r = gap / math.exp(xi)
    return float(tc.path.times[i] + r)


def lamperti_path(z: float, path: LevyPath, tc: TimeChange, output_times) -> SimPath:
    """Evaluate ``Z`` at ``output_times`` from one sampled ``xi`` and its time change."""
    if not z > 0:
        raise ValueError("the Lamperti construction needs z > 0; use the SDE scheme for z = 0")
    ts = np.asarray(output_times, dtype=float)
    if np.any(ts < 0) or np.any(np.diff(ts) < 0):
        raise ValueError("output_times must be non-negative and ascending")
    out = np.empty(ts.size)
    t0 = math.inf
    top = tc.values[-1]
    if tc.saturated:
        t0 = z * top
    for k, t in enumerate(ts):
        target = t / z
        if target > top:
            out[k] = 0.0 if tc.saturated else math.nan
            continue
        i = _segment(tc, target)
        ex = math.exp(tc.path.values[i])
        if tc.rule == "exact":
            out[k] = z * max(ex + tc.path.drift * (target - tc.values[i]), 0.0)
        else:
            out[k] = z * ex
    status = {"killed": "killed", "floor": "floor"}.get(tc.path.status, "ok")
    if np.isnan(out).any():
        status = "aborted"
    return SimPath(ts, out, t0, status, {"scheme": SCHEME_ID, "rule": tc.rule})


def simulate_lamperti_path(triplet: LevyTriplet, z: float, output_times, config: LevyPathConfig = LevyPathConfig(),
                           seed: int = 0, path_index: int = 0) -> SimPath:
    """Reference pipeline for one path: sample, integrate, invert, evaluate."""
    if not z > 0:
        raise ValueError("the Lamperti construction needs z > 0; use the SDE scheme for z = 0")
    ts = np.asarray(output_times, dtype=float)
    path = sample_levy_path(triplet, config, seed, path_index, until=float(ts.max()) / z if ts.size else 0.0)
    tc = exponential_functional(path, config.rule)
    sp = lamperti_path(z, path, tc, ts)
    sp.provenance.update(seed=seed, path_index=path_index, config_digest=config_digest(config, triplet))
    return sp


def lamperti_ensemble(model: LevyTriplet | SimParams, z: float, times, n_paths: int, seed: int,
                      config: LevyPathConfig = LevyPathConfig(), workers: int = 1,
                      backend: str | None = None) -> Ensemble:
    """Simulate ``n_paths`` Lamperti paths; row ``i`` is path index ``i`` of ``seed``."""
    if not z > 0:
        raise ValueError("the Lamperti construction needs z > 0; use the SDE scheme for z = 0")
    if config.rule != "exact":
        raise ValueError("ensembles use the exact segment rule")
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    seed = check_seed(seed)
    p = _params(model, config.small_jump_cutoff)
    ts = np.asarray(times, dtype=float)
    if ts.ndim != 1 or ts.size == 0 or np.any(ts < 0) or np.any(np.diff(ts) <= 0):
        raise ValueError("times must be a non-empty strictly ascending sequence of values >= 0")
    targets = ts / z
    kern = _nb_kernels if resolve_backend(backend) == "numba" else _np_kernels
    vals = np.empty((n_paths, ts.size))
    t0 = np.empty(n_paths)
    status = np.empty(n_paths, dtype=np.int64)
    jumps = np.empty(n_paths, dtype=np.int64)
    cum = p.cum_masses if p.masses.size else np.zeros(1)
    locs = p.locations if p.masses.size else np.zeros(1)
    sx = math.sqrt(p.xi_sigma2)

    def work(a, b):
        ids = np.arange(a, b, dtype=np.uint64)
        kern.lamperti_batch(np.uint64(seed), ids, float(z), targets, p.xi_drift, sx, config.dt, config.max_cells,
                            p.jump_rate, cum, locs, p.kill_rate, config.xi_floor,
                            vals[a:b], t0[a:b], status[a:b], jumps[a:b])

    run_chunked(work, n_paths, workers)
    cfg = asdict(config)
    digest = config_digest(cfg, model, z, ts, n_paths)
    return Ensemble(SCHEME_ID, ts, float(z), vals, t0, status, seed, cfg, digest, {"jumps": jumps})


def lamperti_targets_law(triplet: LevyTriplet) -> bool:
    """True when the Lamperti pssMp shares its law with the SDE's recurrent extension (zero never hit)."""
    return not classify_regime(triplet).hits_zero


__all__ = [
    "LevyPathConfig", "LevyPath", "TimeChange", "sample_levy_path", "exponential_functional", "time_change",
    "lamperti_path", "simulate_lamperti_path", "lamperti_ensemble", "lamperti_targets_law", "SCHEME_ID",
    "STATUS_NAMES",
]
