"""Direct simulation of the jump SDE, including starts from zero.

Write ``c = Pi(total) + q``.  At a state ``x > 0`` the thinning indicator
``1{r x <= 1}`` leaves an ``r``-section of length ``1/x``, so atom ``k`` fires at
rate ``m_k / x`` and multiplies the state by ``exp(u_k)``, and killing fires at
rate ``q / x`` and sends the state to zero.  Between events the state follows
``dZ = b dt + sigma sqrt(Z) dB`` with ``b = Psi(1) - int (e^u - 1) Pi(du) + q``
for ``Z > 0`` and ``b = Psi(1)`` at zero, where every kernel vanishes.

Each grid step applies one diffusion update (Milstein by default, Euler on
request), clamps at zero, then tests a single Bernoulli event with probability
``1 - exp(-c h / x)`` evaluated at the pre-step state.  Steps whose event
probability would exceed the thinning threshold are split into sub-steps.

After a killing event the state restarts from zero under the drift ``Psi(1)``,
which is the process the moment formula describes.  ``absorb_on_kill=True``
instead freezes the path at zero.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _nb_kernels, _np_kernels
from ._accel import resolve_backend
from .ensemble import Ensemble, SimPath, STATUS_NAMES, config_digest, run_chunked
from .levy import AssumptionError, LaplaceExponent, LevyTriplet, PsiSource, as_exponent, require_a2
from .rng import check_seed
from .simparams import DEFAULT_EPS, SimParams, build_params

SCHEME_ID = "sde-euler-thinning-v1"
DIFFUSION_STEPS = ("milstein", "euler")
NONE, JUMP, KILL = 0, 1, 2
EVENT_NAMES = {JUMP: "jump", KILL: "kill"}


def g(x: float, r: float, u: float) -> float:
    """Jump kernel: ``1{r x <= 1} * x * (exp(u) - 1)``."""
    return x * math.expm1(u) if r * x <= 1.0 else 0.0


def h(x: float, r: float) -> float:
    """Killing kernel: ``-1{r x <= 1} * x``."""
    return -x if r * x <= 1.0 else 0.0


@dataclass(frozen=True)
class SdeConfig:
    dt: float = 1e-3
    small_jump_cutoff: float = DEFAULT_EPS
    state_cap: float = 1e8
    compensator_mode: str = "analytic"
    diffusion_step: str = "milstein"
    absorb_on_kill: bool = False
    thin_threshold: float = 0.1
    max_substeps: int = 10_000

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if not self.small_jump_cutoff > 0:
            raise ValueError("small_jump_cutoff must be > 0")
        if not self.state_cap > 0:
            raise ValueError("state_cap must be > 0")
        if self.compensator_mode != "analytic":
            raise ValueError("compensator_mode is fixed to 'analytic'")
        if self.diffusion_step not in DIFFUSION_STEPS:
            raise ValueError(f"diffusion_step must be one of {DIFFUSION_STEPS}")
        if not 0 < self.thin_threshold < 1:
            raise ValueError("thin_threshold must lie in (0, 1)")
        if self.max_substeps < 1:
            raise ValueError("max_substeps must be >= 1")


@dataclass(frozen=True)
class EffectiveRates:
    jump_rate_total: float
    atom_rates: np.ndarray
    kill_rate_eff: float
    compensator_drift: float
    drift: float


def _params(model, eps) -> SimParams:
    return model if isinstance(model, SimParams) else build_params(model, eps)


def _require_a2(model, p: SimParams) -> None:
    if isinstance(model, LevyTriplet):
        require_a2(model)
    elif not p.psi1 > 0:
        raise AssumptionError(f"assumption A2 (Psi(1) > 0) does not hold: Psi(1) = {p.psi1!r}")


def effective_rates(x: float, model: LevyTriplet | SimParams, eps: float = DEFAULT_EPS) -> EffectiveRates:
    """Event rates and drift of the state equation at state ``x``."""
    if x < 0:
        raise ValueError("state must be >= 0")
    p = _params(model, eps)
    if x == 0:
        return EffectiveRates(0.0, np.zeros_like(p.masses), 0.0, 0.0, p.drift_zero)
    comp = -p.compensator + p.kill_rate
    return EffectiveRates(p.jump_rate / x, p.masses / x, p.kill_rate / x, comp, p.psi1 + comp)


@dataclass
class StepResult:
    x: float
    x_mid: float
    kind: int
    u: float
    dw: float
    clamped: bool


def sde_step(x: float, dt: float, model: LevyTriplet | SimParams, config: SdeConfig = SdeConfig(),
             draws=None, log: "SdeEventLog | None" = None, t: float = 0.0) -> StepResult:
    """One step of size ``dt`` from state ``x`` (no sub-stepping).

    ``draws`` is either a ``numpy.random.Generator`` or a tuple
    ``(standard_normal, thinning_uniform, mark_uniform)``, which lets a caller
    force a particular outcome.
    """
    if x < 0:
        raise ValueError("state must be >= 0")
    p = _params(model, config.small_jump_cutoff)
    if isinstance(draws, np.random.Generator):
        nrm, ut, um = draws.standard_normal(), draws.random(), draws.random()
    elif draws is None:
        raise ValueError("draws must be a Generator or a (normal, uniform, uniform) tuple")
    else:
        nrm, ut, um = draws
    s2 = p.sde_sigma2
    s_eff = math.sqrt(s2)
    b = p.drift_pos if x > 0 else p.drift_zero
    dw = math.sqrt(dt) * nrm if s_eff > 0 else 0.0
    xn = x + b * dt
    if x > 0 and s_eff > 0:
        xn += s_eff * math.sqrt(x) * dw
        if config.diffusion_step == "milstein":
            xn += 0.25 * s2 * (dw * dw - dt)
    clamped = xn < 0
    if clamped:
        xn = 0.0
    x_mid = xn
    kind, u = NONE, math.nan
    c = p.jump_rate + p.kill_rate
    if x > 0 and c > 0:
        pr = -math.expm1(-c / x * dt)
        if ut < pr:
            cum = p.cum_events
            e = min(int(np.searchsorted(cum, um * c, side="right")), cum.size - 1)
            if e < p.masses.size:
                u = float(p.locations[e])
                xn *= math.exp(u)
                kind = JUMP
            else:
                xn = 0.0
                kind = KILL
    if xn > config.state_cap:
        raise OverflowError(f"state {xn:.3g} exceeded the cap {config.state_cap:.3g}")
    if log is not None:
        log.record(t, dt, x, dw, x_mid, kind, u, b)
    return StepResult(xn, x_mid, kind, u, dw, clamped)


@dataclass
class SdeEventLog:
    """Per-step record of one path: start time, step, pre-state, Brownian increment,
    state after diffusion, event kind (0 none, 1 jump, 2 kill), jump size and drift used."""

    params: SimParams
    milstein: bool = True
    t: list = field(default_factory=list)
    h: list = field(default_factory=list)
    x: list = field(default_factory=list)
    dw: list = field(default_factory=list)
    x_mid: list = field(default_factory=list)
    kind: list = field(default_factory=list)
    u: list = field(default_factory=list)
    drift: list = field(default_factory=list)

    def record(self, t, h, x, dw, x_mid, kind, u, b):
        self.t.append(float(t))
        self.h.append(float(h))
        self.x.append(float(x))
        self.dw.append(float(dw))
        self.x_mid.append(float(x_mid))
        self.kind.append(int(kind))
        self.u.append(float(u))
        self.drift.append(float(b))

    def __len__(self) -> int:
        return len(self.t)

    def arrays(self) -> dict:
        return {k: np.asarray(getattr(self, k)) for k in ("t", "h", "x", "dw", "x_mid", "kind", "u", "drift")}

    def events(self) -> list[tuple[float, str, float]]:
        """``(time, kind, u)`` for every accepted event; ``u`` is nan for kills."""
        out = []
        for t, h_, k, u in zip(self.t, self.h, self.kind, self.u):
            if k:
                out.append((t + h_, EVENT_NAMES[k], u))
        return out

    def post_states(self) -> np.ndarray:
        a = self.arrays()
        post = a["x_mid"].copy()
        j = a["kind"] == JUMP
        post[j] *= np.exp(a["u"][j])
        post[a["kind"] == KILL] = 0.0
        return post


def make_grid(times, dt: float, start: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Union of the multiples of ``dt`` and the output ``times``; returns (grid, is_output)."""
    ts = np.asarray(times, dtype=float)
    if ts.ndim != 1 or ts.size == 0 or np.any(ts < 0) or np.any(np.diff(ts) <= 0):
        raise ValueError("times must be a non-empty strictly ascending sequence of values >= 0")
    n = int(math.floor(ts[-1] / dt + 1e-9))
    base = np.arange(n + 1) * dt
    close = np.abs(base[:, None] - ts[None, :]).min(axis=1) <= 1e-9 * dt
    grid = np.union1d(base[~close], ts)
    grid = np.union1d(grid, [start])
    is_out = np.isin(grid, ts)
    return grid, is_out


def _moment_comp(p: SimParams, order: int) -> float:
    return float(np.dot(p.masses, np.expm1(order * p.locations))) if order > 0 else 0.0


def _kernel_args(p: SimParams, config: SdeConfig, order: int):
    s_eff = math.sqrt(p.sde_sigma2)
    cum_ev = p.cum_events
    locs = p.locations if p.locations.size else np.zeros(0)
    return (p.drift_pos, p.drift_zero, s_eff, p.diffusion_weight, cum_ev, locs, p.kill_rate,
            config.diffusion_step == "milstein", config.absorb_on_kill, config.state_cap,
            float(config.max_substeps), config.thin_threshold, int(order), _moment_comp(p, order))


def simulate_sde_path(z: float, model: LevyTriplet | SimParams, config: SdeConfig = SdeConfig(),
                      horizon: float | None = None, output_times=None, seed: int = 0, path_index: int = 0,
                      order: int = 0) -> tuple[SimPath, SdeEventLog]:
    """One fully logged path; identical to row ``path_index`` of :func:`sde_ensemble`."""
    if z < 0:
        raise ValueError("z must be >= 0")
    p = _params(model, config.small_jump_cutoff)
    _require_a2(model, p)
    if output_times is None:
        if horizon is None:
            raise ValueError("give horizon or output_times")
        n = int(round(horizon / config.dt))
        output_times = np.arange(n + 1) * (horizon / n)
    ts = np.asarray(output_times, dtype=float)
    seed = check_seed(seed)
    grid, is_out = make_grid(ts, config.dt)
    log = SdeEventLog(p, config.diffusion_step == "milstein")
    vals, cv = np.empty((1, ts.size)), np.empty((1, ts.size))
    t0, status = np.empty(1), np.empty(1, dtype=np.int64)
    counts, mart = np.empty((1, 4), dtype=np.int64), np.empty((1, 4))
    _np_kernels.sde_batch(np.uint64(seed), np.array([path_index], dtype=np.uint64), float(z), grid, is_out,
                          *_kernel_args(p, config, order), vals, cv, t0, status, counts, mart,
                          recorder=log.record)
    prov = {"scheme": SCHEME_ID, "diffusion_step": config.diffusion_step, "seed": seed, "path_index": path_index,
            "config_digest": config_digest(asdict(config), model), "counts": counts[0].tolist()}
    if order:
        prov["martingales"] = mart[0].tolist()
    return SimPath(ts, vals[0], float(t0[0]), STATUS_NAMES[int(status[0])], prov), log


@dataclass
class MartingaleSeries:
    times: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    m3: np.ndarray
    integral: np.ndarray
    residual: np.ndarray


def martingale_components(log: SdeEventLog, path: SimPath | None, n: int, psi_source: PsiSource) -> MartingaleSeries:
    """Rebuild the three martingales of the order-``n`` decomposition from a path log.

    ``residual`` is ``Z^n - z^n - Psi(n) int Z^(n-1) ds - M1 - M2 - M3`` after
    every logged step.
    """
    a = log.arrays()
    m = len(log)
    ends = a["t"] + a["h"]
    if n == 0 or m == 0:
        zero = np.zeros(m)
        return MartingaleSeries(ends, zero, zero.copy(), zero.copy(), zero.copy(), zero.copy())
    p = log.params
    fn = as_exponent(psi_source)
    s2 = p.sde_sigma2
    s_eff = math.sqrt(s2)
    w1 = p.diffusion_weight
    fo = float(n)
    x, h, dw = a["x"], a["h"], a["dw"]
    pos = x > 0
    xm1 = np.ones(m) if n == 1 else x ** (n - 1)
    dm = np.zeros(m)
    dm[pos] = fo * s_eff * x[pos] ** (fo - 0.5) * dw[pos]
    if log.milstein:
        dm[pos] += 0.5 * fo * (fo - 0.5) * s2 * xm1[pos] * (dw[pos] ** 2 - h[pos])
    a_n = _moment_comp(p, n)
    line = _np_kernels.line_integral(x, a["drift"] * h, h, n)
    comp_gate = np.where(pos, line, 0.0)
    jump = a["kind"] == JUMP
    kill = a["kind"] == KILL
    jump_part = np.zeros(m)
    jump_part[jump] = np.expm1(fo * a["u"][jump]) * a["x_mid"][jump] ** fo
    kill_part = np.zeros(m)
    kill_part[kill] = -a["x_mid"][kill] ** fo
    m1 = np.cumsum(w1 * dm)
    m2 = np.cumsum((1.0 - w1) * dm - a_n * comp_gate + jump_part)
    m3 = np.cumsum(p.kill_rate * comp_gate + kill_part)
    integral = np.cumsum(line)
    z = x[0]
    post = log.post_states()
    residual = post ** fo - z ** fo - fn(n) * integral - m1 - m2 - m3
    return MartingaleSeries(ends, m1, m2, m3, integral, residual)


def sde_ensemble(model: LevyTriplet | SimParams, z: float, times, n_paths: int, seed: int,
                 config: SdeConfig = SdeConfig(), workers: int = 1, backend: str | None = None,
                 order: int = 0) -> Ensemble:
    """Simulate ``n_paths`` SDE paths observed at ``times``.

    ``extras`` carries ``cv`` (the running sum of one-step conditional means,
    an estimator of ``E Z_t`` with the scheme's bias but far less noise),
    per-path ``counts`` (clamps, jumps, kills, sub-steps) and, when ``order``
    is positive, ``martingales`` (M1, M2, M3, int Z^(order-1) ds at the last time).
    """
    if z < 0:
        raise ValueError("z must be >= 0")
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    seed = check_seed(seed)
    p = _params(model, config.small_jump_cutoff)
    _require_a2(model, p)
    ts = np.asarray(times, dtype=float)
    grid, is_out = make_grid(ts, config.dt)
    kern = _nb_kernels if resolve_backend(backend) == "numba" else _np_kernels
    vals, cv = np.empty((n_paths, ts.size)), np.empty((n_paths, ts.size))
    t0, status = np.empty(n_paths), np.empty(n_paths, dtype=np.int64)
    counts, mart = np.empty((n_paths, 4), dtype=np.int64), np.empty((n_paths, 4))
    args = _kernel_args(p, config, order)

    def work(a, b):
        ids = np.arange(a, b, dtype=np.uint64)
        kern.sde_batch(np.uint64(seed), ids, float(z), grid, is_out, *args,
                       vals[a:b], cv[a:b], t0[a:b], status[a:b], counts[a:b], mart[a:b])

    run_chunked(work, n_paths, workers)
    cfg = asdict(config)
    digest = config_digest(cfg, model, z, ts, n_paths, order)
    extras = {"cv": cv, "counts": counts}
    if order:
        extras["martingales"] = mart
        extras["order"] = order
        extras["psi_n"] = LaplaceExponent(model)(order) if isinstance(model, LevyTriplet) else None
    return Ensemble(SCHEME_ID, ts, float(z), vals, t0, status, seed, cfg, digest, extras)
