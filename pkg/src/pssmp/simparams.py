"""Reduce a triplet to the finite tables both simulators run on.

Atom measures are used as given.  A density measure is cut at ``-eps``: the
band ``(-eps, 0)`` becomes a Gaussian surrogate and ``(-inf, -eps]`` is split
into log-spaced bins, each replaced by one atom carrying the bin's mass and
placed so that ``exp(u) - 1`` keeps its bin average.  That choice leaves the
first exponential moment, and therefore ``Psi(1)``, intact up to the dropped
far tail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .levy import AtomMeasure, DensityMeasure, LaplaceExponent, LevyTriplet, validate_triplet

DEFAULT_EPS = 1e-3
DEFAULT_BINS = 200
MAX_DEPTH = 700.0


@dataclass(frozen=True)
class SimParams:
    gamma: float
    sigma2: float
    kill_rate: float
    psi1: float
    locations: np.ndarray
    masses: np.ndarray
    # drift of xi once jumps in [-1, -eps] are uncompensated
    xi_drift: float
    # sigma^2 plus the small-jump surrogate variance in xi
    xi_sigma2: float
    # sigma^2 plus the small-jump surrogate variance in the state equation
    sde_sigma2: float
    approximate: bool = False
    eps: float = 0.0

    @property
    def jump_rate(self) -> float:
        return float(self.masses.sum())

    @property
    def cum_masses(self) -> np.ndarray:
        return np.cumsum(self.masses)

    @property
    def cum_events(self) -> np.ndarray:
        """Cumulative masses of jumps followed by the killing rate (last)."""
        return np.cumsum(np.append(self.masses, self.kill_rate))

    @property
    def compensator(self) -> float:
        """int (e^u - 1) Pi(du) over the simulated atoms."""
        return float(np.dot(self.masses, np.expm1(self.locations)))

    @property
    def drift_pos(self) -> float:
        return self.psi1 - self.compensator + self.kill_rate

    @property
    def drift_zero(self) -> float:
        return self.psi1

    @property
    def diffusion_weight(self) -> float:
        """Share of the state-equation noise that is genuine Brownian motion."""
        return 1.0 if self.sde_sigma2 == 0 else self.sigma2 / self.sde_sigma2


def _bin_edges(jm: DensityMeasure, eps: float, n_bins: int) -> np.ndarray:
    lo = max(jm.lower, -MAX_DEPTH)
    hi = min(jm.upper, -eps)
    if not lo < hi:
        return np.empty(0)
    pieces = []
    half = max(n_bins // 2, 1)
    if hi > -1.0:
        a = max(lo, -1.0)
        pieces.append(-np.geomspace(-a, -hi, half + 1))
    if lo < -1.0:
        b = min(hi, -1.0)
        pieces.append(-np.geomspace(-lo, -b, half + 1))
    edges = np.unique(np.concatenate(pieces))
    return edges


def build_params(t: LevyTriplet, eps: float = DEFAULT_EPS, n_bins: int = DEFAULT_BINS,
                 validate: bool = True) -> SimParams:
    if validate:
        validate_triplet(t).raise_if_invalid()
    if eps <= 0:
        raise ValueError("small-jump cutoff eps must be > 0")
    psi1 = LaplaceExponent(t)(1.0)
    jm = t.jump_measure
    if isinstance(jm, AtomMeasure):
        locs = np.array(jm.locations, dtype=float)
        masses = np.array(jm.masses, dtype=float)
        keep = masses > 0
        locs, masses = locs[keep], masses[keep]
        small = np.abs(locs) <= 1.0
        a = t.gamma - float(np.dot(masses[small], locs[small]))
        return SimParams(t.gamma, t.sigma2, t.kill_rate, psi1, locs, masses, a, t.sigma2, t.sigma2)

    edges = _bin_edges(jm, eps, n_bins)
    locs, masses = [], []
    comp_small = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        m = jm.integrate(lambda u: 1.0, lo, hi)
        if m <= 0:
            continue
        e1 = jm.integrate(math.expm1, lo, hi)
        if lo >= -1.0:
            comp_small += jm.integrate(lambda u: u, lo, hi)
        ratio = min(max(1.0 + e1 / m, math.exp(lo)), math.exp(hi))
        locs.append(math.log(ratio))
        masses.append(m)
    # mass beyond MAX_DEPTH behaves like killing of xi at the attained level
    if jm.lower < -MAX_DEPTH:
        tail = jm.integrate(lambda u: 1.0, -math.inf, -MAX_DEPTH)
        if tail > 0:
            locs.append(-MAX_DEPTH)
            masses.append(tail)
    band_hi = min(jm.upper, 0.0)
    band_lo = max(jm.lower, -eps)
    if band_lo < band_hi:
        var_xi = jm.integrate(lambda u: u * u, band_lo, band_hi)
        var_sde = jm.integrate(lambda u: math.expm1(u) ** 2, band_lo, band_hi)
    else:
        var_xi = var_sde = 0.0
    a = t.gamma - comp_small
    return SimParams(t.gamma, t.sigma2, t.kill_rate, psi1, np.array(locs), np.array(masses), a,
                     t.sigma2 + var_xi, t.sigma2 + var_sde, True, eps)
