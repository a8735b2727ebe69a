"""Shared containers and the chunked thread-pool runner for path ensembles."""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, is_dataclass
from typing import Callable

import numpy as np

from ._nb_kernels import ABORTED, FLOOR, KILLED, OK, OVERFLOW

STATUS_NAMES = {OK: "ok", KILLED: "killed", FLOOR: "floor", ABORTED: "aborted", OVERFLOW: "overflow"}
CHUNK = 2048


class EnsembleError(RuntimeError):
    """Too many paths aborted for the ensemble to be trusted."""


def config_digest(*parts) -> str:
    """Short sha256 over canonical JSON of configs, models and settings."""
    def norm(obj):
        if is_dataclass(obj):
            return asdict(obj)
        if hasattr(obj, "to_dict"):
            return obj.to_dict()
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        return obj

    blob = json.dumps([norm(p) for p in parts], sort_keys=True, default=repr)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class SimPath:
    """One path of ``Z`` on its output times.  ``T0`` is ``inf`` when zero was not reached."""

    times: np.ndarray
    values: np.ndarray
    T0: float = math.inf
    status: str = "ok"
    provenance: dict = field(default_factory=dict)


@dataclass
class Ensemble:
    """Output of an ensemble run; row ``i`` belongs to path index ``i``."""

    scheme: str
    times: np.ndarray
    z: float
    values: np.ndarray
    t0: np.ndarray
    status: np.ndarray
    seed: int
    config: dict
    digest: str
    extras: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def aborted(self) -> np.ndarray:
        return (self.status == ABORTED) | (self.status == OVERFLOW)

    @property
    def aborted_fraction(self) -> float:
        return float(self.aborted.mean()) if self.n_paths else 0.0

    @property
    def absorbed_fraction(self) -> float:
        """Share of paths that were at zero at the last output time."""
        last = self.values[:, -1]
        return float(np.mean(last == 0.0)) if self.n_paths else 0.0

    def check(self, max_aborted: float = 0.01) -> "Ensemble":
        frac = self.aborted_fraction
        if frac > max_aborted:
            counts = {STATUS_NAMES[k]: int(np.sum(self.status == k)) for k in STATUS_NAMES}
            raise EnsembleError(f"{frac:.2%} of {self.n_paths} paths aborted (limit {max_aborted:.0%}); "
                                f"status counts {counts}; consider a larger state cap or horizon")
        return self

    def path(self, i: int) -> SimPath:
        return SimPath(self.times.copy(), self.values[i].copy(), float(self.t0[i]),
                       STATUS_NAMES[int(self.status[i])], self.provenance(i))

    def provenance(self, i: int | None = None) -> dict:
        doc = {"scheme": self.scheme, "seed": self.seed, "config_digest": self.digest, "config": self.config}
        if i is not None:
            doc["path_index"] = int(i)
        return doc


def run_chunked(work: Callable[[int, int], None], n_paths: int, workers: int = 1, chunk: int = CHUNK) -> None:
    """Call ``work(start, stop)`` over fixed path ranges.

    Chunks are fixed by ``chunk`` alone and every path draws from its own
    addressed streams, so the result cannot depend on ``workers``.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    bounds = [(s, min(s + chunk, n_paths)) for s in range(0, n_paths, chunk)]
    if workers == 1 or len(bounds) <= 1:
        for s, e in bounds:
            work(s, e)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for fut in [pool.submit(work, s, e) for s, e in bounds]:
            fut.result()
