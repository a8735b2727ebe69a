"""Files written by simulation runs.

Per dumped path: ``path_<i>.csv`` with columns ``t,Z`` and, for the SDE
scheme, ``events_<i>.csv`` with ``t,kind,u``.  ``paths.json`` is the sidecar
(seed, scheme, config digest, model) and ``summary.json`` holds ensemble
statistics at the horizon.  Floats are written with ``repr`` so a rerun with
the same seed reproduces every byte.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .ensemble import STATUS_NAMES, Ensemble


def _num(x: float) -> str:
    return repr(float(x))


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n")


def write_path_csv(path: Path, times, values) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "Z"])
        for t, z in zip(times, values):
            w.writerow([_num(t), _num(z)])


def write_events_csv(path: Path, events) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "kind", "u"])
        for t, kind, u in events:
            w.writerow([_num(t), kind, "" if math.isnan(u) else _num(u)])


def summarize(ens: Ensemble) -> dict:
    keep = ~ens.aborted
    last = ens.values[keep, -1]
    t0 = ens.t0[keep]
    finite_t0 = t0[np.isfinite(t0)]
    return {
        "scheme": ens.scheme,
        "paths": ens.n_paths,
        "z": ens.z,
        "horizon": float(ens.times[-1]),
        "mean": float(last.mean()) if last.size else math.nan,
        "variance": (0.0 if np.ptp(last) == 0.0 else float(last.var(ddof=1))) if last.size > 1 else math.nan,
        "absorbed_fraction": ens.absorbed_fraction,
        "hit_zero_fraction": float(np.isfinite(t0).mean()) if t0.size else math.nan,
        "mean_T0_given_hit": float(finite_t0.mean()) if finite_t0.size else None,
        "aborted_fraction": ens.aborted_fraction,
        "status_counts": {STATUS_NAMES[k]: int(np.sum(ens.status == k)) for k in STATUS_NAMES},
    }


def write_run(out: Path, ens: Ensemble, model_doc: dict, n_dump: int, events: dict | None = None,
              backend: str | None = None) -> dict:
    """Write dumps, sidecar and summary into directory ``out``; returns the summary."""
    out.mkdir(parents=True, exist_ok=True)
    n_dump = min(n_dump, ens.n_paths)
    width = max(5, len(str(max(n_dump - 1, 0))))
    for i in range(n_dump):
        write_path_csv(out / f"path_{i:0{width}d}.csv", ens.times, ens.values[i])
        if events is not None:
            write_events_csv(out / f"events_{i:0{width}d}.csv", events[i])
    sidecar = ens.provenance()
    sidecar.update(model=model_doc, z=ens.z, paths=ens.n_paths, dumped=n_dump, backend=backend,
                   times=ens.times)
    write_json(out / "paths.json", sidecar)
    summary = summarize(ens)
    write_json(out / "summary.json", summary)
    return summary
