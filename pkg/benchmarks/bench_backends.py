"""Time the numba kernels against the numpy fallback for both simulators.

    python3 benchmarks/bench_backends.py [--paths N] [--repeat R]

The first numba call includes JIT compilation (or a cache load), so it is run
once before timing.  Results from the two backends are also compared.
"""

import argparse
import math
import time

import numpy as np

from pssmp import AtomMeasure, LevyPathConfig, LevyTriplet, SdeConfig, lamperti_ensemble, sde_ensemble

MODELS = {
    "brownian": LevyTriplet(1.0, 2.0),
    "atoms": LevyTriplet(2.0, 0.0, AtomMeasure.from_pairs([(-math.log(2.0), 1.0)])),
    "atoms+killing": LevyTriplet(1.0, 0.5, AtomMeasure.from_pairs([(-0.4, 1.0), (-1.5, 0.5)]), 0.3),
}


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - start)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=1000)
    ap.add_argument("--dt", type=float, default=1e-3)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    times = [0.5, 1.0]
    runners = {
        "sde": lambda m, b: sde_ensemble(m, 1.0, times, args.paths, 1, SdeConfig(dt=args.dt), backend=b),
        "lamperti": lambda m, b: lamperti_ensemble(m, 1.0, times, args.paths, 1, LevyPathConfig(dt=args.dt),
                                                   backend=b),
    }
    print(f"paths={args.paths} dt={args.dt} best of {args.repeat}")
    print(f"{'scheme':<9} {'model':<14} {'numba s':>9} {'numpy s':>9} {'speedup':>8} {'max |diff|':>11}")
    for scheme, run in runners.items():
        for name, model in MODELS.items():
            run(model, "numba")
            t_nb, a = best_of(lambda: run(model, "numba"), args.repeat)
            t_np, b = best_of(lambda: run(model, "numpy"), args.repeat)
            diff = np.nanmax(np.abs(a.values - b.values))
            print(f"{scheme:<9} {name:<14} {t_nb:>9.3f} {t_np:>9.3f} {t_np / t_nb:>7.1f}x {diff:>11.1e}")


if __name__ == "__main__":
    main()
