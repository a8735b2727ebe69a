"""Command-line front end: ``pssmp {psi,moments,simulate,verify}``.

Exit codes: 0 success (all checks pass), 1 a check failed or the ensemble was
invalidated, 2 bad input (model file, flags, violated preconditions).
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from ._accel import BACKENDS, resolve_backend
from .ensemble import EnsembleError
from .lamperti import LevyPathConfig
from .levy import AssumptionError, LaplaceExponent, ModelError, check_a2, classify_regime, cramer_root, load_triplet
from .moments import MomentOverflowError, exact_moment_table
from .output import write_json, write_run
from .rng import SEED_MAX
from .sde import SdeConfig, simulate_sde_path
from .verify import (DEFAULT_K, compare_to_formula, cross_validate, estimate_moments, martingale_zero_mean_test,
                     run_ensemble, scaling_check)


class UsageError(Exception):
    """Precondition violated by the command-line input (exit 2)."""


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}")
    if not 0 <= v <= SEED_MAX:
        raise argparse.ArgumentTypeError("seed must be in [0, 2**64)")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _nonneg(text: str) -> float:
    v = float(text)
    if not (v >= 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"expected a finite value >= 0, got {text}")
    return v


def _positive(text: str) -> float:
    v = float(text)
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"expected a finite value > 0, got {text}")
    return v


def _common(p: argparse.ArgumentParser, seed: bool, seed_required: bool = True) -> None:
    p.add_argument("--model", required=True, type=Path, help="model JSON file (gamma, sigma2, q, jumps)")
    p.add_argument("--out", type=Path, help="output file or directory (default: standard output where possible)")
    if seed:
        p.add_argument("--seed", type=_seed, required=seed_required,
                       help="master seed, an integer in [0, 2**64); paths are keyed by (seed, index)")
        p.add_argument("--workers", type=_positive_int, default=1,
                       help="threads for path generation; results do not depend on it (default 1)")
        p.add_argument("--backend", choices=("auto",) + BACKENDS, default="auto",
                       help="simulation kernels: numba, numpy, or auto (numba unless PSSMP_DISABLE_NUMBA is set)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pssmp", allow_abbrev=False,
                                     description="Exact moments and simulation of index-1 self-similar Markov "
                                                 "processes driven by spectrally negative Levy processes.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("psi", allow_abbrev=False, help="evaluate the Laplace exponent")
    _common(p, seed=False)
    p.add_argument("--lambdas", type=_nonneg, nargs="+", default=[0.0, 1.0, 2.0, 3.0],
                   help="arguments lambda >= 0 (default 0 1 2 3)")

    p = sub.add_parser("moments", allow_abbrev=False, help="tabulate exact moments E_z(Z_t^n)")
    _common(p, seed=False)
    p.add_argument("--z", type=_nonneg, nargs="+", default=[1.0], help="initial states (default 1)")
    p.add_argument("--t", type=_nonneg, nargs="+", default=[1.0], help="times (default 1)")
    p.add_argument("--n-max", type=_positive_int, default=3, help="highest order (default 3)")
    p.add_argument("--mode", choices=("closed", "recursion"), default="closed",
                   help="closed-form product ladder or the integral recursion (default closed)")
    p.add_argument("--format", choices=("csv", "json"), help="output format (default from --out suffix, else csv)")

    p = sub.add_parser("simulate", allow_abbrev=False, help="simulate an ensemble and dump paths")
    _common(p, seed=True)
    p.add_argument("--scheme", choices=("lamperti", "sde"), default="sde", help="simulator (default sde)")
    p.add_argument("--z", type=_nonneg, default=1.0, help="initial state (default 1)")
    p.add_argument("--horizon", type=_positive, default=1.0, help="time horizon (default 1)")
    p.add_argument("--dt", type=_positive, default=1e-3, help="grid step (default 1e-3)")
    p.add_argument("--paths", type=_positive_int, default=1000, help="number of paths (default 1000)")
    p.add_argument("--points", type=_positive_int, default=100, help="output intervals per path (default 100)")
    p.add_argument("--dump", type=int, default=5, help="paths written as CSV (default 5)")
    p.add_argument("--state-cap", type=_positive, default=1e8, help="SDE abort threshold (default 1e8)")
    p.add_argument("--diffusion-step", choices=("milstein", "euler"), default="milstein",
                   help="SDE diffusion update (default milstein)")
    p.add_argument("--absorb-on-kill", action="store_true", help="SDE: freeze paths at zero after a killing event")
    p.add_argument("--xi-horizon", type=_positive, default=1000.0,
                   help="Lamperti: longest simulated Levy time before a path is aborted (default 1000)")

    p = sub.add_parser("verify", allow_abbrev=False, help="run a verification suite and write a report")
    _common(p, seed=True, seed_required=False)
    p.add_argument("--suite", choices=("moments", "scaling", "martingale", "cross"), required=True)
    p.add_argument("--scheme", choices=("lamperti", "sde"), default="sde", help="moments suite simulator")
    p.add_argument("--z", type=_nonneg, default=1.0, help="initial state (default 1)")
    p.add_argument("--t", type=_nonneg, nargs="+", default=[1.0], help="times (default 1)")
    p.add_argument("--n-max", type=_positive_int, default=2, help="highest moment order (default 2)")
    p.add_argument("--n", type=_positive_int, default=2, help="martingale suite order (default 2)")
    p.add_argument("--paths", type=_positive_int, default=10000, help="paths per ensemble (default 10000)")
    p.add_argument("--dt", type=_positive, default=1e-3, help="grid step (default 1e-3)")
    p.add_argument("--k", type=_positive, default=DEFAULT_K, help=f"z-score threshold (default {DEFAULT_K})")
    p.add_argument("--c", type=_positive, nargs="+", default=[0.5, 2.0, 10.0], help="scaling factors")
    p.add_argument("--tol", type=_positive, default=1e-12, help="scaling suite residual tolerance (default 1e-12)")
    return parser


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def cmd_psi(args) -> int:
    t = load_triplet(args.model)
    fn = LaplaceExponent(t)
    rows = ["lambda,psi"] + [f"{lam!r},{fn(lam)!r}" for lam in args.lambdas]
    a2 = check_a2(fn)
    rows.append(f"# A2 (Psi(1) > 0): {'indeterminate' if a2 is None else ('holds' if a2 else 'fails')}")
    if a2:
        root = cramer_root(fn)
        rows.append(f"# cramer_root: {'none' if root is None else repr(root)}")
    rep = classify_regime(t)
    rows.append(f"# regime: {rep.regime}; hits_zero: {str(rep.hits_zero).lower()}")
    _emit("\n".join(rows) + "\n", args.out)
    return 0


def cmd_moments(args) -> int:
    t = load_triplet(args.model)
    table = exact_moment_table(LaplaceExponent(t), range(1, args.n_max + 1), args.t, args.z, args.mode)
    fmt = args.format or ("json" if args.out is not None and args.out.suffix == ".json" else "csv")
    _emit(table.to_json() if fmt == "json" else table.to_csv(), args.out)
    return 0


def cmd_simulate(args) -> int:
    t = load_triplet(args.model)
    if args.scheme == "lamperti" and not args.z > 0:
        raise UsageError("the Lamperti scheme needs --z > 0; use --scheme sde to start from zero")
    if args.out is None:
        raise UsageError("simulate needs --out DIR for the path dumps")
    times = np.linspace(0.0, args.horizon, args.points + 1)
    if args.scheme == "sde":
        config = SdeConfig(dt=args.dt, state_cap=args.state_cap, diffusion_step=args.diffusion_step,
                           absorb_on_kill=args.absorb_on_kill)
    else:
        config = LevyPathConfig(dt=args.dt, horizon=max(args.xi_horizon, args.dt))
    backend = resolve_backend(args.backend)
    ens = run_ensemble(args.scheme, t, args.z, times, args.paths, config, args.seed, args.workers, backend)
    events = None
    n_dump = max(0, min(args.dump, args.paths))
    if args.scheme == "sde":
        events = {i: simulate_sde_path(args.z, t, config, output_times=times, seed=args.seed, path_index=i)[1].events()
                  for i in range(n_dump)}
    summary = write_run(args.out, ens, t.to_dict(), n_dump, events, backend)
    sys.stdout.write(f"mean={summary['mean']!r} variance={summary['variance']!r} "
                     f"absorbed_fraction={summary['absorbed_fraction']!r} "
                     f"aborted_fraction={summary['aborted_fraction']!r}\n")
    ens.check()
    return 0


def cmd_verify(args) -> int:
    t = load_triplet(args.model)
    fn = LaplaceExponent(t)
    if args.suite != "scaling" and args.seed is None:
        raise UsageError(f"the {args.suite} suite is stochastic and needs an explicit --seed")
    if args.suite == "scaling":
        worst = max(scaling_check(fn, args.z, tt, c, args.n_max) for tt in args.t for c in args.c)
        ok = worst <= args.tol
        doc = {"suite": "scaling", "max_residual": worst, "tolerance": args.tol, "passed": ok,
               "exit_code": 0 if ok else 1, "c": args.c, "t": args.t, "z": args.z, "n_max": args.n_max}
        text = f"scaling: max relative residual {worst:.3e} (tolerance {args.tol:g}) {'PASS' if ok else 'FAIL'}\n"
    elif args.suite == "moments":
        if args.scheme == "lamperti" and classify_regime(t).hits_zero:
            raise UsageError("the model hits zero, where the Lamperti process is absorbed and the formula does not "
                             "apply; use --scheme sde")
        config = SdeConfig(dt=args.dt) if args.scheme == "sde" else LevyPathConfig(dt=args.dt)
        table = estimate_moments(args.scheme, t, args.z, args.t, args.n_max, args.paths, config, args.seed,
                                 args.workers, resolve_backend(args.backend))
        rep = compare_to_formula(table, fn, args.k)
        doc, text = rep.to_dict(), rep.to_text()
    elif args.suite == "martingale":
        rep = martingale_zero_mean_test(t, args.z, args.n, max(args.t), args.paths, SdeConfig(dt=args.dt),
                                        args.seed, args.k, args.workers, resolve_backend(args.backend))
        doc, text = rep.to_dict(), rep.to_text()
    else:
        rep = cross_validate(t, args.z, args.t, args.n_max, args.paths, args.seed, LevyPathConfig(dt=args.dt),
                             SdeConfig(dt=args.dt), args.k, args.workers, resolve_backend(args.backend))
        doc, text = rep.to_dict(), rep.to_text()
    sys.stdout.write(text)
    if args.out is not None:
        write_json(args.out, doc)
    return doc["exit_code"]


COMMANDS = {"psi": cmd_psi, "moments": cmd_moments, "simulate": cmd_simulate, "verify": cmd_verify}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except EnsembleError as exc:
        print(f"error: ensemble invalid: {exc}", file=sys.stderr)
        return 2 if args.command == "verify" else 1
    except AssumptionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ModelError, UsageError, MomentOverflowError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
