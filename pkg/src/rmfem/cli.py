"""Command line driver: `rmfem run <experiment> [overrides]`.

Experiments come from a compiled-in catalog; outputs (CSV/JSON plus a
manifest with all resolved parameters) land in the --out directory.
Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

import argparse
import os
import sys

from . import experiments


DEFAULT_SEEDS = {"adapt1d": 1, "adapt2d-arctan": 7, "adapt2d-lshape": 11,
                 "convergence": 0, "bip1d-smooth": 0, "bip1d-disc": 0, "bip2d-smoke": 5}


def _pick(value, default):
    return default if value is None else value


def _runner(name):
    if name == "adapt1d":
        return lambda out, a, seed: experiments.run_adapt1d(
            out, seed=seed, gamma=_pick(a.gamma, 1e-2), p=_pick(a.p, 3.0),
            n_realizations=_pick(a.nmc, 20), n_initial=_pick(a.n, 30),
            max_iterations=a.max_iterations, threads=a.threads)
    if name in ("adapt2d-arctan", "adapt2d-lshape"):
        arctan = name == "adapt2d-arctan"
        return lambda out, a, seed: experiments.run_adapt2d(
            out, name, seed=seed, gamma=_pick(a.gamma, 0.1 if arctan else 0.06),
            n_per_side=_pick(a.n, 5 if arctan else 3), p=_pick(a.p, 3.0),
            n_realizations=_pick(a.nmc, 50),
            max_iterations=a.max_iterations, threads=a.threads)
    if name == "convergence":
        return lambda out, a, seed: experiments.run_convergence(
            out, seed=seed, p_values=(a.p,) if a.p is not None else (1.0, 2.0, 3.0),
            n_realizations=_pick(a.nmc, 200), threads=a.threads)
    if name in ("bip1d-smooth", "bip1d-disc"):
        return lambda out, a, seed: experiments.run_bip1d(
            out, which=name, seed=seed,
            mesh_sizes=(a.n,) if a.n is not None else (10, 20, 40),
            n_steps=_pick(a.steps, 20_000), n_outer=_pick(a.chains, 10),
            n_kl=a.nkl, threads=a.threads)
    if name == "bip2d-smoke":
        return lambda out, a, seed: experiments.run_bip2d_smoke(
            out, seed=seed, n_per_side=_pick(a.n, 10),
            n_steps=_pick(a.steps, 2000), n_outer=_pick(a.chains, 2),
            threads=a.threads)
    return None


EXPERIMENTS = tuple(DEFAULT_SEEDS)


def build_parser():
    parser = argparse.ArgumentParser(prog="rmfem",
                                     description="random-mesh FEM experiment driver")
    sub = parser.add_subparsers(dest="command")
    run = sub.add_parser("run", help="run a catalog experiment")
    run.add_argument("experiment", nargs="?", help="experiment name")
    run.add_argument("-e", "--experiment", dest="experiment_flag", default=None)
    run.add_argument("--seed", type=int, default=None,
                     help="RNG seed (default: experiment-specific)")
    run.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    run.add_argument("--out", default=None, help="output directory (default ./runs/<name>)")
    run.add_argument("--gamma", type=float, default=None)
    run.add_argument("--p", type=float, default=None)
    run.add_argument("--nmc", type=int, default=None, help="Monte Carlo realizations")
    run.add_argument("--n", type=int, default=None, help="mesh size / subdivisions")
    run.add_argument("--steps", type=int, default=None, help="MCMC steps per chain")
    run.add_argument("--chains", type=int, default=None, help="outer chains")
    run.add_argument("--nkl", type=int, default=None, help="KL truncation")
    run.add_argument("--max-iterations", type=int, default=30)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command != "run":
        parser.print_help()
        return 2
    name = args.experiment_flag or args.experiment
    if name is None:
        print("error: no experiment given", file=sys.stderr)
        return 2
    runner = _runner(name)
    if runner is None:
        print(f"error: unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}",
              file=sys.stderr)
        return 2
    seed = args.seed if args.seed is not None else DEFAULT_SEEDS[name]
    out_dir = args.out or os.path.join("runs", name)
    os.makedirs(out_dir, exist_ok=True)
    try:
        manifest = runner(out_dir, args, seed)
    except Exception as exc:  # pragma: no cover - defensive
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(manifest['outputs']) + 1} files to {out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
