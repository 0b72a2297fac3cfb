"""Command-line entry point: ``activesense {solve,simulate,infer,risk,export-map}``."""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from typing import Optional, Sequence

import numpy as np

from .forward import ConvergenceError, solve_optimal, termination_set
from .formats import (
    ConfigError,
    atomic_write,
    chain_csv,
    load_dataset,
    load_prefs,
    load_problem,
    policy_csv,
    save_dataset,
    strategy_map_csv,
)
from .inverse import (
    DEFAULT_BURN_IN,
    DEFAULT_RHO_GRID,
    DEFAULT_SAMPLES,
    DataInconsistency,
    Lattice,
    PolicyCache,
    PosteriorModel,
    PriorSpec,
    map_point,
    mcmc_sample,
)
from .problem import Criterion
from .simulate import EpisodeLimitError, Strategy, risk_estimate, simulate_dataset

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CONVERGENCE = 3
EXIT_DATA = 4


def _emit(doc: dict) -> None:
    print(json.dumps(doc, sort_keys=True))


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")
    return code


def _parse_rho_grid(spec: Optional[str]) -> tuple[float, ...]:
    if not spec:
        return DEFAULT_RHO_GRID
    try:
        return tuple(float(x) for x in spec.split(","))
    except ValueError:
        raise ConfigError(f"rho grid {spec!r} is not a comma-separated list of numbers") from None


def _load_strategy_prefs(args, problem):
    prefs = load_prefs(args.prefs, problem)
    changes = {}
    if getattr(args, "criterion", None):
        changes["criterion"] = Criterion.parse(args.criterion)
    if getattr(args, "rho", None) is not None:
        changes["rho"] = args.rho
    return prefs.replace(**changes) if changes else prefs


# -- verbs ----------------------------------------------------------------------


def cmd_solve(args) -> int:
    problem = load_problem(args.problem)
    prefs = load_prefs(args.prefs, problem)
    policy = solve_optimal(problem, prefs, args.grid, args.tol)
    atomic_write(args.out, policy_csv(policy, problem))
    if args.map_out:
        atomic_write(args.map_out, strategy_map_csv(policy, problem))
    tmap = termination_set(policy)
    regions = {problem.theta_names[k]: int(len(tmap.region(k))) for k in range(problem.n_theta)}
    cont = ~tmap.terminate
    acq = {problem.lambda_names[l]: int(np.sum(cont & (tmap.acquisition == l))) for l in range(problem.n_lambda)}
    _emit(
        {
            "command": "solve",
            "grid_points": len(policy.grid),
            "iterations": policy.iterations,
            "residual": policy.residual,
            "gamma": policy.gamma,
            "value_at_mu0": policy.value(problem.mu0),
            "termination_points": regions,
            "acquisition_points": acq,
            "out": args.out,
        }
    )
    return EXIT_OK


def cmd_export_map(args) -> int:
    problem = load_problem(args.problem)
    prefs = load_prefs(args.prefs, problem)
    policy = solve_optimal(problem, prefs, args.grid, args.tol)
    atomic_write(args.out, strategy_map_csv(policy, problem))
    _emit({"command": "export-map", "grid_points": len(policy.grid), "out": args.out})
    return EXIT_OK


def cmd_simulate(args) -> int:
    problem = load_problem(args.problem)
    prefs = _load_strategy_prefs(args, problem)
    strategy = Strategy(prefs)
    if prefs.criterion is Criterion.OPTIMAL:
        strategy = Strategy(prefs, solve_optimal(problem, prefs, args.grid))
    data = simulate_dataset(problem, strategy, args.n, args.seed, args.prior_mode, args.t_max)
    save_dataset(data, args.out)
    _emit({"command": "simulate", "episodes": len(data), "seed": args.seed, "out": args.out})
    return EXIT_OK


def cmd_infer(args) -> int:
    problem = load_problem(args.problem)
    if not os.path.exists(args.episodes):
        raise FileNotFoundError(f"episodes file not found: {args.episodes}")
    data = load_dataset(args.episodes, problem).without_truth()
    if data.fingerprint and data.fingerprint != problem.fingerprint():
        raise DataInconsistency(
            f"episode log was generated for problem {data.fingerprint}, not {problem.fingerprint()}"
        )
    criteria = [Criterion.parse(c) for c in args.criterion]
    rho_grid = _parse_rho_grid(args.rho_grid)
    priors = PriorSpec.uniform_over(criteria)
    cache = PolicyCache()
    os.makedirs(args.out_dir, exist_ok=True)
    summary = {"command": "infer", "episodes": len(data), "criteria": {}}
    for i, kappa in enumerate(criteria):
        lattice = Lattice(kappa, problem.n_theta, problem.n_lambda, args.resolution, rho_grid)
        model = PosteriorModel(problem, data, lattice, priors, cache, G=args.grid)
        chain = mcmc_sample(
            problem, data, kappa, lattice=lattice, n_samples=args.samples, burn_in=args.burn_in,
            rng=np.random.default_rng([args.seed, i]), model=model,
        )
        chain_path = os.path.join(args.out_dir, f"chain-{kappa.value}.csv")
        atomic_write(chain_path, chain_csv(chain))
        entry = {
            "chain": chain_path,
            "retained": int(len(chain.retained)),
            "acceptance_rate": chain.acceptance_rate,
            "posterior_mean": dict(zip(lattice.axis_names + ["rho"], np.column_stack([chain.etas(), chain.rhos()]).mean(axis=0).tolist())),
        }
        if args.map:
            point, value = map_point(model, [chain])
            entry["map"] = {
                "eta": dict(zip(lattice.axis_names, lattice.eta(point).tolist())),
                "rho": lattice.rho(point),
                "log_posterior": value,
            }
        summary["criteria"][kappa.value] = entry
    atomic_write(os.path.join(args.out_dir, "summary.json"), json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _emit(summary)
    return EXIT_OK


_PERTURB = re.compile(r"^(eta_[abcd])\[(\d+)\]=([-+]?[0-9.eE+-]+)$")


def _perturbed(prefs, spec: str):
    m = _PERTURB.match(spec.strip())
    if not m:
        raise ConfigError(f"perturbation {spec!r} must look like eta_a[0]=+0.2")
    name, idx, delta = m.group(1), int(m.group(2)), float(m.group(3))
    values = getattr(prefs, name)
    if values is None or idx >= len(values):
        raise ConfigError(f"perturbation {spec!r} addresses a missing coordinate")
    values = values.copy()
    values[idx] = max(values[idx] + delta, 0.0)
    return prefs.replace(**{name: values})


def cmd_risk(args) -> int:
    problem = load_problem(args.problem)
    prefs = _load_strategy_prefs(args, problem)
    truth_prefs = load_prefs(args.prefs_true, problem) if args.prefs_true else prefs
    specs = [("base", prefs)] + [(s, _perturbed(prefs, s)) for s in args.perturb]
    for label, sp in specs:
        strategy = Strategy(sp)
        if sp.criterion is Criterion.OPTIMAL:
            strategy = Strategy(sp, solve_optimal(problem, sp, args.grid))
        est = risk_estimate(problem, strategy, truth_prefs, args.n, args.seed, args.prior_mode)
        _emit({"command": "risk", "strategy": label, "mean": est.mean, "stderr": est.stderr, "n": est.n})
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")

    parser = argparse.ArgumentParser(prog="activesense", description="Forward and inverse active sensing under deadlines.")
    sub = parser.add_subparsers(dest="command", required=True)

    def problem_args(p, prefs=True):
        p.add_argument("--problem", required=True, help="problem config (JSON)")
        if prefs:
            p.add_argument("--prefs", required=True, help="preferences config (JSON)")
        p.add_argument("--grid", type=int, default=60, help="simplex grid resolution G")

    p = sub.add_parser("solve", parents=[common], help="value iteration; writes the policy table")
    problem_args(p)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out", required=True, help="policy table (CSV)")
    p.add_argument("--map-out", help="optional strategy-map table (CSV)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("export-map", parents=[common], help="grid point -> optimal action label table")
    problem_args(p)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_map)

    p = sub.add_parser("simulate", parents=[common], help="simulate a Boltzmann agent; writes an episode log")
    problem_args(p)
    p.add_argument("--criterion", help="override the criterion in the preferences file")
    p.add_argument("--rho", type=float, help="override the inverse temperature")
    p.add_argument("--n", type=int, required=True, help="number of episodes")
    p.add_argument("--prior-mode", choices=["fixed", "uniform"], default="fixed")
    p.add_argument("--t-max", type=int, default=1000)
    p.add_argument("--out", required=True, help="episode log (JSON lines)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("infer", parents=[common], help="lattice MCMC (and MAP) over preferences")
    problem_args(p, prefs=False)
    p.add_argument("--episodes", required=True, help="episode log (JSON lines)")
    p.add_argument("--criterion", action="append", default=None, help="criterion to fit; repeatable (default optimal)")
    p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    p.add_argument("--burn-in", type=int, default=DEFAULT_BURN_IN)
    p.add_argument("--resolution", type=float, default=0.05)
    p.add_argument("--rho-grid", help="comma-separated inverse temperatures")
    p.add_argument("--map", action="store_true", help="also compute the MAP estimate")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("risk", parents=[common], help="Monte-Carlo ground-truth risk of a strategy")
    problem_args(p)
    p.add_argument("--prefs-true", help="preferences defining the loss (default: the strategy's own)")
    p.add_argument("--criterion")
    p.add_argument("--rho", type=float)
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--prior-mode", choices=["fixed", "uniform"], default="fixed")
    p.add_argument("--perturb", action="append", default=[], help="extra strategy, e.g. eta_a[0]=+0.2; repeatable")
    p.set_defaults(func=cmd_risk)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "criterion", None) is None and args.command == "infer":
        args.criterion = ["optimal"]
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        return _fail("config", str(exc), EXIT_CONFIG)
    except ValueError as exc:
        if isinstance(exc, DataInconsistency):
            return _fail("data", str(exc), EXIT_DATA)
        return _fail("config", str(exc), EXIT_CONFIG)
    except (ConvergenceError, EpisodeLimitError) as exc:
        return _fail("convergence", str(exc), EXIT_CONVERGENCE)


if __name__ == "__main__":
    sys.exit(main())
