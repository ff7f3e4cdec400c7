"""Command-line entry point.

Exit codes: 0 success, 1 usage or parse error, 2 infeasible solve, 3 validated
satisfaction below ``1 - alpha``.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import io
from .dynamics import mean_trajectory
from .errors import DomainError, ProblemFileError, ShapeError
from .problem import ChanceProblem
from .solver import ACSConfig, Solution, acs_solve, scenario_solve
from .validation import monte_carlo_validate

log = logging.getLogger("randctl")

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_UNSAFE = 0, 1, 2, 3
METHOD_CHOICES = ("vp", "cantelli", "scenario")
DEFAULT_DELTA = 1e-8
DEFAULT_SAMPLES = 100_000


def run_method(problem: ChanceProblem, method: str, seed: int, delta: float, config: ACSConfig) -> Solution:
    if method == "scenario":
        return scenario_solve(problem, delta, np.random.default_rng(seed), tol=config.subproblem_tol)
    return acs_solve(problem.with_(method=method), config, method=method)


def _config(problem: ChanceProblem, args) -> ACSConfig:
    config = io.acs_config_of(problem)
    if getattr(args, "max_iter", None):
        config = ACSConfig(**{**config.to_dict(), "max_iterations": args.max_iter})
    return config


def cmd_solve(args) -> int:
    problem = io.load_problem(args.problem)
    seed = problem.seed if args.seed is None else args.seed
    method = args.method or problem.method
    config = _config(problem, args)
    sol = run_method(problem, method, seed, args.delta, config)
    data = io.solution_to_dict(sol, problem, seed=seed, config=config, delta=args.delta if method == "scenario" else None)
    out = args.out or f"{problem.name}-{method}.json"
    io.write_json(data, out)
    if not sol.feasible:
        print(f"{problem.name} [{method}]: infeasible; violated rows (k, i): {sol.violated_rows}")
        return EXIT_INFEASIBLE
    extra = f", {sol.n_scenarios} scenarios" if sol.n_scenarios else f", {sol.iterations} iterations"
    print(f"{problem.name} [{method}]: {sol.status}, cost {sol.cost:.6e}{extra} -> {out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    problem = io.load_problem(args.problem)
    seed = problem.seed if args.seed is None else args.seed
    U = io.read_solution(args.solution, problem)
    rep = monte_carlo_validate(problem, U, args.samples, seed, check_unimodality=args.unimodality)
    data = {"schema": io.REPORT_SCHEMA, "problem": problem.name, "solution": str(args.solution), "alpha": problem.alpha, **rep.to_dict()}
    out = args.out or f"{Path(args.solution).stem}-validation.json"
    io.write_json(data, out)
    ok = rep.joint_satisfaction >= 1 - problem.alpha
    print(f"{problem.name}: joint satisfaction {rep.joint_satisfaction:.4f} over {rep.n_samples} samples "
          f"(required {1 - problem.alpha:.4f}) -> {out}")
    if args.unimodality:
        bad = [rep.row_index[r] for r, v in enumerate(rep.unimodality) if v != "unimodal"]
        if bad:
            log.warning("rows without a unimodal verdict (k, i): %s", bad)
    return EXIT_OK if ok else EXIT_UNSAFE


def compare(problem: ChanceProblem, methods, samples: int, seed: int, delta: float, out_dir, plot: bool = True, config: ACSConfig | None = None) -> dict:
    """Run, validate and tabulate each method; writes tables, trajectories and a figure."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = config or io.acs_config_of(problem)
    rows, table, trajectories = [], [], {}
    for method in methods:
        sol = run_method(problem, method, seed, delta, config)
        entry = {
            "method": method,
            "status": sol.status,
            "cost": sol.cost if sol.feasible else None,
            "iterations": sol.iterations if method != "scenario" else None,
            "n_scenarios": sol.n_scenarios,
            "solve_time_s": sol.solve_time,
            "joint_satisfaction": None,
            "satisfied_count": None,
        }
        if sol.feasible:
            rep = monte_carlo_validate(problem, sol.U_star, samples, seed)
            entry["joint_satisfaction"] = rep.joint_satisfaction
            entry["satisfied_count"] = rep.joint_satisfied_count
            traj = mean_trajectory(problem.system, problem.moments, sol.U_star)
            trajectories[method] = traj
            sampling_time = problem.metadata.get("cwh", {}).get("sampling_time")
            io.write_trajectory_csv(out_dir / f"trajectory_{method}.csv", traj, sampling_time)
            io.write_json(io.solution_to_dict(sol, problem, seed=seed, config=config, delta=delta if method == "scenario" else None),
                          out_dir / f"result_{method}.json")
        else:
            log.warning("%s infeasible for %s", method, problem.name)
        rows.append(entry)
        table.append([
            method, sol.status,
            "" if entry["cost"] is None else repr(entry["cost"]),
            f"{sol.solve_time:.4f}",
            "" if entry["iterations"] is None else entry["iterations"],
            "" if sol.n_scenarios is None else sol.n_scenarios,
            "" if entry["joint_satisfaction"] is None else repr(entry["joint_satisfaction"]),
            "" if entry["satisfied_count"] is None else entry["satisfied_count"],
        ])
    io.write_csv(out_dir / "comparison.csv",
                 ["method", "status", "cost", "solve_time_s", "iterations", "n_scenarios", "joint_satisfaction", "satisfied_count"],
                 table)
    summary = {"schema": io.COMPARE_SCHEMA, "problem": problem.name, "alpha": problem.alpha, "seed": seed,
               "samples": samples, "delta": delta, "config": config.to_dict(), "methods": rows}
    io.write_json(summary, out_dir / "comparison.json")
    if plot and trajectories:
        from .plotting import plot_mean_trajectories

        plot_mean_trajectories(trajectories, out_dir / "trajectories.png", title=problem.name)
    return summary


def cmd_compare(args) -> int:
    methods = [m.strip() for m in (args.methods or "").split(",") if m.strip()]
    if not methods:
        print("error: --methods needs at least one of vp, cantelli, scenario", file=sys.stderr)
        return EXIT_USAGE
    unknown = [m for m in methods if m not in METHOD_CHOICES]
    if unknown:
        print(f"error: unknown methods {unknown}", file=sys.stderr)
        return EXIT_USAGE
    problem = io.load_problem(args.problem)
    seed = problem.seed if args.seed is None else args.seed
    summary = compare(problem, methods, args.samples, seed, args.delta, args.out_dir, plot=not args.no_plot, config=_config(problem, args))
    print(f"{'method':<10}{'status':<11}{'cost':>13}{'iters':>7}{'satisfaction':>14}{'time [s]':>10}")
    for r in summary["methods"]:
        cost = f"{r['cost']:.4e}" if r["cost"] is not None else "-"
        sat = f"{r['joint_satisfaction']:.4f}" if r["joint_satisfaction"] is not None else "-"
        it = r["iterations"] if r["iterations"] is not None else "N/A"
        print(f"{r['method']:<10}{r['status']:<11}{cost:>13}{it!s:>7}{sat:>14}{r['solve_time_s']:>10.3f}")
    return EXIT_OK


def cmd_export(args) -> int:
    problem = io.load_problem(args.problem)
    path = io.save_problem(problem, args.out)
    print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="randctl", description="Chance-constrained open-loop control with a random control matrix.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve a problem with one method")
    s.add_argument("problem", help="built-in name (cwh-gamma, cwh-beta) or problem file")
    s.add_argument("--method", choices=METHOD_CHOICES)
    s.add_argument("--delta", type=float, default=DEFAULT_DELTA, help="scenario confidence parameter")
    s.add_argument("--seed", type=int)
    s.add_argument("--max-iter", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("validate", help="Monte Carlo check of a solution file")
    v.add_argument("problem")
    v.add_argument("solution")
    v.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    v.add_argument("--seed", type=int)
    v.add_argument("--unimodality", action="store_true", help="also run the empirical unimodality check per row")
    v.add_argument("--out")
    v.set_defaults(func=cmd_validate)

    c = sub.add_parser("compare", help="run, validate and tabulate several methods")
    c.add_argument("problem")
    c.add_argument("--methods", default="vp,cantelli")
    c.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    c.add_argument("--seed", type=int)
    c.add_argument("--delta", type=float, default=DEFAULT_DELTA)
    c.add_argument("--max-iter", type=int)
    c.add_argument("--out-dir", default="compare-out")
    c.add_argument("--no-plot", action="store_true")
    c.set_defaults(func=cmd_compare)

    e = sub.add_parser("export", help="write a problem (e.g. a built-in) to a problem file")
    e.add_argument("problem")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        warnings.filterwarnings("ignore", module="cvxpy")
    try:
        return args.func(args)
    except (ProblemFileError, ShapeError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
