import argparse
import json
import logging
import os
import sys

import numpy as np

from switchlq import __version__
from switchlq.exceptions import ConfigError, SwitchLQError
from switchlq.markov import sample_chain_path
from switchlq.model import InitialTriple, validate_problem
from switchlq.riccati import solve_are, solve_dre
from switchlq.simulate import SimulationConfig, simulate_closed_loop
from switchlq.stability import initial_moment, propagate_second_moment
from switchlq.turnpike import TurnpikeSettings, run_experiment, write_report
from switchlq.utils.export import family_rows, to_jsonable, write_csv, write_json
from switchlq.utils.runtime import STREAM_CHAIN, derive_seed
from .config import RunConfig, load_problem

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _run_config(args, **defaults) -> RunConfig:
    fields = dict(problem_path=args.problem, out_dir=args.out, tol=args.tol)
    for name in ("horizon", "grid", "paths", "dt", "seed", "regime", "x0", "mc"):
        if hasattr(args, name):
            fields[name] = getattr(args, name)
    if hasattr(args, "no_newton"):
        fields["newton"] = not args.no_newton
    fields.update(defaults)
    return RunConfig(**fields).validate()


def _print_json(doc):
    print(json.dumps(to_jsonable(doc), indent=2, sort_keys=True))


def cmd_validate(args):
    run = _run_config(args)
    config = load_problem(run.problem_path)
    report = validate_problem(config.problem)
    doc = dict(report.as_dict(), problem_id=config.problem_id)
    path = write_json(os.path.join(run.out_dir, "validation.json"), doc)
    _print_json(doc)
    if not report.ok:
        for message in report.messages:
            print(f"Error: {message}", file=sys.stderr)
        return EXIT_FAILURE
    print(f"Validation report written to {path}")
    return EXIT_OK


def cmd_dre(args):
    run = _run_config(args)
    config = load_problem(run.problem_path)
    p = config.problem
    grid = np.linspace(0.0, run.horizon, run.grid)
    sol = solve_dre(p, run.horizon, grid, run.tol)
    write_csv(os.path.join(run.out_dir, "P.csv"), ["t", "regime", "row", "col", "value"],
              family_rows(sol.grid, sol.P))
    write_csv(os.path.join(run.out_dir, "Theta.csv"), ["t", "regime", "row", "col", "value"],
              family_rows(sol.grid, sol.theta))
    terminal_gain = -np.linalg.solve(p.cost.R, p.cost.S)
    summary = {
        "problem_id": config.problem_id,
        "horizon": sol.horizon,
        "tol": sol.tol,
        "delta_margin": sol.delta_margin,
        "monotone": sol.monotone,
        "terminal_P_zero": bool(not np.any(sol.P[-1])),
        "terminal_gain_error": float(np.max(np.abs(sol.theta[-1] - terminal_gain))),
        "P_at_0": sol.P[0],
    }
    _print_json(summary)
    return EXIT_OK


def cmd_are(args):
    run = _run_config(args)
    config = load_problem(run.problem_path)
    sol = solve_are(config.problem, run.tol, newton=run.newton)
    summary = dict(sol.summary(), problem_id=config.problem_id, residual_history=sol.residual_history)
    write_json(os.path.join(run.out_dir, "Pinf.txt"), summary)
    _print_json({k: summary[k] for k in ("problem_id", "residual_norm", "delta_margin", "closed_loop_rate",
                                         "horizon_used", "newton_iterations", "P")})
    return EXIT_OK


def cmd_simulate(args):
    run = _run_config(args)
    config = load_problem(run.problem_path)
    p = config.problem
    x, regime = run.start(config)
    cfg = SimulationConfig(dt=run.dt, n_paths=run.paths, seed=run.seed)
    if args.gains == "are":
        gains = solve_are(p, run.tol, newton=run.newton).theta
    else:
        gains = solve_dre(p, run.horizon, np.array([0.0, run.horizon]), run.tol)
    stats = simulate_closed_loop(p, gains, InitialTriple(0.0, x, regime), run.horizon, cfg, output_points=run.grid)
    write_csv(os.path.join(run.out_dir, "stats.csv"), ["t", "mean_sq_state", "mean_sq_state_se"],
              zip(stats.times, stats.mean_sq_state, stats.mean_sq_state_se))
    # the regime path driving Monte Carlo path 0
    chain = sample_chain_path(p.generator, regime, 0.0, run.horizon, derive_seed(run.seed, 0, STREAM_CHAIN))
    switches = np.concatenate(([0.0], chain.jump_times))
    write_csv(os.path.join(run.out_dir, "chain.csv"), ["time", "regime"],
              [[float(t), int(k) + 1] for t, k in zip(switches, chain.states)])
    moments = propagate_second_moment(p, gains, initial_moment(p, x, regime), stats.times, run.tol)
    write_csv(os.path.join(run.out_dir, "moments.csv"), ["t", "regime", "row", "col", "value"],
              family_rows(moments.times, moments.Y))
    write_csv(os.path.join(run.out_dir, "mean_square.csv"), ["t", "mean_sq_state"],
              zip(moments.times, moments.mean_square))
    summary = {
        "problem_id": config.problem_id,
        "gains": args.gains,
        "n_paths": stats.n_paths,
        "dt": cfg.dt,
        "seed": cfg.seed,
        "mean_cost": stats.mean_cost,
        "mean_cost_se": stats.mean_cost_se,
        "occupation": stats.occupation,
    }
    write_json(os.path.join(run.out_dir, "summary.json"), summary)
    _print_json(summary)
    return EXIT_OK


def cmd_turnpike(args):
    run = _run_config(args)
    config = load_problem(run.problem_path)
    p = config.problem
    x, regime = run.start(config)
    mc = SimulationConfig(dt=run.dt, n_paths=run.paths, seed=run.seed) if run.mc else None
    settings = TurnpikeSettings(
        T=run.horizon, grid_points=run.grid, tol=run.tol, x=tuple(x), regime=regime,
        newton=run.newton, mc=mc,
    )
    report = run_experiment(p, settings)
    paths = write_report(report, run.out_dir, config.raw)
    for verdict in report.verdicts:
        print(f"{'PASS' if verdict.passed else 'FAIL'}  {verdict.name}  {verdict.detail}")
    for path in paths:
        print(f"wrote {path}")
    return EXIT_OK if report.passed else EXIT_FAILURE


def _common(parser, tol=True):
    parser.add_argument("--problem", required=True, help="Problem config (JSON)")
    parser.add_argument("--out", default="out", help="Output directory")
    if tol:
        parser.add_argument("--tol", type=float, default=1e-10, help="Solver tolerance")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="More log output (-vv for debug)")


def _start(parser):
    parser.add_argument("--regime", type=int, default=None, help="Start regime (1-based)")
    parser.add_argument("--x0", default=None, help="Initial state 'v1,v2,...'")
    parser.add_argument("--no-newton", action="store_true", help="Skip the Newton polish of the ARE solution")


def _monte_carlo(parser, paths):
    parser.add_argument("--paths", type=int, default=paths, help="Monte Carlo paths")
    parser.add_argument("--dt", type=float, default=1e-3, help="Monte Carlo base step")
    parser.add_argument("--seed", type=int, default=0, help="Base seed")


def build_parser():
    parser = argparse.ArgumentParser(prog="switchlq", description="Regime-switching stochastic LQ toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    # validate command
    parser_validate = subparsers.add_parser("validate", help="Check generator and convexity assumptions")
    _common(parser_validate)
    parser_validate.set_defaults(func=cmd_validate)

    # dre command
    parser_dre = subparsers.add_parser("dre", help="Solve the differential Riccati equation")
    _common(parser_dre)
    parser_dre.add_argument("--horizon", type=float, default=5.0, help="Horizon T")
    parser_dre.add_argument("--grid", type=int, default=101, help="Number of output times on [0, T]")
    parser_dre.set_defaults(func=cmd_dre)

    # are command
    parser_are = subparsers.add_parser("are", help="Solve the algebraic Riccati equation")
    _common(parser_are)
    parser_are.add_argument("--no-newton", action="store_true", help="Skip the Newton polish")
    parser_are.set_defaults(func=cmd_are)

    # simulate command
    parser_simulate = subparsers.add_parser("simulate", help="Monte Carlo of the optimal closed loop")
    _common(parser_simulate)
    _start(parser_simulate)
    _monte_carlo(parser_simulate, paths=1000)
    parser_simulate.add_argument("--horizon", type=float, default=5.0, help="Horizon T")
    parser_simulate.add_argument("--grid", type=int, default=101, help="Number of output times")
    parser_simulate.add_argument("--gains", choices=["dre", "are"], default="dre",
                                 help="Finite-horizon (dre) or stationary (are) feedback")
    parser_simulate.set_defaults(func=cmd_simulate)

    # turnpike command
    parser_turnpike = subparsers.add_parser("turnpike", help="Run the turnpike experiment")
    _common(parser_turnpike)
    _start(parser_turnpike)
    _monte_carlo(parser_turnpike, paths=10000)
    parser_turnpike.add_argument("--horizon", type=float, default=10.0, help="Horizon T")
    parser_turnpike.add_argument("--grid", type=int, default=201, help="Number of grid times on [0, T]")
    parser_turnpike.add_argument("--mc", action="store_true", help="Cross-check the gap series by Monte Carlo")
    parser_turnpike.set_defaults(func=cmd_turnpike)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SwitchLQError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
