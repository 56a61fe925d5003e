"""Command-line entry point: ``eotstab {solve,trace,sweep,oracle-check,selftest}``.

Values are resolved as command-line flag, then config file, then the
solver defaults. Every file is written below the output directory, which
is created if needed.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .diagnostics import dual_value, primal_value
from .harness import ExperimentConfig, ReferenceSolveError, emit_report, sinkhorn_trace, stability_sweep
from .measures import load_cost_spec
from .metrics import tv_distance_couplings
from .oracle import brute_force_solve, random_instance
from .selftest import run_selftest
from .sinkhorn import DEFAULT_MAX_ITER, DEFAULT_TOL, solve

DEFAULT_OUT = "eotstab-out"
ORACLE_TOL = 1e-10
ORACLE_AGREEMENT = 1e-6


class UsageError(Exception):
    pass


def build_parser():
    parser = argparse.ArgumentParser(prog="eotstab", description="Entropic OT stability experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--eps", type=float, help="regularisation strength (overrides config epsilons)")
    common.add_argument("--tol", type=float, help=f"solver tolerance (default {DEFAULT_TOL:g})")
    common.add_argument("--max-iter", type=int, help=f"Sinkhorn iteration cap (default {DEFAULT_MAX_ITER})")
    common.add_argument("--seed", type=int, help="random seed (default 0)")
    common.add_argument("--out", help=f"output directory (default ./{DEFAULT_OUT})")
    common.add_argument("--format", choices=("csv", "json"), help="report format (default csv)")
    sub = parser.add_subparsers(dest="verb", required=True, metavar="VERB")
    sub.add_parser("solve", parents=[common], help="solve one instance and print primal/dual values")
    sub.add_parser("trace", parents=[common], help="record a Sinkhorn convergence trace")
    sub.add_parser("sweep", parents=[common], help="run a marginal-perturbation stability sweep")
    oc = sub.add_parser("oracle-check", parents=[common], help="compare Sinkhorn with the brute-force oracle")
    oc.add_argument("--instances", type=int, default=20, help="number of random instances (default 20)")
    sub.add_parser("selftest", help="run the closed-form examples")
    return parser


def _load_raw(path):
    if path is None:
        return {}, "."
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    return raw, os.path.dirname(os.path.abspath(path))


def resolve_config(args):
    """Merge flags over the config file; returns ``(config, out_dir, fmt)``."""
    raw, base_dir = _load_raw(args.config)
    if "marginals" not in raw:
        raise UsageError(f"'{args.verb}' needs a --config with a 'marginals' entry")
    raw = dict(raw)
    solver = dict(raw.get("solver", {}))
    if args.tol is not None:
        solver["tol"] = args.tol
    if args.max_iter is not None:
        solver["max_iter"] = args.max_iter
    raw["solver"] = solver
    if args.eps is not None:
        raw["epsilons"] = [args.eps]
    if args.seed is not None:
        raw["seed"] = args.seed
    output = dict(raw.get("output", {}))
    out_dir = args.out or output.get("dir") or DEFAULT_OUT
    fmt = args.format or output.get("format") or "csv"
    output.update({"dir": out_dir, "format": fmt})
    raw["output"] = output
    try:
        cfg = ExperimentConfig.from_dict(raw, base_dir=base_dir)
    except (ValueError, TypeError, KeyError) as exc:
        raise UsageError(f"invalid config: {exc}") from exc
    if fmt not in ("csv", "json"):
        raise UsageError(f"unknown output format {fmt!r}")
    return cfg, out_dir, fmt


def _instance(cfg):
    mu, nu = cfg.measures()
    return mu, nu, load_cost_spec(cfg.cost, mu, nu, cfg.base_dir), cfg.epsilons[0]


def cmd_solve(args):
    cfg, out_dir, _ = resolve_config(args)
    mu, nu, C, eps = _instance(cfg)
    report = solve(mu, nu, C, eps, cfg.tol, cfg.max_iter)
    os.makedirs(out_dir, exist_ok=True)
    report.save_json(os.path.join(out_dir, "solve.json"))
    report.save_trace_csv(os.path.join(out_dir, "solve_trace.csv"))
    print(f"dual_value: {dual_value(report.potentials, mu, nu)!r}")
    print(f"primal_value: {primal_value(report.coupling, C, mu, nu, eps)!r}")
    print(f"iterations: {report.iterations}")
    print(f"converged: {str(report.converged).lower()}")
    if not report.converged:
        print(f"solve did not reach tol={cfg.tol:g} in {cfg.max_iter} iterations", file=sys.stderr)
        return 1
    return 0


def cmd_trace(args):
    cfg, out_dir, fmt = resolve_config(args)
    mu, nu, C, eps = _instance(cfg)
    try:
        trace = sinkhorn_trace(mu, nu, C, eps, cfg.max_iter, cfg.tol, betas=cfg.betas)
    except ReferenceSolveError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    path = os.path.join(out_dir, f"trace.{fmt}")
    emit_report(trace, fmt, path)
    print(f"wrote {len(trace.rows)} rows to {path}")
    return 0


def cmd_sweep(args):
    cfg, out_dir, fmt = resolve_config(args)
    try:
        trace = stability_sweep(cfg)
    except ReferenceSolveError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    path = os.path.join(out_dir, f"sweep.{fmt}")
    emit_report(trace, fmt, path)
    unconverged = sum(not r.converged for r in trace.rows)
    print(f"wrote {len(trace.rows)} rows to {path} ({unconverged} from unconverged solves)")
    return 0


def oracle_check(seed, instances, out=print):
    """Compare Sinkhorn and the oracle on random small instances; returns the failure count."""
    rng = np.random.default_rng(seed)
    failures = 0
    for k in range(instances):
        mu, nu, C, eps = random_instance(rng)
        report = solve(mu, nu, C, eps, ORACLE_TOL)
        ref = brute_force_solve(mu, nu, C, eps, ORACLE_TOL)
        tv = tv_distance_couplings(report.coupling, ref)
        ok = report.converged and tv <= ORACLE_AGREEMENT
        failures += not ok
        out(f"{'PASS' if ok else 'FAIL'} instance {k}: {mu.size}x{nu.size} eps={eps:g} tv={tv:.3e}")
    return failures


def cmd_oracle_check(args):
    if args.instances < 1:
        raise UsageError("--instances must be positive")
    seed = 0 if args.seed is None else args.seed
    return 1 if oracle_check(seed, args.instances) else 0


def cmd_selftest(args):
    return 1 if run_selftest() else 0


COMMANDS = {
    "solve": cmd_solve,
    "trace": cmd_trace,
    "sweep": cmd_sweep,
    "oracle-check": cmd_oracle_check,
    "selftest": cmd_selftest,
}


def run(argv=None):
    """Execute one command and return its exit status (0 ok, 1 failed check, 2 usage)."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.verb](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"eotstab {args.verb}: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, FloatingPointError) as exc:
        print(f"eotstab {args.verb}: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
