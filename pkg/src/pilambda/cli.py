"""Command-line experiment runner.

Subcommands: ``run`` executes a (possibly swept) experiment config, ``verify``
replays a summary against a reference table, ``bounds`` prints the
closed-form growth/contraction constants, and ``oracle`` prints the LQR
reference solutions.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .benchmarks import lqr_test_spec, lyapunov_policy_oracle, riccati_oracle
from .experiments import (ExperimentConfig, load_reference, run_experiment,
                          verify_tables)
from .metrics import AssumptionConstants, theory_bounds
from .validation import BoundInapplicable, ContractViolation


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pilambda",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute an experiment sweep")
    run.add_argument("--config", help="JSON config file (flat key set)")
    run.add_argument("--problem", help="benchmark name, e.g. lqr-t1")
    run.add_argument("--mu", type=float, help="single loss weight override")
    run.add_argument("--trajectories", type=int, help="single trajectory count override")
    run.add_argument("--train-steps", type=int, help="single training budget override")
    run.add_argument("--iterations", type=int, help="policy iteration count override")
    run.add_argument("--seed", type=int, help="single seed override")
    run.add_argument("--out-dir", help="output directory override")
    run.add_argument("--jobs", type=int, help="parallel worker processes")

    verify = sub.add_parser("verify", help="check a summary against a reference table")
    verify.add_argument("--summary", required=True, help="path to summary.csv")
    verify.add_argument("--reference", required=True,
                        help="builtin reference name or JSON file path")
    verify.add_argument("--tolerance-factor", type=float, default=3.0)
    verify.add_argument("--diverge-residual", type=float, default=0.02)

    bounds = sub.add_parser("bounds", help="print growth/contraction constants")
    for name in ("g-bar", "g2-bar", "l-bar", "l1-bar", "l2-bar", "c0", "c-s", "c-bar"):
        bounds.add_argument(f"--{name}", type=float, required=True)
    bounds.add_argument("--alpha", type=float, default=2.0)
    bounds.add_argument("--rho", type=float, action="append",
                        help="discount rate(s) at which to evaluate eta")

    oracle = sub.add_parser("oracle", help="print LQR reference solutions")
    oracle.add_argument("--problem", default="lqr-t1",
                        choices=["lqr-t1", "lqr-t2", "lqr-t3"])
    oracle.add_argument("--dim", type=int, default=5)
    oracle.add_argument("--discount", type=float, default=1.0)
    oracle.add_argument("--gain", help="JSON (p x d) gain matrix for policy evaluation")
    return parser


def _cmd_run(args) -> int:
    data = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
    if args.problem:
        data["problem"] = args.problem
    if args.mu is not None:
        data["mu_values"] = [args.mu]
    if args.trajectories is not None:
        data["trajectory_counts"] = [args.trajectories]
    if args.train_steps is not None:
        data["train_step_counts"] = [args.train_steps]
    if args.iterations is not None:
        data["n_iterations"] = args.iterations
    if args.seed is not None:
        data["seeds"] = [args.seed]
    if args.out_dir is not None:
        data["out_dir"] = args.out_dir
    if args.jobs is not None:
        data["n_jobs"] = args.jobs
    config = ExperimentConfig.from_dict(data)
    out_dir = run_experiment(config)
    print(f"wrote results to {out_dir}")
    return 0


def _cmd_verify(args) -> int:
    reference = load_reference(args.reference)
    passed, report = verify_tables(args.summary, reference,
                                   tolerance_factor=args.tolerance_factor,
                                   diverge_residual=args.diverge_residual)
    for row in report:
        status = "PASS" if row["passed"] else "FAIL"
        print(f"{status} mu={row['mu']:g} N={row['n_traj']} steps={row['train_steps']} "
              f"expected={row['expected']} {row['reason']}")
    print(f"{'all cells pass' if passed else 'FAILURES present'}")
    return 0 if passed else 1


def _cmd_bounds(args) -> int:
    constants = AssumptionConstants(
        g_bar=args.g_bar, g2_bar=args.g2_bar, l_bar=args.l_bar, l1_bar=args.l1_bar,
        l2_bar=args.l2_bar, c0=args.c0, c_s=args.c_s, c_bar=args.c_bar)
    report = theory_bounds(constants, alpha=args.alpha)
    for name in ("C1", "C2", "C3", "C4", "rho1", "rho2"):
        print(f"{name} = {getattr(report, name):.12g}")
    for rho in args.rho or []:
        try:
            print(f"eta({rho:g}) = {report.eta(rho):.12g}")
        except BoundInapplicable as exc:
            print(f"eta({rho:g}) inapplicable: {exc}")
    return 0


def _cmd_oracle(args) -> int:
    spec = lqr_test_spec(args.problem.split("-")[1], dim=args.dim, discount=args.discount)
    np.set_printoptions(precision=10, suppress=False)
    if args.gain:
        K = np.asarray(json.loads(args.gain), dtype=float)
        P = lyapunov_policy_oracle(spec, K)
        print("policy-evaluation P_K =")
    else:
        P = riccati_oracle(spec)
        print("stabilizing Riccati P =")
        print(P)
        print("optimal gain K = B^T P =")
        P = spec.B.T @ P
    print(P)
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {"run": _cmd_run, "verify": _cmd_verify,
                "bounds": _cmd_bounds, "oracle": _cmd_oracle}
    try:
        return handlers[args.command](args)
    except ContractViolation as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
