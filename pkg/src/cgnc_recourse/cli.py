"""Command-line entry point: ``fit``, ``explain``, ``experiment`` and ``check``.

Exit codes: 0 ok, 2 input error, 3 precondition violated, 4 solver failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .cgnc import ModelError, decision_h, fit, log_joint, log_joint_affine, log_threshold, sample
from .data import DataError, percentile_bounds
from .expansion import dc_split, domain_radius, expanded_violation, grad_h, iteration_bound, lipschitz_constant
from .experiment import ExperimentConfig, learn_structure, load_dataset, model_metric, run_experiment
from .metric import MetricError, parse_p
from .milp.model import MilpError
from .model_io import load_model, save_model
from .recourse import BackendFailure, PreconditionError, RecourseConfig, RecourseError, find_counterfactual
from .solve.result import SolverError
from .structure import StructureError

EXIT_OK, EXIT_INPUT, EXIT_PRECONDITION, EXIT_SOLVER = 0, 2, 3, 4
INPUT_ERRORS = (DataError, StructureError, ModelError, MetricError, MilpError, RecourseError, ValueError, OSError)


class _Parser(argparse.ArgumentParser):
    """Argument errors exit with the input-error code instead of argparse's default."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _add_data(p):
    p.add_argument("--data", required=True, help="CSV path or builtin:<name>")
    p.add_argument("--label", default="class", help="label column of the CSV")
    p.add_argument("--structure", choices=("nb", "tan", "ban"), default="nb")
    p.add_argument("--ban-file", help="weighted edge list for --structure ban")
    p.add_argument("--max-in-degree", type=int)


def _add_solver(p):
    p.add_argument("--gamma", type=float, action="append", help="uncertainty budget; repeatable")
    p.add_argument("--epsilon", type=float, default=1e-3)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--p-norm", choices=("1", "2", "inf"), default="inf")
    p.add_argument("--backend", choices=("milp", "local"), action="append")
    p.add_argument("--m-init", type=int, default=20)
    p.add_argument("--nu", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gap", type=float, default=0.01, help="relative optimality gap of the MILP search")
    p.add_argument("--node-limit", type=int, default=200_000)
    p.add_argument("--time-limit", type=float, default=3600.0, help="seconds per instance")
    p.add_argument("--starts", type=int, default=16, help="local search starts")
    p.add_argument("--max-iterations", type=int, default=50)
    p.add_argument("--double-partition", action="store_true", help="partition both factors of each product")
    p.add_argument("--dump-lp", metavar="DIR", help="write every MILP subproblem in LP format to DIR")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="cgnc-recourse", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="learn a structure, fit the classifier, write model JSON")
    _add_data(p)
    p.add_argument("--out", help="model JSON path")

    p = sub.add_parser("explain", help="robust counterfactual for one factual point")
    p.add_argument("--model", required=True, help="model JSON from fit")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--x", help="comma separated factual values")
    src.add_argument("--row", type=int, help="row index into --data")
    p.add_argument("--data", help="CSV path or builtin:<name>, used by --row and for percentile bounds")
    p.add_argument("--label", default="class")
    _add_solver(p)
    p.add_argument("--out", help="report JSON path (default: standard output)")

    p = sub.add_parser("experiment", help="seeded batch of runs with summary table")
    _add_data(p)
    _add_solver(p)
    p.add_argument("--runs", type=int, default=25)
    p.add_argument("--baseline", action="store_true", help="also record the non-robust distance per run")
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("check", help="analytic diagnostics of a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--radius", type=float, help="domain radius R; default from --data percentile box")
    p.add_argument("--data", help="CSV path or builtin:<name>")
    p.add_argument("--label", default="class")
    p.add_argument("--epsilon", type=float, default=1e-3)
    p.add_argument("--p-norm", choices=("1", "2", "inf"), default="inf")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    return ap


def _recourse_config(args, bounds=None) -> RecourseConfig:
    return RecourseConfig(
        backend=(args.backend or ["milp"])[0],
        tau=args.tau,
        epsilon=args.epsilon,
        bounds=bounds,
        m_init=args.m_init,
        nu=args.nu,
        m_ap=args.m_init,
        gap=args.gap,
        node_limit=args.node_limit,
        time_limit=args.time_limit,
        max_iterations=args.max_iterations,
        starts=args.starts,
        seed=args.seed,
        double_partition=args.double_partition,
        dump_lp=args.dump_lp,
    )


def _emit(doc, out) -> None:
    text = json.dumps(doc, indent=2) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_fit(args) -> int:
    ds = load_dataset(args.data, args.label)
    structure = learn_structure(ds, args.structure, args.ban_file, args.max_in_degree)
    model = fit(ds, structure)
    if args.out:
        save_model(model, args.out)
    print(structure.summary())
    return EXIT_OK


def cmd_explain(args) -> int:
    model = load_model(args.model)
    ds = load_dataset(args.data, args.label) if args.data else None
    if args.row is not None:
        if ds is None:
            raise DataError("--row needs --data")
        if not 0 <= args.row < ds.n_rows:
            raise DataError(f"row {args.row} out of range")
        x = ds.features[args.row]
    else:
        x = np.array([float(v) for v in args.x.split(",")])
    gamma = (args.gamma or [0.01])[0]
    cfg = _recourse_config(args, percentile_bounds(ds) if ds is not None else None)
    res = find_counterfactual(model, model_metric(model, args.p_norm), x, gamma, config=cfg)
    _emit(res.to_dict(), args.out)
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = ExperimentConfig(
        data=args.data,
        label=args.label,
        structure=args.structure,
        ban_file=args.ban_file,
        max_in_degree=args.max_in_degree,
        gammas=tuple(args.gamma or [0.01]),
        backends=tuple(args.backend or ["milp"]),
        runs=args.runs,
        seed=args.seed,
        p=args.p_norm,
        out=args.out,
        baseline=args.baseline,
        recourse=_recourse_config(args),
    )
    out = run_experiment(cfg, log=lambda msg: print(msg, file=sys.stderr))
    print(out.table)
    print(json.dumps(out.summary))
    return EXIT_OK


def check_report(model, R: float, epsilon: float = 1e-3, p="inf", samples: int = 100, seed: int = 0,
                 metric=None) -> dict:
    """Lipschitz bound, iteration bound, curvature spectra and two numerical self-checks.

    With ``metric`` the radius and ``G`` are measured in its whitened norm.
    """
    G = lipschitz_constant(model, R, parse_p(p), None if metric is None else metric.whitener)
    T, log_T = iteration_bound(R, G, epsilon, model.n)
    Q0, Q1 = dc_split(model)
    rng = np.random.default_rng(seed)
    X = np.vstack([sample(model, c, samples, rng) for c in (0, 1)])
    # central differences with a step scaled to each point
    fd_err = 0.0
    for x in X[:samples]:
        g = grad_h(model, x)
        h = 1e-5 * max(1.0, float(np.abs(x).max()))
        fd = np.array([(decision_h(model, x + h * e) - decision_h(model, x - h * e)) / (2 * h) for e in np.eye(model.n)])
        fd_err = max(fd_err, float(np.max(np.abs(fd - g)) / max(1.0, float(np.max(np.abs(g))))))
    dual = 0.0
    for c in (0, 1):
        dual = max(dual, float(np.max(np.abs([log_joint(model, c, x) - log_joint_affine(model, c, x) for x in X]))))
    tp = log_threshold(0.5)
    D = rng.standard_normal(X.shape) * 0.1
    expanded = max(abs(expanded_violation(model, tp, x, d) - (tp - float(decision_h(model, x + d)))) for x, d in zip(X, D))
    return {
        "n": model.n,
        "R": R,
        "epsilon": epsilon,
        "G": G,
        "T": T,
        "log_T": log_T,
        "spectrum_Q0": np.linalg.eigvalsh(Q0).tolist(),
        "spectrum_Q1": np.linalg.eigvalsh(Q1).tolist(),
        "spectrum_hessian": np.linalg.eigvalsh(Q0 - Q1).tolist(),
        "gradient_fd_max_error": fd_err,
        "dual_form_max_discrepancy": dual,
        "expanded_form_max_discrepancy": expanded,
    }


def cmd_check(args) -> int:
    model = load_model(args.model)
    metric = model_metric(model, args.p_norm)
    R_raw = None
    if args.radius is not None:
        R = args.radius
    elif args.data:
        box = percentile_bounds(load_dataset(args.data, args.label))
        R = domain_radius(box, metric)
        R_raw = domain_radius(box, p=parse_p(args.p_norm))
    else:
        raise DataError("check needs --radius or --data")
    doc = check_report(model, R, args.epsilon, args.p_norm, args.samples, args.seed, metric)
    doc["R_raw"] = R_raw
    if not math.isfinite(doc["T"]):
        doc["T"] = None
    _emit(doc, args.out)
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "explain": cmd_explain, "experiment": cmd_experiment, "check": cmd_check}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except PreconditionError as exc:
        print(f"precondition: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (SolverError, BackendFailure, ArithmeticError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
