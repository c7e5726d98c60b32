"""Command line entry point: ``dsm solve|verify|bench|schedule``.

Exit codes: 0 success, 1 verification failure, 2 gate failure,
3 solver failure, 64 usage error. ``DSM_LOG`` sets the log level
(``WARNING`` by default).
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys

import numpy as np

from . import __version__
from .bench import BASELINES, BENCH_COLUMNS, run_bench
from .errors import DSMError, UsageError
from .gallery import GALLERY, apply_asserted_constants, gallery_make, load_problem, problem_from_spec, problem_spec
from .path import path_derivative_check
from .plan import plan_run
from .records import read_json, write_json, write_table, write_trace
from .schedule import ScheduleInputs, derive_schedule, evaluate, validate_initial_conditions
from .solver import CONVERGED, IntegratorConfig, audit_summary, convergence_check, envelope_check, solve
from .verify import SUITES, run_suite

log = logging.getLogger("dsmflow")

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_GATE = 2
EXIT_SOLVER = 3
EXIT_USAGE = 64

CHECKS = ("envelope", "convergence", "audit", "path")
#: gallery constructor parameters exposed as flags (flag dest -> parameter name)
PROBLEM_FLAGS = {"kappa": "kappa", "cond": "cond", "rank": "rank", "eps": "eps",
                 "lam_min": "lam_min", "theta": "theta"}
#: run overrides, named as in the manifest
OVERRIDE_FLAGS = ("r0", "g0", "c2")
CONFIG_FLAGS = {"rel_tol": "rel_tol", "abs_tol": "abs_tol", "t_max": "T_max",
                "r_stop": "r_stop", "stop_residual": "stop_residual",
                "max_steps": "max_steps", "method": "method", "n_samples": "n_samples",
                "initial_step": "initial_step"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _setup_logging():
    level = os.environ.get("DSM_LOG", "WARNING").upper()
    if not isinstance(logging.getLevelName(level), int):
        level = "WARNING"
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _common(p):
    p.add_argument("--out", default="dsm-out", help="output directory (default: dsm-out)")
    p.add_argument("--seed", type=int, default=None, help="seed for every random draw (default 0)")
    p.add_argument("--format", choices=("csv", "json"), default=None, help="table format (default csv)")


def _problem_args(p):
    p.add_argument("problem", nargs="?", help=f"gallery name ({', '.join(GALLERY)}) or problem JSON file")
    p.add_argument("--problem-file", help="problem JSON file")
    p.add_argument("--n", type=int, help="dimension")
    p.add_argument("--kappa", type=float, help="Hölder exponent (monotone-holder)")
    p.add_argument("--cond", type=float, help="condition number (wellposed-linear)")
    p.add_argument("--rank", type=int, help="rank (rank-deficient-linear)")
    p.add_argument("--eps", type=float, help="perturbation size (monotone-smooth)")
    p.add_argument("--lam-min", dest="lam_min", type=float, help="smallest eigenvalue (monotone-smooth)")
    p.add_argument("--theta", type=float, help="ray angle of a(t)")


def _run_args(p):
    p.add_argument("--r0", type=float, help="initial regularization |a(0)| (default: searched)")
    p.add_argument("--g0", type=float, help="initial distance estimate (default: measured)")
    p.add_argument("--c2", type=float, help="path bound c2 (default: measured)")
    p.add_argument("--rel-tol", dest="rel_tol", type=float)
    p.add_argument("--abs-tol", dest="abs_tol", type=float)
    p.add_argument("--initial-step", dest="initial_step", type=float)
    p.add_argument("--t-max", dest="t_max", type=float)
    p.add_argument("--r-stop", dest="r_stop", type=float)
    p.add_argument("--stop-residual", dest="stop_residual", type=float)
    p.add_argument("--max-steps", dest="max_steps", type=int)
    p.add_argument("--method", choices=("exprk4", "dopri5"))
    p.add_argument("--n-samples", dest="n_samples", type=int)


def build_parser():
    parser = _Parser(prog="dsm", description="Regularized Newton flow solver and certification tools.")
    parser.add_argument("--version", action="version", version=f"dsmflow {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("solve", help="integrate the flow and write trace and manifest")
    _problem_args(p)
    _run_args(p)
    _common(p)
    p.add_argument("--force", action="store_true", help="run even if a gate fails")
    p.add_argument("--check", action="append", choices=CHECKS, default=None,
                   help="post-run check; repeat for several")
    p.add_argument("--manifest", help="re-run from a manifest written by an earlier solve")

    p = sub.add_parser("verify", help="run invariant suites")
    p.add_argument("suite", nargs="?", default="all", choices=("all",) + SUITES)
    _common(p)

    p = sub.add_parser("bench", help="DSM against Newton-type baselines")
    _problem_args(p)
    _run_args(p)
    _common(p)
    p.add_argument("--baselines", default=",".join(BASELINES),
                   help="comma-separated subset of " + ", ".join(BASELINES) + " (may be empty)")
    p.add_argument("--budget", type=int, default=1000, help="solve budget per baseline")

    p = sub.add_parser("schedule", help="derive a schedule and validate its gates")
    _problem_args(p)
    _common(p)
    for name in ("b", "c0", "c1", "eps0"):
        p.add_argument(f"--{name}", type=float)
    for name in OVERRIDE_FLAGS:
        p.add_argument(f"--{name}", type=float)
    p.add_argument("--t", type=float, action="append", default=None, help="evaluate r, a and the envelope at t")
    return parser


# ------------------------------------------------------------------ helpers


def _problem(args, seed):
    source = args.problem_file or args.problem
    if source is None:
        raise UsageError("give a gallery name or --problem-file")
    params = {PROBLEM_FLAGS[k]: getattr(args, k) for k in PROBLEM_FLAGS if getattr(args, k, None) is not None}
    if args.problem_file or source not in GALLERY and os.path.exists(source):
        if params or args.n is not None:
            raise UsageError("problem parameters cannot be combined with a problem file")
        return load_problem(source)
    return gallery_make(source, n=args.n, seed=seed, **params)


def _config(args, base=None):
    kw = dict(base or {})
    for flag, key in CONFIG_FLAGS.items():
        val = getattr(args, flag, None)
        if val is not None:
            kw[key] = val
    return IntegratorConfig(**kw)


def _emit(text):
    sys.stdout.write(text.rstrip("\n") + "\n")


def _fmt(x):
    return "-" if x is None else (f"{x:.6g}" if isinstance(x, float) else str(x))


# ------------------------------------------------------------------ commands


def _load_manifest(args):
    man = read_json(args.manifest)
    try:
        spec, overrides, config = man["problem"], man["overrides"], man["config"]
    except (KeyError, TypeError) as exc:
        raise UsageError(f"{args.manifest}: not a solve manifest ({exc})") from exc
    problem = problem_from_spec(spec)
    seed = man.get("seed", 0) if args.seed is None else args.seed
    fmt = args.format or man.get("format", "csv")
    for k in OVERRIDE_FLAGS:
        if getattr(args, k) is None:
            setattr(args, k, overrides.get(k))
    checks = args.check if args.check is not None else man.get("checks", [])
    config = {k: v for k, v in config.items() if k in IntegratorConfig.__dataclass_fields__}
    return problem, seed, fmt, _config(args, config), checks


def cmd_solve(args):
    if args.manifest:
        if args.problem or args.problem_file:
            raise UsageError("--manifest already names the problem")
        problem, seed, fmt, config, checks = _load_manifest(args)
    else:
        seed = 0 if args.seed is None else args.seed
        fmt = args.format or "csv"
        problem = _problem(args, seed)
        config = _config(args)
        checks = args.check or []
    overrides = {k: getattr(args, k) for k in OVERRIDE_FLAGS}
    plan = plan_run(problem, None, **overrides)
    out = args.out
    manifest = {
        "tool": "dsmflow", "version": __version__, "seed": seed, "format": fmt,
        "problem": problem_spec(problem), "overrides": overrides,
        "config": config.as_dict(), "checks": checks, "plan": plan.as_dict(),
        "constants_source": problem.meta.get("constants_source", "analytic"),
    }
    if not plan.report.passed and not args.force:
        manifest["status"] = "GateFailure"
        write_json(os.path.join(out, "manifest.json"), manifest)
        _emit("gate failure:\n" + plan.report.remediation())
        _emit("pass --force to run anyway")
        return EXIT_GATE

    traj = solve(problem, plan.schedule, plan.u0, config, c2=plan.c2)
    write_trace(os.path.join(out, f"trace.{fmt}"), traj, fmt)
    path_cols = ("abs_a", "residual", "newton_iters", "dist_to_limit", "dist_to_y")
    write_table(os.path.join(out, f"path.{fmt}"), path_cols,
                [tuple(row[c] for c in path_cols) for row in plan.path.rows(problem)], fmt)

    results = {}
    for name in checks:
        try:
            if name == "envelope":
                results[name] = envelope_check(traj)
            elif name == "convergence":
                results[name] = convergence_check(traj, problem)
            elif name == "audit":
                results[name] = audit_summary(traj)
            else:
                rep = path_derivative_check(problem, plan.path, plan.schedule, c2=plan.c2)
                results[name] = {"passed": rep["passed"], "entries": len(rep["rows"])}
        except UsageError as exc:
            results[name] = {"passed": False, "error": str(exc)}

    fin = traj.final
    env = None
    try:
        env = envelope_check(traj)["min_relative_slack"]
    except UsageError:
        pass
    manifest.update({
        "status": traj.status, "message": traj.message,
        "metrics": {
            "final_t": fin.t, "final_r": fin.r,
            "final_residual": fin.residual,
            "final_unregularized_residual": problem.norm(problem.F(fin.u) - problem.rhs),
            "final_dist_to_y": fin.dist_to_y, "envelope_min_slack": env,
        },
        "stats": traj.stats, "diagnostics": traj.diagnostics, "checks_result": results,
    })
    write_json(os.path.join(out, "manifest.json"), manifest)
    m = manifest["metrics"]
    _emit(f"status: {traj.status} ({traj.message})")
    _emit(f"final t={_fmt(m['final_t'])} r={_fmt(m['final_r'])} residual={_fmt(m['final_residual'])} "
          f"unregularized={_fmt(m['final_unregularized_residual'])} "
          f"dist_to_y={_fmt(m['final_dist_to_y'])}")
    for name, res in results.items():
        _emit(f"{'PASS' if res.get('passed') else 'FAIL'} {name}")
    _emit(f"wrote {out}")
    if traj.status != CONVERGED:
        return EXIT_SOLVER
    if not all(r.get("passed") for r in results.values()):
        return EXIT_VERIFY
    return EXIT_OK


def cmd_verify(args):
    seed = 0 if args.seed is None else args.seed
    checks = run_suite(args.suite, seed=seed)
    for c in checks:
        _emit(c.line())
    fmt = args.format or "csv"
    rows = [(c.suite, c.name, c.passed, c.value, c.limit) for c in checks]
    write_table(os.path.join(args.out, f"verify.{fmt}"), ("suite", "name", "passed", "value", "limit"),
                rows, fmt)
    write_json(os.path.join(args.out, "verify.json" if fmt == "csv" else "verify-detail.json"),
               {"suite": args.suite, "seed": seed, "passed": all(c.passed for c in checks),
                "checks": [c.as_dict() for c in checks]})
    failed = sum(not c.passed for c in checks)
    _emit(f"{len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_bench(args):
    seed = 0 if args.seed is None else args.seed
    problem = _problem(args, seed)
    baselines = [b for b in (s.strip() for s in args.baselines.split(",")) if b]
    rows = run_bench(problem, baselines, config=_config(args, {"audit": False}), budget=args.budget)
    fmt = args.format or "csv"
    write_table(os.path.join(args.out, f"bench.{fmt}"), BENCH_COLUMNS, [r.as_row() for r in rows], fmt)
    _emit(" ".join(f"{c:>14}" for c in BENCH_COLUMNS))
    for r in rows:
        _emit(" ".join(f"{_fmt(v):>14}" for v in r.as_row()))
    return EXIT_OK


def cmd_schedule(args):
    seed = 0 if args.seed is None else args.seed
    overrides = {k: getattr(args, k) for k in OVERRIDE_FLAGS}
    asserted = {k: getattr(args, k) for k in ("b", "c0", "c1", "eps0") if getattr(args, k) is not None}
    if args.problem or args.problem_file:
        if args.kappa is not None:
            asserted["kappa"] = args.kappa
        problem = apply_asserted_constants(_problem(args, seed), asserted)
        plan = plan_run(problem, None, **overrides)
        sched, report, inputs = plan.schedule, plan.report, plan.inputs
    else:
        need = ("b", "c1", "c2", "g0", "r0")
        missing = [k for k in need if getattr(args, k) is None]
        if missing or args.kappa is None:
            raise UsageError("without a problem give --b --kappa --c0 --c1 --c2 --g0 --r0; missing "
                             + ", ".join(f"--{k}" for k in missing + ([] if args.kappa is not None else ["kappa"])))
        inputs = ScheduleInputs(b=args.b, kappa=args.kappa, c0=args.c0 or 0.0, c1=args.c1, c2=args.c2,
                                g0=args.g0, r0=args.r0, theta=args.theta or 0.0,
                                eps0=args.eps0 if args.eps0 is not None else math.inf)
        sched = derive_schedule(inputs)
        report = validate_initial_conditions(sched, inputs)
    for key, val in sched.as_dict().items():
        _emit(f"{key} = {_fmt(val) if not isinstance(val, float) else f'{val:.17g}'}")
    for g in report.gates + report.info:
        _emit(f"{'PASS' if g.passed else 'FAIL'} {g.name}: {g.equation} (slack {g.slack:.6g})")
    evals = []
    for t in args.t or []:
        r, rdot, a, env = evaluate(sched, t)
        evals.append((t, r, rdot, np.real(a), np.imag(a), env))
        _emit(f"t={t:g}: r={r:.17g} rdot={rdot:.17g} envelope={env:.17g}")
    fmt = args.format or "csv"
    write_json(os.path.join(args.out, "schedule.json"),
               {"inputs": inputs.__dict__, "schedule": sched.as_dict(), "gates": report.as_dict()})
    if evals:
        write_table(os.path.join(args.out, f"schedule_eval.{fmt}"),
                    ("t", "r", "rdot", "a_re", "a_im", "envelope"), evals, fmt)
    if not report.passed:
        _emit(report.remediation())
        return EXIT_GATE
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "verify": cmd_verify, "bench": cmd_bench, "schedule": cmd_schedule}


def main(argv=None) -> int:
    _setup_logging()
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("choose a command: solve, verify, bench, schedule")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except DSMError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_SOLVER


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
