"""DSM against discrete Newton-type baselines on the same problem.

Every method is charged one resolvent solve per linear system it solves
with ``A(u) + aI``. The baselines are

``newton-plain``
    undamped Newton with ``a = 0``;
``fixed-a``
    Newton on ``F(w) + a w = f`` with ``a`` frozen at ``fixed_a``;
``geometric-a``
    one regularized Newton step per ``a_j = r0 * 0.5**j`` until
    ``a_j < r_stop``.

Each method stops by its own rule (the DSM at its horizon, Newton-type
iterations when their own residual is below ``tol``). The reported status
is then judged on one common scale: ``converged`` means the final iterate
is within ``target_rel * (1 + ||y||)`` of the known solution, or, without
one, has ``||F(u) - f|| <= target_rel * (1 + ||f||)``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DSMError, ResolventSingular
from .operator import OperatorProblem, eval_F, jacobian, solve_shifted
from .plan import plan_run
from .solver import CONVERGED, IntegratorConfig, solve

log = logging.getLogger(__name__)

BASELINES = ("newton-plain", "fixed-a", "geometric-a")
BENCH_COLUMNS = ("method", "status", "solves", "final_residual", "dist_to_y", "rank")
DIVERGED_NORM = 1e8


@dataclass
class BenchRow:
    method: str
    status: str
    solves: int
    final_residual: float
    dist_to_y: Optional[float]
    rank: Optional[int] = None
    note: str = ""

    def as_row(self):
        return (self.method, self.status, self.solves, self.final_residual, self.dist_to_y, self.rank)


def _finish(problem, method, status, solves, u, note=""):
    y = problem.known_solution
    finite = u is not None and np.all(np.isfinite(u))
    res = problem.norm(eval_F(problem, u) - problem.rhs) if finite else math.inf
    dist = (problem.norm(u - y) if finite else math.inf) if y is not None else None
    return BenchRow(method, status, solves, res, dist, note=note)


def newton_iteration(problem: OperatorProblem, u0, shifts, tol, budget, method, *, sweep=False):
    """Run ``u <- u - (A(u) + a_j I)^{-1} (F(u) + a_j u - f)`` over ``shifts``.

    ``shifts`` is an iterator of ``a_j``. Unless ``sweep`` is set the run
    stops once ``||F(u) + a_j u - f|| <= tol``; it also stops after
    ``budget`` solves or on a singular or divergent step. With ``sweep``
    every shift is used once.
    """
    u = np.array(u0, dtype=float)
    solves = 0
    for a in shifts:
        G = eval_F(problem, u) + a * u - problem.rhs
        if not sweep and problem.norm(G) <= tol:
            return _finish(problem, method, "done", solves, u)
        if solves >= budget:
            return _finish(problem, method, "budget", solves, u)
        try:
            step = solve_shifted(jacobian(problem, u), a, G)
        except ResolventSingular as exc:
            return _finish(problem, method, "singular", solves, u, str(exc))
        solves += 1
        u = u - np.real(step)
        if not np.all(np.isfinite(u)) or problem.norm(u) > DIVERGED_NORM:
            return _finish(problem, method, "diverged", solves, None)
    return _finish(problem, method, "done" if sweep else "budget", solves, u)


def run_dsm(problem, u0, config, plan=None):
    plan = plan_run(problem, u0) if plan is None else plan
    traj = solve(problem, plan.schedule, plan.u0, config, oracles=False)
    status = "done" if traj.status == CONVERGED else traj.status
    return _finish(problem, "dsm", status, traj.stats.get("nfev", 0), traj.final.u, traj.message), plan


def _judge(problem, rows, target_rel):
    y = problem.known_solution
    for r in rows:
        if r.status != "done":
            continue
        if y is not None:
            ok = r.dist_to_y <= target_rel * (1 + problem.norm(y))
        else:
            ok = r.final_residual <= target_rel * (1 + problem.norm(problem.rhs))
        r.status = "converged" if ok else "inaccurate"


def _rank(rows):
    done = sorted((r for r in rows if r.status == "converged"), key=lambda r: r.solves)
    for i, r in enumerate(done, 1):
        r.rank = i


def run_bench(problem: OperatorProblem, baselines=BASELINES, *, u0=None, config=None,
              budget=1000, fixed_a=None, tol=None, target_rel=1e-2):
    """Run DSM and the chosen baselines; returns rows ranked by solve count.

    Only methods that converge receive a rank. ``tol`` defaults to the DSM
    stop residual ``1e-8 (1 + ||f||)``; ``fixed_a`` defaults to ``r_stop``.
    """
    from .errors import UsageError

    bad = set(baselines) - set(BASELINES)
    if bad:
        raise UsageError(f"unknown baseline(s) {sorted(bad)}; choose from {', '.join(BASELINES)}")
    config = IntegratorConfig(audit=False) if config is None else config
    u0 = np.zeros(problem.n) if u0 is None else np.asarray(u0, dtype=float)
    tol = 1e-8 * (1 + problem.norm(problem.rhs)) if tol is None else tol
    try:
        dsm_row, plan = run_dsm(problem, u0, config)
        r0 = plan.schedule.r0
    except DSMError as exc:
        dsm_row, r0 = BenchRow("dsm", "failed", 0, math.nan, None, note=str(exc)), 1.0
    rows = [dsm_row]
    theta = problem.resolvent.theta
    unit = complex(math.cos(theta), math.sin(theta)) if theta else 1.0
    for name in BASELINES:
        if name not in baselines:
            continue
        if name == "newton-plain":
            shifts = (0.0 for _ in range(budget + 1))
        elif name == "fixed-a":
            a = config.r_stop if fixed_a is None else fixed_a
            shifts = (unit * a for _ in range(budget + 1))
        else:
            n_levels = int(math.ceil(math.log2(r0 / config.r_stop))) + 1
            shifts = (unit * r0 * 0.5 ** j for j in range(max(n_levels, 1)))
        log.info("bench: running %s", name)
        rows.append(newton_iteration(problem, u0, shifts, tol, budget, name,
                                     sweep=name == "geometric-a"))
    _judge(problem, rows, target_rel)
    _rank(rows)
    return rows
