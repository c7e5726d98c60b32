"""From a problem and a starting point to a validated schedule.

The schedule needs ``c2`` (a bound on ``c1 ||w_a||`` along the path) and
``g0 = ||u0 - w_{a(0)}||``, both of which depend on ``r0``. When ``r0`` is not
given, :func:`plan_run` searches for one: it raises ``r0`` past the scale
threshold and keeps doubling it while the distance or rate gate fails,
recomputing the path, ``c2`` and ``g0`` each time.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import UsageError
from .operator import OperatorProblem
from .path import RegularizedPath, default_a_sequence, track_path
from .schedule import (
    Schedule,
    ScheduleInputs,
    ValidationReport,
    derive_schedule,
    validate_initial_conditions,
)

log = logging.getLogger(__name__)

#: headroom on the measured path bound
C2_HEADROOM = 1.1


@dataclass
class RunPlan:
    problem: OperatorProblem
    u0: np.ndarray
    inputs: ScheduleInputs
    schedule: Schedule
    report: ValidationReport
    path: RegularizedPath
    g0_measured: float
    r0_source: str
    g0_source: str
    c2_source: str
    attempts: list = field(default_factory=list)

    @property
    def c2(self) -> float:
        return self.inputs.c2

    def as_dict(self):
        return {
            "inputs": {k: getattr(self.inputs, k) for k in
                       ("b", "kappa", "c0", "c1", "c2", "g0", "r0", "theta", "eps0")},
            "g0_measured": self.g0_measured,
            "sources": {"r0": self.r0_source, "g0": self.g0_source, "c2": self.c2_source},
            "schedule": self.schedule.as_dict(),
            "gates": self.report.as_dict(),
            "r0_attempts": self.attempts,
        }


def _inputs(problem, r0, g0, c2):
    sm, rp = problem.smoothness, problem.resolvent
    return ScheduleInputs(b=rp.b, kappa=sm.kappa, c0=sm.c0, c1=rp.c1, c2=c2, g0=g0,
                          r0=r0, theta=rp.theta, eps0=rp.eps0)


def plan_run(problem: OperatorProblem, u0=None, *, r0: Optional[float] = None,
             g0: Optional[float] = None, c2: Optional[float] = None,
             max_attempts: int = 40) -> RunPlan:
    """Measure ``c2`` and ``g0``, choose ``r0`` if needed, derive and validate the schedule.

    Explicit ``r0``, ``g0`` or ``c2`` override the measured values; an
    explicit ``r0`` disables the search.
    """
    rp = problem.resolvent
    u0 = np.zeros(problem.n) if u0 is None else np.asarray(problem.space.check(u0, "u0"), dtype=float)
    if r0 is not None and not 0 < r0:
        raise UsageError("r0 must be positive")
    r = float(r0) if r0 is not None else min(1.0, 0.5 * rp.eps0)
    attempts = []
    while True:
        path = track_path(problem, default_a_sequence(r, rp.theta), u0)
        if not path.entries:
            raise UsageError(f"no regularized solution found at |a|={r:.6g}: {path.aborted}")
        g0m = problem.norm(u0 - path.entries[0].w)
        c2v = float(c2) if c2 is not None else C2_HEADROOM * rp.c1 * max(path.max_norm(problem), 1e-300)
        g0v = float(g0) if g0 is not None else g0m
        inputs = _inputs(problem, r, g0v, c2v)
        sched = derive_schedule(inputs)
        report = validate_initial_conditions(sched, inputs)
        attempts.append({"r0": r, "g0": g0v, "c2": c2v, "passed": report.passed,
                         "failed": [gt.name for gt in report.failures()]})
        if report.passed or r0 is not None or len(attempts) >= max_attempts:
            break
        failed = {gt.name for gt in report.failures()}
        if "eps0" in failed:
            break
        scale = next(gt for gt in report.gates if gt.name == "scale")
        r_next = max(2.0 * r, 1.25 * scale.lhs) if "scale" in failed else 2.0 * r
        if r_next >= rp.eps0:
            break
        log.debug("r0=%g failed %s; trying %g", r, sorted(failed), r_next)
        r = r_next
    return RunPlan(problem, u0, inputs, sched, report, path, g0m,
                   "given" if r0 is not None else "auto",
                   "given" if g0 is not None else "measured",
                   "given" if c2 is not None else "measured", attempts)
