"""The DSM flow ``u' = -(A(u) + a(t) I)^{-1} (F(u) + a(t) u - f)``.

The flow is integrated under a derived :class:`~dsmflow.schedule.Schedule`.
Oracle solves of the regularized equation at sampled times measure the
distance ``||u(t) - w_{a(t)}||``, which the envelope ``r(t)**k / lam``
bounds when the schedule gates pass.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import EvaluationError, NoConvergence, ResolventSingular, UsageError
from .integrators import METHODS, integrate
from .operator import OperatorProblem, eval_F, jacobian, solve_shifted
from .path import solve_regularized
from .schedule import Schedule

log = logging.getLogger(__name__)

CONVERGED = "Converged"
HORIZON = "HorizonReached"
STEP_FAILURE = "StepFailure"
RESOLVENT_FAILURE = "ResolventFailure"


@dataclass
class IntegratorConfig:
    """Integration and sampling settings.

    ``r_stop`` sets the planned horizon ``T = schedule.time_at(r_stop)``
    (capped by ``T_max``); the run is ``Converged`` when it ends there with
    the regularized residual below ``stop_residual``, or earlier if the
    unregularized residual ``||F(u) - f||`` drops below it at a check.

    Oracle samples are log-spaced in time: ``n_samples`` inside the window
    where the envelope exceeds ``resolution * (abs_tol + rel_tol * scale)``
    and ``n_tail`` after it, where only ``dist_to_y`` is meaningful.
    """

    initial_step: float = 0.01
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    T_max: Optional[float] = None
    stop_residual: Optional[float] = None
    max_steps: int = 200_000
    method: str = "exprk4"
    r_stop: float = 1e-4
    n_samples: int = 32
    n_tail: int = 16
    resolution: float = 20.0
    audit: bool = True
    min_step: float = 1e-12

    def __post_init__(self):
        for name in ("initial_step", "rel_tol", "abs_tol", "r_stop", "resolution", "min_step"):
            if not getattr(self, name) > 0:
                raise UsageError(f"{name} must be positive")
        if self.T_max is not None and not self.T_max > 0:
            raise UsageError("T_max must be positive")
        if self.stop_residual is not None and not self.stop_residual > 0:
            raise UsageError("stop_residual must be positive")
        if self.method not in METHODS:
            raise UsageError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.max_steps < 1 or self.n_samples < 1 or self.n_tail < 0:
            raise UsageError("max_steps and n_samples must be positive, n_tail nonnegative")

    def as_dict(self):
        return asdict(self)


@dataclass
class TrajectoryPoint:
    t: float
    u: np.ndarray
    r: float
    residual: float
    envelope: float
    dist_to_w: Optional[float] = None
    dist_to_y: Optional[float] = None
    resolved: Optional[bool] = None
    kind: str = "step"


@dataclass
class Trajectory:
    points: list
    status: str
    message: str = ""
    t_end: float = math.nan
    t_resolved: float = math.nan
    stats: dict = field(default_factory=dict)
    audit: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def final(self) -> TrajectoryPoint:
        return self.points[-1]

    def samples(self, resolved_only=False):
        out = [p for p in self.points if p.kind == "sample"]
        if resolved_only:
            out = [p for p in out if p.resolved]
        return out

    def rows(self):
        """CSV rows ``t, r, residual, envelope, dist_to_w, dist_to_y``."""
        return [(p.t, p.r, p.residual, p.envelope, p.dist_to_w, p.dist_to_y) for p in self.points]


def _residual_vec(problem, u, a):
    return eval_F(problem, u) + a * u - problem.rhs


def rhs(problem: OperatorProblem, schedule: Schedule, t: float, u, diagnostics=None):
    """``-(A(u) + a(t) I)^{-1} (F(u) + a(t) u - f)`` by one resolvent solve.

    For a complex shift the real part is returned; the norm of the discarded
    imaginary part, relative to ``||u||``, is accumulated as a maximum in
    ``diagnostics["max_imag_ratio"]`` (skipped while ``u = 0``).
    """
    a = schedule.shift(t)
    u = np.asarray(u)
    try:
        d = solve_shifted(jacobian(problem, u), a, _residual_vec(problem, u, a))
    except ResolventSingular as exc:
        raise ResolventSingular(exc.abs_a, exc.condition, t=t) from None
    if np.iscomplexobj(d):
        imag = problem.norm(d.imag)
        unorm = problem.norm(u)
        if diagnostics is not None and unorm > 0:
            diagnostics["max_imag_ratio"] = max(diagnostics.get("max_imag_ratio", 0.0), imag / unorm)
        d = d.real
    return -d


def sample_times(schedule: Schedule, config: IntegratorConfig, t_end: float, scale: float):
    """``(sample_times, t_resolved)``; see :class:`IntegratorConfig`."""
    floor = config.resolution * (config.abs_tol + config.rel_tol * scale)
    if schedule.envelope(0.0) <= floor:
        t_res = 0.0
    else:
        t_res = min(t_end, schedule.time_at_envelope(floor))
    times = []
    if t_res > 0:
        t_lo = min(1e-2, t_res / 100.0)
        times.extend(np.geomspace(t_lo, t_res, config.n_samples).tolist())
    if config.n_tail and t_end > t_res * (1 + 1e-12):
        lo = max(t_res, min(1e-2, t_end / 100.0))
        times.extend(np.geomspace(lo, t_end, config.n_tail + 1)[1:].tolist())
    times = sorted(set(t for t in times if 0 < t <= t_end))
    if not times or times[-1] < t_end:
        times.append(t_end)
    return np.array(times), t_res


def _audit_offsets(t):
    d = min(1e-3 * max(t, 1.0), t / 4.0)
    return d, [t - 2 * d, t - d, t + d, t + 2 * d]


def solve(problem: OperatorProblem, schedule: Schedule, u0, config: Optional[IntegratorConfig] = None,
          oracles=True, c2: Optional[float] = None) -> Trajectory:
    """Integrate the DSM flow from ``u0``.

    Parameters
    ----------
    oracles : bool
        Attach ``dist_to_w`` (fresh regularized solves) at the sample times,
        and ``dist_to_y`` when the problem has a known solution.
    c2 : float, optional
        Path bound used by the master-inequality audit; defaults to
        ``schedule.c4 / schedule.lam``.
    """
    config = IntegratorConfig() if config is None else config
    u0 = np.asarray(problem.space.check(u0, "u0"), dtype=float)
    f_norm = problem.norm(problem.rhs)
    stop_res = config.stop_residual if config.stop_residual is not None else 1e-8 * (1.0 + f_norm)
    t_end = schedule.time_at(config.r_stop)
    if config.T_max is not None:
        t_end = min(t_end, config.T_max)
    if t_end <= 0:
        t_end = config.T_max if config.T_max is not None else 1.0
    scale = max(1.0, problem.norm(u0), f_norm)
    samples, t_res = sample_times(schedule, config, t_end, scale)
    audit_times = {}
    if oracles and config.audit:
        for t in samples:
            d, offs = _audit_offsets(t)
            if t <= t_res and offs[-1] <= t_end:
                audit_times[t] = (d, offs)
    out = {0.0, *samples.tolist()}
    for _, offs in audit_times.values():
        out.update(offs)
    t_out = np.array(sorted(out))

    diag = {"max_imag_ratio": 0.0}
    y_known = problem.known_solution

    def N(t, u):
        return u + rhs(problem, schedule, t, u, diag)

    def stop(t, u):
        return problem.norm(eval_F(problem, u) - problem.rhs) <= stop_res

    status, message = HORIZON, ""
    try:
        res = integrate(config.method, N, t_out, u0, rtol=config.rel_tol, atol=config.abs_tol,
                        h0=config.initial_step, hmin=config.min_step,
                        max_steps=config.max_steps, record_steps=True, stop=stop)
        if res.status in ("step-failure", "max-steps"):
            status, message = STEP_FAILURE, res.message
    except ResolventSingular as exc:
        status, message, res = RESOLVENT_FAILURE, str(exc), None
    except EvaluationError as exc:
        status, message, res = STEP_FAILURE, str(exc), None

    if res is None:
        # failure before any output: report the initial point only
        a0 = schedule.shift(0.0)
        pts = [TrajectoryPoint(0.0, u0, schedule.r(0.0), problem.norm(_residual_vec(problem, u0, a0)),
                               schedule.envelope(0.0), kind="sample")]
        return Trajectory(pts, status, message, t_end, t_res, diagnostics=diag)

    # merge accepted steps with output times
    states = {0.0: u0}
    for t, u in zip(res.steps_t, res.steps_y):
        states[t] = u
    reached = {float(t): res.y[i] for i, t in enumerate(res.t) if np.all(np.isfinite(res.y[i]))}
    states.update(reached)
    sample_set = set(samples.tolist()) | {0.0}
    audit_set = {t for _, offs in audit_times.values() for t in offs}

    oracle_cache = {}

    def oracle(t, u):
        if t in oracle_cache:
            return oracle_cache[t]
        a = schedule.shift(t)
        try:
            w, wres, _ = solve_regularized(problem, a, u, polish=2, enforce_eps0=False)
        except (NoConvergence, ResolventSingular) as exc:
            log.warning("oracle solve failed at t=%g: %s", t, exc)
            oracle_cache[t] = None
            return None
        if np.iscomplexobj(w):
            # the real-projected flow tracks Re(w_a); the imaginary part is reported
            diag["max_path_imag"] = max(diag.get("max_path_imag", 0.0), problem.norm(w.imag))
            w = w.real
        oracle_cache[t] = (problem.norm(u - w), wres)
        return oracle_cache[t]

    env_floor = config.resolution * (config.abs_tol + config.rel_tol * scale)
    points = []
    sup_u = 0.0
    for t in sorted(states):
        u = states[t]
        r = schedule.r(t)
        a = schedule.shift(t)
        env = schedule.envelope(t)
        kind = "sample" if t in sample_set else ("audit" if t in audit_set else "step")
        p = TrajectoryPoint(t, u, r, problem.norm(_residual_vec(problem, u, a)), env, kind=kind)
        sup_u = max(sup_u, problem.norm(u))
        if oracles and kind != "step":
            got = oracle(t, u)
            if got is not None:
                p.dist_to_w = got[0]
            p.resolved = env > env_floor
            if y_known is not None:
                p.dist_to_y = problem.norm(u - y_known)
        points.append(p)

    final = points[-1]
    if status == HORIZON:
        if res.status == "stopped":
            status, message = CONVERGED, f"||F(u) - f|| <= {stop_res:.3g} at t={final.t:.6g}"
        elif final.t >= t_end * (1 - 1e-12) and final.r <= config.r_stop * (1 + 1e-12) \
                and final.residual <= stop_res:
            status, message = CONVERGED, f"r={final.r:.3g} <= r_stop with residual {final.residual:.3g}"
        elif final.t >= t_end * (1 - 1e-12) and final.r <= config.r_stop * (1 + 1e-12) \
                and np.iscomplexobj(schedule.shift(final.t)) \
                and problem.norm(rhs(problem, schedule, final.t, final.u)) <= stop_res:
            # on a complex ray a real u cannot zero the complex residual;
            # a stationary real-projected flow is the analogue
            status, message = CONVERGED, f"r={final.r:.3g} <= r_stop with a stationary projected flow"
        else:
            message = f"horizon t={final.t:.6g} reached with residual {final.residual:.3g}"

    traj = Trajectory(points, status, message, t_end, t_res, stats=res.stats.as_dict(),
                      diagnostics=diag)
    traj.diagnostics["sup_norm_u"] = sup_u
    tot = res.stats.accepted + res.stats.rejected
    traj.diagnostics["rejection_rate"] = res.stats.rejected / tot if tot else 0.0
    traj.diagnostics["stop_residual"] = stop_res
    traj.diagnostics["envelope_floor"] = env_floor

    if oracles and config.audit:
        c2v = schedule.c4 / schedule.lam if c2 is None else c2
        traj.audit = _master_audit(problem, schedule, config, states, audit_times, oracle, c2v)
    return traj


def _master_audit(problem, schedule, config, states, audit_times, oracle, c2):
    """Finite-difference audit of ``g' <= -g + c2 |r'| r**-b + c3 r**-b g**p`` with ``g = dist_to_w``."""
    b = problem.resolvent.b
    c1 = problem.resolvent.c1
    n = problem.n
    rows = []
    for t, (d, offs) in sorted(audit_times.items()):
        ts = [offs[0], offs[1], t, offs[2], offs[3]]
        if any(s not in states for s in ts):
            continue
        vals = [oracle(s, states[s]) for s in ts]
        if any(v is None for v in vals):
            continue
        g = [v[0] for v in vals]
        fd1 = (g[3] - g[1]) / (2 * d)
        fd2 = (g[4] - g[0]) / (4 * d)
        r = schedule.r(t)
        u = states[t]
        e_u = math.sqrt(n) * (config.abs_tol + config.rel_tol * float(np.max(np.abs(u))))
        e_w = max(v[1] for v in vals) * c1 * r ** (-b)
        disc = abs(fd2 - fd1) / 3.0 + 2.0 * (e_u + e_w) / (2 * d)
        bound = -g[2] + c2 * abs(schedule.rdot(t)) * r ** (-b) + schedule.c3 * r ** (-b) * g[2] ** schedule.p
        viol = max(0.0, fd1 - bound)
        rows.append({"t": t, "g": g[2], "gdot_fd": fd1, "bound": bound, "violation": viol,
                     "disc_estimate": disc, "ok": viol <= 10.0 * disc})
    return rows


def envelope_check(trajectory: Trajectory, tol_env: float = 0.05):
    """Check ``dist_to_w <= envelope (1 + tol_env)`` at the resolved samples.

    Samples whose envelope lies below the run's numerical floor are counted
    as unresolved and excluded. Raises UsageError when fewer than ten
    samples carry ``dist_to_w``.
    """
    pts = [p for p in trajectory.samples() if p.dist_to_w is not None]
    if len(pts) < 10:
        raise UsageError(f"envelope check needs >= 10 samples with dist_to_w, got {len(pts)}")
    resolved = [p for p in pts if p.resolved]
    bad = [p for p in resolved if p.dist_to_w > p.envelope * (1 + tol_env)]
    slack = min((1.0 - p.dist_to_w / p.envelope for p in resolved), default=math.nan)
    worst = max(resolved, key=lambda p: p.dist_to_w / p.envelope, default=None)
    return {
        "passed": bool(resolved) and not bad,
        "n_samples": len(pts),
        "n_resolved": len(resolved),
        "n_violations": len(bad),
        "min_relative_slack": slack,
        "max_ratio": worst.dist_to_w / worst.envelope if worst else math.nan,
        "worst_t": worst.t if worst else math.nan,
        "tol_env": tol_env,
    }


def audit_summary(trajectory: Trajectory):
    rows = trajectory.audit
    return {
        "passed": bool(rows) and all(r["ok"] for r in rows),
        "n_points": len(rows),
        "max_violation": max((r["violation"] for r in rows), default=0.0),
        "n_failures": sum(not r["ok"] for r in rows),
    }


def convergence_check(trajectory: Trajectory, problem: OperatorProblem, rel=1e-3):
    """Final ``dist_to_y <= rel (1 + ||y||)`` and nonincrease over the last quartile of samples."""
    y = problem.known_solution
    if y is None:
        raise UsageError("convergence check needs a known solution")
    pts = [p for p in trajectory.samples() if p.dist_to_y is not None]
    if not pts:
        raise UsageError("trajectory has no dist_to_y samples")
    thresh = rel * (1.0 + problem.norm(y))
    tail = pts[len(pts) - max(2, len(pts) // 4):]
    d = [p.dist_to_y for p in tail]
    mono = all(d[j + 1] <= d[j] * (1 + 1e-9) + 1e-15 for j in range(len(d) - 1))
    final = pts[-1]
    return {
        "passed": final.dist_to_y <= thresh and mono,
        "final_dist_to_y": final.dist_to_y,
        "threshold": thresh,
        "final_r": final.r,
        "reached_r": min(p.r for p in pts),
        "tail_nonincreasing": mono,
    }


__all__ = [
    "IntegratorConfig", "Trajectory", "TrajectoryPoint", "rhs", "solve", "envelope_check",
    "audit_summary", "convergence_check", "sample_times", "CONVERGED", "HORIZON",
    "STEP_FAILURE", "RESOLVENT_FAILURE",
]
