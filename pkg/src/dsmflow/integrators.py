"""Adaptive time stepping for ``y' = -y + N(t, y)`` on long horizons.

The DSM flow has this form with ``N(t, u) = u - (A(u) + a(t) I)^{-1} G(u)``,
the regularized Newton map, whose dependence on ``u`` is weak near the
regularized path. The default stepper integrates the linear part exactly
with the exponential Runge-Kutta scheme shared with the scalar kernels, so
the step size is bounded by accuracy alone and grows in proportion to ``t``
once the solution becomes quasi-static. A Dormand-Prince 5(4) option
(``scipy.integrate.solve_ivp`` with ``RK45``) is kept for short horizons and
for cross-checking.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .kernels import exprk4_step

METHODS = ("exprk4", "dopri5")


@dataclass
class StepStats:
    nfev: int = 0
    accepted: int = 0
    rejected: int = 0
    error_sum: float = 0.0

    def as_dict(self):
        return {"nfev": self.nfev, "accepted": self.accepted,
                "rejected": self.rejected, "error_sum": self.error_sum}


@dataclass
class IntegrationResult:
    t: np.ndarray
    y: np.ndarray
    status: str
    message: str = ""
    t_fail: float = math.nan
    stats: StepStats = field(default_factory=StepStats)
    steps_t: list = field(default_factory=list)
    steps_y: list = field(default_factory=list)


def _err_norm(diff, y0, y1, rtol, atol):
    sc = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.sqrt(np.mean((np.abs(diff) / sc) ** 2)))


def integrate_exprk4(N, t_out, y0, *, rtol=1e-8, atol=1e-10, h0=0.01, hmin=1e-12,
                     max_steps=100_000, record_steps=False, stop=None):
    """Integrate ``y' = -y + N(t, y)`` and report ``y`` at every ``t_out``.

    Parameters
    ----------
    N : callable ``(t, y) -> array``
    t_out : increasing array
        ``t_out[0]`` is the initial time; the stepper lands on each entry exactly.
    rtol, atol : float
        Tolerances for the step-doubling error estimate (RMS norm).
    stop : callable ``(t, y) -> bool``, optional
        Checked at every output time; returning True ends the run with status
        ``"stopped"``.

    Returns
    -------
    IntegrationResult
        ``status`` is ``"ok"``, ``"stopped"``, ``"step-failure"`` or
        ``"max-steps"``. Rows of ``y`` past a failure are NaN.
    """
    t_out = np.asarray(t_out, dtype=float)
    y = np.array(y0, dtype=float, copy=True)
    Y = np.full((t_out.size, y.size), np.nan)
    Y[0] = y
    stats = StepStats()
    res = IntegrationResult(t_out, Y, "ok", stats=stats)
    t = float(t_out[0])

    def f(tt, yy):
        stats.nfev += 1
        return N(tt, yy)

    if stop is not None and stop(t, y):
        res.status = "stopped"
        return res
    h = float(h0)
    idx = 1
    while idx < t_out.size:
        if stats.accepted + stats.rejected >= max_steps:
            res.status, res.t_fail = "max-steps", t
            res.message = f"step budget {max_steps} exhausted at t={t:.6g}"
            return res
        target = float(t_out[idx])
        remaining = target - t
        if remaining <= 1e-14 * max(1.0, abs(t)):
            Y[idx] = y
            idx += 1
            if stop is not None and stop(target, y):
                res.status = "stopped"
                return res
            continue
        clipped = h >= remaining
        hs = remaining if clipped else h
        if hs < hmin:
            res.status, res.t_fail = "step-failure", t
            res.message = f"step size {hs:.3g} below {hmin:g} at t={t:.6g}"
            return res
        N1 = f(t, y)
        y_full = exprk4_step(1.0, f, t, y, hs, N1)
        hh = 0.5 * hs
        y_half = exprk4_step(1.0, f, t, y, hh, N1)
        y_two = exprk4_step(1.0, f, t + hh, y_half, hh, f(t + hh, y_half))
        if not (np.all(np.isfinite(y_two)) and np.all(np.isfinite(y_full))):
            stats.rejected += 1
            h = 0.25 * hs
            continue
        diff = (y_two - y_full) / 15.0
        errn = _err_norm(diff, y, y_two, rtol, atol)
        if errn <= 1.0:
            stats.accepted += 1
            stats.error_sum += float(np.linalg.norm(diff))
            t = target if clipped else t + hs
            y = y_two
            if record_steps:
                res.steps_t.append(t)
                res.steps_y.append(y.copy())
            fac = 4.0 if errn < 1e-10 else min(4.0, max(0.2, 0.9 * errn ** -0.2))
            hn = hs * fac
            h = max(hn, h) if clipped else hn
        else:
            stats.rejected += 1
            h = hs * max(0.2, 0.9 * errn ** -0.2)
    return res


def integrate_dopri5(N, t_out, y0, *, rtol=1e-8, atol=1e-10, h0=0.01, hmin=1e-12,
                     max_steps=100_000, record_steps=False, stop=None):
    """Same contract as :func:`integrate_exprk4`, using scipy's RK45 pair.

    Output times are integrated segment by segment so that ``stop`` is
    honoured. ``hmin`` and ``max_steps`` are enforced on the accumulated
    step counts.
    """
    t_out = np.asarray(t_out, dtype=float)
    y = np.array(y0, dtype=float, copy=True)
    Y = np.full((t_out.size, y.size), np.nan)
    Y[0] = y
    stats = StepStats()
    res = IntegrationResult(t_out, Y, "ok", stats=stats)
    if stop is not None and stop(float(t_out[0]), y):
        res.status = "stopped"
        return res

    def f(tt, yy):
        return -yy + N(tt, yy)

    first = h0
    for idx in range(1, t_out.size):
        t0, t1 = float(t_out[idx - 1]), float(t_out[idx])
        if t1 <= t0:
            Y[idx] = y
            continue
        sol = solve_ivp(f, (t0, t1), y, method="RK45", rtol=rtol, atol=atol,
                        first_step=min(first, t1 - t0))
        stats.nfev += sol.nfev
        nsteps = max(len(sol.t) - 1, 0)
        stats.accepted += nsteps
        if record_steps:
            res.steps_t.extend(sol.t[1:].tolist())
            res.steps_y.extend(list(sol.y[:, 1:].T))
        if not sol.success:
            res.status, res.t_fail = "step-failure", float(sol.t[-1])
            res.message = sol.message
            return res
        if nsteps:
            first = max(float(sol.t[-1] - sol.t[-2]), hmin)
        y = sol.y[:, -1].copy()
        Y[idx] = y
        if stats.accepted >= max_steps:
            res.status, res.t_fail = "max-steps", t1
            res.message = f"step budget {max_steps} exhausted at t={t1:.6g}"
            return res
        if stop is not None and stop(t1, y):
            res.status = "stopped"
            return res
    return res


def integrate(method, N, t_out, y0, **kw) -> IntegrationResult:
    if method == "exprk4":
        return integrate_exprk4(N, t_out, y0, **kw)
    if method == "dopri5":
        return integrate_dopri5(N, t_out, y0, **kw)
    from .errors import UsageError

    raise UsageError(f"unknown integrator {method!r}; choose from {METHODS}")
