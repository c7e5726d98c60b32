"""The regularized path ``a -> w_a`` solving ``F(w) + a w = f``.

``w_a`` is the moving target of the DSM flow: the quantity certified by the
envelope is the distance ``||u(t) - w_{a(t)}||``. The path is computed by
damped Newton on ``G(w) = F(w) + a w - f`` whose Jacobian is exactly the
shifted operator ``A(w) + a I``; consecutive points are warm-started.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .errors import NoConvergence, UsageError
from .operator import OperatorProblem, check_shift, eval_F, jacobian, solve_shifted

log = logging.getLogger(__name__)

NEWTON_MAX_ITER = 100
ARMIJO_C = 1e-4
MIN_STEP = 2.0 ** -30


def residual_tol(problem: OperatorProblem, rel=1e-12) -> float:
    return rel * (1.0 + problem.norm(problem.rhs))


def _G(problem, w, a):
    return eval_F(problem, w) + a * w - problem.rhs


def solve_regularized(problem: OperatorProblem, a, initial_guess, *, tol=None,
                      max_iter=NEWTON_MAX_ITER, polish=0, enforce_eps0=True):
    """Solve ``F(w) + a w = f`` by damped Newton with Armijo backtracking.

    Parameters
    ----------
    a : float or complex
        Shift on the problem's ray. A complex shift yields a complex ``w``;
        ``F`` must then accept complex input (linear problems do).
    tol : float, optional
        Residual target; default ``1e-12 (1 + ||f||)``.
    polish : int
        Extra full Newton steps taken after convergence, each kept only if it
        lowers the residual. Oracles use this to push ``w_a`` to working
        precision.

    Returns
    -------
    (w, residual, iterations)
    """
    check_shift(problem, a, enforce_eps0=enforce_eps0)
    tol = residual_tol(problem) if tol is None else tol
    dtype = complex if isinstance(a, complex) else float
    w = np.array(problem.space.check(initial_guess, "initial_guess"), dtype=dtype, copy=True)
    G = _G(problem, w, a)
    res = problem.norm(G)
    it = 0
    while res > tol:
        if it >= max_iter:
            raise NoConvergence(
                f"damped Newton stalled at |a|={abs(a):.3e}: residual {res:.3e} after {it} iterations",
                res, it, last=w)
        it += 1
        d = solve_shifted(jacobian(problem, w), a, -G)
        step = 1.0
        while True:
            w_new = w + step * d
            try:
                G_new = _G(problem, w_new, a)
                res_new = problem.norm(G_new)
            except ArithmeticError:
                res_new = math.inf
            if res_new <= (1.0 - ARMIJO_C * step) * res:
                break
            step *= 0.5
            if step < MIN_STEP:
                raise NoConvergence(
                    f"line search failed at |a|={abs(a):.3e}: residual {res:.3e}", res, it, last=w)
        w, G, res = w_new, G_new, res_new
    for _ in range(polish):
        if res == 0:
            break
        w_new = w + solve_shifted(jacobian(problem, w), a, -G)
        G_new = _G(problem, w_new, a)
        res_new = problem.norm(G_new)
        if not res_new < res:
            break
        w, G, res = w_new, G_new, res_new
    return w, res, it


@dataclass
class PathEntry:
    a: complex
    w: np.ndarray
    residual: float
    newton_iters: int

    @property
    def abs_a(self) -> float:
        return abs(self.a)


@dataclass
class RegularizedPath:
    entries: list = field(default_factory=list)
    limit_estimate: Optional[np.ndarray] = None
    cauchy_decreasing: Optional[bool] = None
    aborted: Optional[str] = None

    def __len__(self):
        return len(self.entries)

    def max_norm(self, problem: OperatorProblem) -> float:
        return max((problem.norm(e.w) for e in self.entries), default=0.0)

    def increments(self, problem: OperatorProblem):
        return [problem.norm(self.entries[j + 1].w - self.entries[j].w)
                for j in range(len(self.entries) - 1)]

    def rows(self, problem: OperatorProblem):
        """CSV rows ``|a|, residual, newton_iters, dist_to_limit, dist_to_y``."""
        y = problem.known_solution
        lim = self.limit_estimate
        out = []
        for e in self.entries:
            out.append({
                "abs_a": e.abs_a,
                "residual": e.residual,
                "newton_iters": e.newton_iters,
                "dist_to_limit": problem.norm(e.w - lim) if lim is not None else math.nan,
                "dist_to_y": problem.norm(e.w - y) if y is not None else math.nan,
            })
        return out


def default_a_sequence(r0: float, theta: float = 0.0, ratio=0.5):
    """Geometric radii from ``r0`` down to ``max(1e-8, r0 2**-40)`` on the ray."""
    r_end = max(1e-8, r0 * 2.0 ** -40)
    radii = []
    r = r0
    while r >= r_end * (1 - 1e-12):
        radii.append(r)
        r *= ratio
    if theta == 0.0:
        return radii
    rot = complex(math.cos(theta), math.sin(theta))
    return [rot * r for r in radii]


def track_path(problem: OperatorProblem, a_values, w_start, *, tol=None,
               enforce_eps0=True) -> RegularizedPath:
    """Follow ``w_a`` along decreasing ``|a|`` with warm starts.

    The first ``NoConvergence`` ends the path; the valid prefix is returned
    with ``aborted`` set to the failure message.
    """
    path = RegularizedPath()
    w = np.asarray(w_start)
    prev = math.inf
    for a in a_values:
        if not abs(a) < prev:
            raise UsageError("a_values must have strictly decreasing |a|")
        prev = abs(a)
        try:
            w, res, it = solve_regularized(problem, a, w, tol=tol, enforce_eps0=enforce_eps0)
        except NoConvergence as exc:
            log.warning("path aborted: %s", exc)
            path.aborted = str(exc)
            break
        path.entries.append(PathEntry(a, w, res, it))
    if path.entries:
        path.limit_estimate = path.entries[-1].w
        inc = path.increments(problem)
        path.cauchy_decreasing = all(inc[j + 1] <= inc[j] * (1 + 1e-9) + 1e-14
                                     for j in range(len(inc) - 1))
    return path


def path_derivative(problem: OperatorProblem, w, a, adot):
    """``dw/dt = -adot (A(w) + a I)^{-1} w``, from differentiating ``F(w) + a w = f``."""
    return -adot * solve_shifted(jacobian(problem, w), a, np.asarray(w))


def path_derivative_check(problem: OperatorProblem, path: RegularizedPath, schedule,
                          *, c2=None, rel_step=1e-4, rtol=1e-5):
    """Audit ``w'`` along the path against finite differences and the a priori bounds.

    For each entry the time is ``t = schedule.time_at(|a|)``. The analytic
    derivative is compared with a centred difference of fresh solves at
    ``a (1 +- rel_step)``. The bounds checked are
    ``||w'|| <= c1 |r'| r**-b ||w||`` and ``||w'|| <= c2 |r'| r**-b``.

    Returns a dict with one row per entry and an overall ``passed`` flag.
    """
    rp = problem.resolvent
    c2 = schedule.c4 / schedule.lam if c2 is None else c2
    rows = []
    for e in path.entries:
        r = e.abs_a
        t = schedule.time_at(r)
        rdot = schedule.rdot(t)
        unit = e.a / r
        adot = unit * rdot
        wd = path_derivative(problem, e.w, e.a, adot)
        ap, am = e.a * (1 + rel_step), e.a * (1 - rel_step)
        wp, _, _ = solve_regularized(problem, ap, e.w, polish=2, enforce_eps0=False)
        wm, _, _ = solve_regularized(problem, am, e.w, polish=2, enforce_eps0=False)
        wd_fd = (wp - wm) / (ap - am) * adot
        n_an, n_fd = problem.norm(wd), problem.norm(wd_fd)
        diff = problem.norm(wd - wd_fd)
        b32 = rp.c1 * abs(rdot) * r ** (-rp.b) * problem.norm(e.w)
        b35 = c2 * abs(rdot) * r ** (-rp.b)
        fd_ok = diff <= rtol * max(n_an, 1e-300) + 1e-14
        rows.append({
            "abs_a": r, "t": t, "wdot_analytic": n_an, "wdot_fd": n_fd,
            "rel_diff": diff / n_an if n_an > 0 else diff,
            "bound_resolvent": b32, "bound_c2": b35,
            "fd_ok": bool(fd_ok),
            "resolvent_bound_ok": bool(n_an <= b32 * (1 + 1e-8) + 1e-300),
            "c2_bound_ok": bool(n_an <= b35 * (1 + 1e-8) + 1e-300),
        })
    passed = all(r["fd_ok"] and r["resolvent_bound_ok"] and r["c2_bound_ok"] for r in rows)
    return {"passed": passed, "rows": rows}


def tikhonov_solution(A, f, a):
    """``(A^T A + a I)^{-1} A^T f``, via QR of the stacked system ``[A; sqrt(a) I]``.

    The stacked least-squares form has condition number about
    ``||A|| / sqrt(a)`` rather than ``||A||**2 / a``.
    """
    A = np.asarray(A, dtype=float)
    m, n = A.shape
    K = np.vstack([A, math.sqrt(a) * np.eye(n)])
    rhs = np.concatenate([np.asarray(f, dtype=float), np.zeros(n)])
    Q, R = sla.qr(K, mode="economic")
    return sla.solve_triangular(R, Q.T @ rhs)


def normal_solution(A, f, a_sequence):
    """Approximate the minimal-norm solution of ``A y = f`` as ``a -> 0``.

    Returns ``(y_normal, history)``. ``history`` holds, per ``a``, the iterate
    norm, the residual ``||A y_a - f||`` and the step ``||y_{a_j} - y_{a_{j-1}}||``,
    together with the flags ``bounded`` and ``residual_decreasing``.
    """
    A = np.asarray(A, dtype=float)
    f = np.asarray(f, dtype=float)
    a_sequence = [float(a) for a in a_sequence]
    if any(a <= 0 for a in a_sequence) or any(
            a_sequence[j + 1] >= a_sequence[j] for j in range(len(a_sequence) - 1)):
        raise UsageError("a_sequence must be strictly decreasing positive numbers")
    rows = []
    y_prev = None
    y = np.zeros(A.shape[1])
    for a in a_sequence:
        y = tikhonov_solution(A, f, a)
        rows.append({
            "a": a,
            "norm": float(np.linalg.norm(y)),
            "residual": float(np.linalg.norm(A @ y - f)),
            "step": math.nan if y_prev is None else float(np.linalg.norm(y - y_prev)),
        })
        y_prev = y
    norms = [r["norm"] for r in rows]
    res = [r["residual"] for r in rows]
    history = {
        "rows": rows,
        # the Tikhonov iterates increase in norm towards ||A^+ f||
        "bounded": all(norms[j] <= norms[j + 1] * (1 + 1e-9) + 1e-14 for j in range(len(norms) - 1)),
        "residual_decreasing": all(res[j + 1] <= res[j] * (1 + 1e-9) + 1e-14 for j in range(len(res) - 1)),
    }
    return y, history
