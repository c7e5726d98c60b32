"""Operator problems F(u) = f on finite-dimensional normed spaces.

This module holds the problem abstraction consumed by every other part of
the package: evaluation of ``F``, the derivative action ``A(u) h``, the
shifted (resolvent) solve ``(A(u) + a I)^{-1} v``, and empirical checks of
the Hölder and resolvent constants that the convergence theory assumes.
"""
from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla

from .errors import (
    DegenerateSample,
    EvaluationError,
    NondifferentiablePoint,
    ResolventSingular,
    UsageError,
)

log = logging.getLogger(__name__)

EPS = np.finfo(float).eps


@dataclass(frozen=True)
class VectorSpace:
    """Coordinate space R^n with an l2 or lp norm, 1 < p < inf."""

    dimension: int
    norm_kind: str = "l2"
    p_norm: float = 2.0

    def __post_init__(self):
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise UsageError(f"dimension must be a positive integer, got {self.dimension}")
        if self.norm_kind not in ("l2", "lp"):
            raise UsageError(f"unknown norm_kind {self.norm_kind!r}")
        if self.norm_kind == "l2":
            object.__setattr__(self, "p_norm", 2.0)
        elif not 1.0 < self.p_norm < math.inf:
            raise UsageError(f"p_norm must lie in (1, inf), got {self.p_norm}")

    def norm(self, v) -> float:
        v = np.asarray(v).ravel()
        # rescale by the largest entry so that tiny or huge vectors neither
        # underflow nor overflow when raised to the power p
        scale = float(np.max(np.abs(v))) if v.size else 0.0
        if scale == 0.0 or not np.isfinite(scale):
            return scale
        ord_ = 2 if self.norm_kind == "l2" else self.p_norm
        return scale * float(np.linalg.norm(v / scale, ord=ord_))

    def check(self, v, name="vector") -> np.ndarray:
        arr = np.asarray(v)
        if arr.ndim != 1 or arr.shape[0] != self.dimension:
            raise UsageError(
                f"{name} has shape {arr.shape}, expected ({self.dimension},)"
            )
        return arr


@dataclass(frozen=True)
class SmoothnessParams:
    """Hölder data ``||A(u) - A(v)|| <= c0 ||u - v||**kappa``."""

    c0: float
    kappa: float

    def __post_init__(self):
        if not self.c0 >= 0:
            raise UsageError(f"c0 must be nonnegative, got {self.c0}")
        if not 0.0 < self.kappa <= 1.0:
            raise UsageError(f"kappa must lie in (0, 1], got {self.kappa}")


@dataclass(frozen=True)
class ResolventParams:
    """Resolvent growth ``||(A + aI)^{-1}|| <= c1 / |a|**b`` on the ray of angle theta."""

    c1: float
    b: float
    eps0: float
    theta: float = 0.0

    def __post_init__(self):
        if not self.c1 > 0:
            raise UsageError(f"c1 must be positive, got {self.c1}")
        if not self.b > 0:
            raise UsageError(f"b must be positive, got {self.b}")
        if not self.eps0 > 0:
            raise UsageError(f"eps0 must be positive, got {self.eps0}")
        if not -math.pi < self.theta <= math.pi:
            raise UsageError(f"theta must lie in (-pi, pi], got {self.theta}")

    def shift(self, r):
        """The point ``e^{i theta} r`` of the ray; a real float when theta == 0."""
        if self.theta == 0.0:
            return float(r)
        return cmath.exp(1j * self.theta) * r


def _readonly(arr):
    if arr is None:
        return None
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class OperatorProblem:
    """An equation ``F(u) = f`` together with the constants of its analysis.

    Parameters
    ----------
    space : VectorSpace
    F : callable
        Maps a vector to a vector of the same dimension.
    rhs : array
        The right-hand side ``f``.
    smoothness, resolvent :
        Constants of the Hölder and resolvent assumptions.
    jac : callable, optional
        ``u -> A(u)`` as a dense matrix. Preferred over ``deriv``.
    deriv : callable, optional
        ``(u, h) -> A(u) h``. Used when no dense Jacobian is supplied.
    known_solution : array, optional
        A solution ``y`` with ``F(y) = f``.
    provenance : str
        ``"asserted"`` or ``"estimated"``, recording where the constants came from.
    """

    space: VectorSpace
    F: Callable[[np.ndarray], np.ndarray]
    rhs: np.ndarray
    smoothness: SmoothnessParams
    resolvent: ResolventParams
    jac: Optional[Callable[[np.ndarray], np.ndarray]] = None
    deriv: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    known_solution: Optional[np.ndarray] = None
    name: str = "problem"
    provenance: str = "asserted"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "rhs", _readonly(self.space.check(self.rhs, "rhs")))
        if self.known_solution is not None:
            y = _readonly(self.space.check(self.known_solution, "known_solution"))
            object.__setattr__(self, "known_solution", y)
        if self.provenance not in ("asserted", "estimated"):
            raise UsageError(f"unknown provenance {self.provenance!r}")

    @property
    def n(self) -> int:
        return self.space.dimension

    def norm(self, v) -> float:
        return self.space.norm(v)

    def replace(self, **changes) -> "OperatorProblem":
        from dataclasses import replace

        return replace(self, **changes)


def _finite_or_raise(out, what):
    bad = ~np.isfinite(out)
    if np.any(bad):
        idx = int(np.flatnonzero(bad)[0])
        raise EvaluationError(f"{what} is not finite in component {idx}: {out[idx]!r}", index=idx)
    return out


def eval_F(problem: OperatorProblem, u) -> np.ndarray:
    """Evaluate ``F(u)``."""
    u = problem.space.check(u, "u")
    out = np.asarray(problem.F(u))
    if out.shape != u.shape:
        raise UsageError(f"F returned shape {out.shape}, expected {u.shape}")
    return _finite_or_raise(out, "F(u)")


def _fd_step(u) -> float:
    return math.sqrt(EPS) * (1.0 + float(np.linalg.norm(u)))


def jacobian(problem: OperatorProblem, u) -> np.ndarray:
    """Dense matrix of ``A(u) = F'(u)``.

    Uses ``problem.jac`` when available, otherwise applies ``problem.deriv``
    to the unit vectors, otherwise forward differences with step
    ``sqrt(eps) * (1 + ||u||)``.
    """
    u = problem.space.check(u, "u")
    n = problem.n
    if problem.jac is not None:
        J = np.asarray(problem.jac(u))
        if J.shape != (n, n):
            raise UsageError(f"jac returned shape {J.shape}, expected {(n, n)}")
        return _finite_or_raise(J.ravel(), "A(u)").reshape(n, n)
    J = np.empty((n, n), dtype=np.result_type(u, float))
    if problem.deriv is not None:
        for j in range(n):
            e = np.zeros(n, dtype=J.dtype)
            e[j] = 1.0
            J[:, j] = problem.deriv(u, e)
    else:
        s = _fd_step(u)
        f0 = eval_F(problem, u)
        for j in range(n):
            up = np.array(u, dtype=J.dtype, copy=True)
            up[j] += s
            J[:, j] = (eval_F(problem, up) - f0) / s
    return _finite_or_raise(J.ravel(), "A(u)").reshape(n, n)


def apply_derivative(problem: OperatorProblem, u, h) -> np.ndarray:
    """The derivative action ``A(u) h``."""
    u = problem.space.check(u, "u")
    h = problem.space.check(h, "h")
    if problem.deriv is not None:
        out = np.asarray(problem.deriv(u, h))
    elif problem.jac is not None:
        out = jacobian(problem, u) @ h
    else:
        s = _fd_step(u)
        out = (eval_F(problem, u + s * h) - eval_F(problem, u)) / s
    return _finite_or_raise(out, "A(u)h")


def check_shift(problem: OperatorProblem, a, *, enforce_eps0=True):
    """Validate that ``a`` lies on the problem's ray inside ``0 < |a| < eps0``."""
    abs_a = abs(a)
    if abs_a == 0:
        raise UsageError("shift a must be nonzero")
    rp = problem.resolvent
    if enforce_eps0 and abs_a >= rp.eps0:
        raise UsageError(f"|a|={abs_a:.6g} is not below eps0={rp.eps0:.6g}")
    on_ray = abs(a - abs_a * cmath.exp(1j * rp.theta)) <= 1e-12 * abs_a
    if not on_ray:
        raise UsageError(
            f"shift a={a!r} is off the ray of angle theta={rp.theta:.6g}"
        )


def shifted_matrix(J, a):
    n = J.shape[0]
    dtype = np.result_type(J, type(a))
    M = np.array(J, dtype=dtype, copy=True)
    M[np.diag_indices(n)] += a
    return M


def solve_shifted(J, a, v, *, tol=1e-12, refine=2):
    """Solve ``(J + aI) h = v`` by LU with a singularity guard.

    Raises ResolventSingular when the reciprocal condition estimate falls
    below machine epsilon. Up to ``refine`` steps of iterative refinement
    are applied when the relative residual exceeds ``tol``.
    """
    M = shifted_matrix(J, a)
    v = np.asarray(v)
    anorm = np.linalg.norm(M, 1)
    if anorm == 0:
        raise ResolventSingular(abs(a), math.inf)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(M, check_finite=False)
    if np.any(np.diag(lu) == 0):
        raise ResolventSingular(abs(a), math.inf)
    gecon = sla.get_lapack_funcs("gecon", (lu,))
    rcond, _ = gecon(lu, anorm, norm="1")
    if not rcond > EPS:
        raise ResolventSingular(abs(a), 1.0 / rcond if rcond > 0 else math.inf)
    rhs = v.astype(np.result_type(M, v), copy=False)
    h = sla.lu_solve((lu, piv), rhs, check_finite=False)
    vnorm = np.linalg.norm(v)
    for _ in range(refine):
        res = rhs - M @ h
        if vnorm == 0 or np.linalg.norm(res) <= tol * vnorm:
            break
        h = h + sla.lu_solve((lu, piv), res, check_finite=False)
    return h


def apply_resolvent(problem: OperatorProblem, u, a, v, *, tol=1e-12,
                    enforce_eps0=True, J=None) -> np.ndarray:
    """Solve ``(A(u) + a I) h = v``.

    Parameters
    ----------
    a : float or complex
        Nonzero shift on the problem's ray, ``|a| < eps0``.
    J : array, optional
        Precomputed ``A(u)``; saves a Jacobian evaluation.
    """
    u = problem.space.check(u, "u")
    v = problem.space.check(v, "v")
    if not np.all(np.isfinite(v)):
        raise UsageError("right-hand side v must be finite")
    check_shift(problem, a, enforce_eps0=enforce_eps0)
    if J is None:
        J = jacobian(problem, u)
    return solve_shifted(J, a, v, tol=tol)


def operator_norm(M) -> float:
    """Spectral norm of a dense matrix (largest singular value)."""
    M = np.asarray(M)
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def estimate_holder_constants(problem: OperatorProblem, samples: int, radius: float,
                              center=None, *, seed=0, floor=1e-13):
    """Fit ``||A(u) - A(v)||_op ~ c0 ||u - v||**kappa`` from random pairs.

    Pairs are drawn uniformly from balls about ``center`` whose radii are
    log-uniform in ``[1e-6 * radius, radius]``, so that a local Hölder
    singularity at the center is seen at every scale. ``kappa`` is the least
    squares slope in log-log coordinates, clamped to ``(0, 1]``; ``c0`` is
    the intercept raised to the upper envelope of the sample, i.e. the
    smallest constant for which the fitted law bounds every pair.

    Returns ``(c0_est, kappa_est)``; a constant derivative gives ``(0.0, 1.0)``.
    """
    if samples < 10:
        raise UsageError("estimate_holder_constants needs samples >= 10")
    if not radius > 0:
        raise UsageError("radius must be positive")
    n = problem.n
    center = np.zeros(n) if center is None else problem.space.check(center, "center")
    rng = np.random.Generator(np.random.Philox(seed))

    def draw(R):
        d = rng.standard_normal(n)
        d /= np.linalg.norm(d)
        return center + d * R * rng.random() ** (1.0 / n)

    dists = np.empty(samples)
    diffs = np.empty(samples)
    for i in range(samples):
        R = radius * math.exp(rng.uniform(math.log(1e-6), 0.0))
        u, v = draw(R), draw(R)
        dists[i] = problem.norm(u - v)
        diffs[i] = operator_norm(jacobian(problem, u) - jacobian(problem, v))
    if np.all(dists < floor):
        raise DegenerateSample("all sampled pairs closer than 1e-13")
    scale = max(1.0, float(np.max(diffs)))
    keep = (dists >= floor) & (diffs > floor * scale)
    if not np.any(keep) or np.all(diffs <= floor * scale):
        return 0.0, 1.0
    if keep.sum() < 2:
        return float(diffs[keep][0] / dists[keep][0]), 1.0
    slope, _ = np.polyfit(np.log(dists[keep]), np.log(diffs[keep]), 1)
    kappa = float(min(max(slope, 1e-3), 1.0))
    c0 = float(np.max(diffs[keep] / dists[keep] ** kappa))
    return c0, kappa


@dataclass
class ResolventReport:
    theta: float
    b: float
    c1: float
    rows: list
    max_scaled: float
    failures: list
    passed: bool

    def as_dict(self):
        return {
            "theta": self.theta,
            "b": self.b,
            "c1": self.c1,
            "max_scaled_norm": self.max_scaled,
            "failures": self.failures,
            "passed": self.passed,
            "rows": self.rows,
        }


def verify_resolvent_bound(problem: OperatorProblem, u, r_grid, *, rtol=1e-8) -> ResolventReport:
    """Check ``||(A(u) + aI)^{-1}|| * r**b <= c1`` for ``a = e^{i theta} r``.

    The inverse norm is exact: the reciprocal of the smallest singular value
    of the shifted matrix. Singular shifts are recorded as failures.
    """
    rp = problem.resolvent
    J = jacobian(problem, u)
    rows, failures = [], []
    worst = 0.0
    for r in r_grid:
        r = float(r)
        if not 0 < r < rp.eps0:
            raise UsageError(f"grid value r={r} is outside (0, eps0={rp.eps0})")
        a = rp.shift(r)
        smin = float(np.linalg.svd(shifted_matrix(J, a), compute_uv=False)[-1])
        if smin <= 0 or not np.isfinite(smin):
            failures.append({"r": r, "reason": "singular"})
            rows.append({"r": r, "inv_norm": math.inf, "scaled": math.inf})
            continue
        inv = 1.0 / smin
        scaled = inv * r ** rp.b
        worst = max(worst, scaled)
        rows.append({"r": r, "inv_norm": inv, "scaled": scaled})
        if scaled > rp.c1 * (1 + rtol):
            failures.append({"r": r, "reason": f"scaled norm {scaled:.6g} > c1={rp.c1:.6g}"})
    return ResolventReport(rp.theta, rp.b, rp.c1, rows, worst, failures, not failures)


def norm_and_derivative(space: VectorSpace, w, wdot):
    """Return ``(||w||, d||w(t)||/dt)`` along a curve through ``w`` with velocity ``wdot``.

    The rate is the Gateaux derivative of the norm at ``w`` in the direction
    ``wdot``; its magnitude never exceeds ``||wdot||``.
    """
    w = np.asarray(space.check(w, "w"), dtype=float)
    wdot = np.asarray(space.check(wdot, "wdot"), dtype=float)
    nw = space.norm(w)
    if nw == 0:
        raise NondifferentiablePoint("the norm is not differentiable at w = 0")
    p = space.p_norm
    if space.norm_kind == "l2":
        rate = float(np.dot(w, wdot)) / nw
    else:
        # scale first: |w_i|**(p-1) underflows for tiny components
        x = w / nw
        rate = float(np.sum(np.sign(x) * np.abs(x) ** (p - 1.0) * wdot))
    bound = space.norm(wdot)
    if abs(rate) > bound:
        rate = math.copysign(bound, rate)
    return nw, rate
