"""Numerical certification of the differential-inequality comparison lemma.

If ``g' <= -gamma(t) g + alpha(t, g) + beta(t)`` with ``g(0) = g0`` and a
positive ``mu`` satisfies the majorant conditions

    alpha(t, 1/mu) + beta(t) <= (1/mu) (gamma(t) - mu'(t)/mu(t)),
    mu(0) g0 <= 1,

then ``g(t) <= 1/mu(t)`` for all ``t``. The certificate checks the conditions
on a grid (plus midpoints), integrates the comparison equation
``phi' = -gamma phi + alpha(t, phi) + beta`` with ``phi(0) = g0`` and checks
``g <= phi <= 1/mu`` pointwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import kernels
from .errors import EvaluationError, UsageError

BLOWUP = 1e12
PHI_RTOL = 1e-10


def tol_cert(inv_mu, rel=1e-8):
    return rel * (1.0 + np.asarray(inv_mu))


@dataclass(frozen=True)
class PowerLaw:
    """Coefficients of power-law form in ``s = s0 + s1 t``.

    ``gamma`` constant, ``alpha(t, g) = A s**ea g**p``, ``beta = B s**eb``
    and ``1/mu = M s**em``.
    """

    gamma: float
    A: float
    ea: float
    B: float
    eb: float
    M: float
    em: float
    p: float
    s0: float = 1.0
    s1: float = 0.0

    def s(self, t):
        return self.s0 + self.s1 * np.asarray(t, dtype=float)


@dataclass(frozen=True)
class InequalityInstance:
    """Data of one comparison-lemma application.

    ``alpha(t, g)`` must be locally Lipschitz in ``g``; ``dalpha_dg`` is its
    partial derivative (finite differences are used when omitted).
    ``mudot`` defaults to a centred difference of ``mu``.
    """

    gamma: Callable[[float], float]
    alpha: Callable[[float, float], float]
    beta: Callable[[float], float]
    mu: Callable[[float], float]
    g0: float
    T: float
    grid: np.ndarray
    mudot: Optional[Callable[[float], float]] = None
    dalpha_dg: Optional[Callable[[float, float], float]] = None
    powerlaw: Optional[PowerLaw] = None
    label: str = "instance"

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        if grid.ndim != 1 or grid.size < 2:
            raise UsageError("grid needs at least two points")
        if np.any(np.diff(grid) <= 0):
            raise UsageError("grid must be strictly increasing")
        if grid[0] != 0.0 or grid[-1] < self.T * (1 - 1e-12):
            raise UsageError("grid must start at 0 and cover [0, T]")
        if not self.g0 >= 0:
            raise UsageError("g0 must be nonnegative")
        object.__setattr__(self, "grid", grid)

    def mu_rate(self, t):
        """``mu'(t) / mu(t)``."""
        if self.mudot is not None:
            return self.mudot(t) / self.mu(t)
        h = 1e-6 * max(1.0, abs(t))
        lo = max(0.0, t - h)
        return (math.log(self.mu(t + h)) - math.log(self.mu(lo))) / (t + h - lo)

    def with_beta_scaled(self, factor: float, g0_factor: float = 1.0) -> "InequalityInstance":
        """Same instance with ``beta`` and ``g0`` multiplied by the given factors."""
        beta = self.beta
        pl = self.powerlaw
        if pl is not None:
            pl = replace(pl, B=pl.B * factor)
        return replace(self, beta=lambda t: factor * beta(t), g0=self.g0 * g0_factor,
                       powerlaw=pl, label=f"{self.label}*beta{factor:.3g}")

    def refined(self) -> "InequalityInstance":
        """Same instance on the grid refined by 2x (midpoints inserted)."""
        g = self.grid
        fine = np.empty(2 * g.size - 1)
        fine[0::2] = g
        fine[1::2] = 0.5 * (g[:-1] + g[1:])
        return replace(self, grid=fine)


@dataclass
class PhiTrajectory:
    t: np.ndarray
    phi: np.ndarray
    status: str
    blowup_time: float = math.nan
    nsteps: int = 0
    nreject: int = 0

    @property
    def blew_up(self) -> bool:
        return self.status == "blow-up"


@dataclass
class Certificate:
    condition9_margin: float
    condition10_ok: bool
    sandwich_ok: bool
    max_violation: float
    worst_t: float = math.nan
    lower_ok: bool = True
    upper_ok: bool = True
    blowup: bool = False
    details: dict = field(default_factory=dict)

    @property
    def majorant_ok(self) -> bool:
        return self.details.get("condition9_ok", self.condition9_margin >= 0)

    @property
    def passed(self) -> bool:
        return self.majorant_ok and self.condition10_ok and self.sandwich_ok

    def as_dict(self):
        return {"condition9_margin": self.condition9_margin,
                "condition9_ok": self.majorant_ok,
                "condition10_ok": self.condition10_ok,
                "sandwich_ok": self.sandwich_ok, "lower_ok": self.lower_ok,
                "upper_ok": self.upper_ok, "max_violation": self.max_violation,
                "worst_t": self.worst_t, "blowup": self.blowup, "passed": self.passed}


def _with_midpoints(grid):
    mid = 0.5 * (grid[:-1] + grid[1:])
    out = np.empty(grid.size + mid.size)
    out[0::2] = grid
    out[1::2] = mid
    return out


def _finite(val, name, t):
    val = float(val)
    if not math.isfinite(val):
        raise EvaluationError(f"{name} is not finite at t={t:.6g}", t=t)
    return val


def check_conditions(instance: InequalityInstance, *, rel_tol=1e-8):
    """Evaluate the majorant condition on grid and midpoints, and ``mu(0) g0 <= 1``.

    Returns ``(margin, condition10_ok, condition9_ok)``: the smallest slack
    ``(1/mu)(gamma - mu'/mu) - alpha(t, 1/mu) - beta`` and the two flags.
    ``condition9_ok`` allows a rounding tolerance ``rel_tol (1 + 1/mu)``.
    """
    margin = math.inf
    ok9 = True
    for t in _with_midpoints(instance.grid):
        mu = _finite(instance.mu(t), "mu", t)
        if not mu > 0:
            raise EvaluationError(f"mu must be positive, got {mu} at t={t:.6g}", t=t)
        inv = 1.0 / mu
        lhs = _finite(instance.alpha(t, inv), "alpha", t) + _finite(instance.beta(t), "beta", t)
        rhs = inv * (_finite(instance.gamma(t), "gamma", t) - _finite(instance.mu_rate(t), "mu'/mu", t))
        slack = rhs - lhs
        margin = min(margin, slack)
        if slack < -rel_tol * (1.0 + inv):
            ok9 = False
    ok10 = instance.mu(0.0) * instance.g0 <= 1.0 + 1e-12
    return margin, bool(ok10), ok9


def integrate_phi(instance: InequalityInstance, *, rtol=PHI_RTOL, blowup=BLOWUP,
                  use_kernel=True) -> PhiTrajectory:
    """Integrate the comparison equation on the instance grid.

    Power-law instances go through the compiled kernel when available.
    ``status`` is ``"ok"``, ``"blow-up"`` (``phi`` exceeded ``blowup``) or a
    kernel failure name.
    """
    grid = instance.grid
    pl = instance.powerlaw
    if pl is not None and use_kernel:
        y, status, t_fail, nst, nrej = kernels.integrate_powerlaw(
            pl.gamma, pl.A, pl.ea, pl.B, pl.eb, pl.s0, pl.s1, pl.p, instance.g0, grid,
            rtol=rtol, blowup=blowup)
    else:
        alpha, beta = instance.alpha, instance.beta
        dadg = instance.dalpha_dg

        def N(t, g):
            return alpha(t, g) + beta(t)

        if dadg is None:
            def dNdy(t, g):
                h = 1e-7 * max(abs(g), 1e-300)
                return (alpha(t, g + h) - alpha(t, g - h)) / (2 * h) if g - h >= 0 else \
                    (alpha(t, g + h) - alpha(t, g)) / h
        else:
            dNdy = dadg
        y, status, t_fail, nst, nrej = kernels.integrate_scalar(
            instance.gamma, N, dNdy, grid, instance.g0, rtol=rtol, blowup=blowup)
    name = kernels.STATUS_NAMES[status]
    return PhiTrajectory(grid, y, name, t_fail if status == kernels.BLOWUP else math.nan, nst, nrej)


def verify_sandwich(g_samples, instance: InequalityInstance, *, phi: Optional[PhiTrajectory] = None,
                    rel_tol=1e-8) -> Certificate:
    """Check ``g <= phi <= 1/mu`` on the grid, with tolerance ``rel_tol (1 + 1/mu)``.

    ``max_violation`` measures the conclusion ``g <= 1/mu``: the largest
    excess of ``g`` or ``phi`` over ``1/mu``. The largest ``g - phi`` is in
    ``details["max_lower_violation"]``.
    """
    g = np.asarray(g_samples, dtype=float)
    if g.shape != instance.grid.shape:
        raise UsageError(f"g_samples has shape {g.shape}, expected {instance.grid.shape}")
    if g[0] > instance.g0 * (1 + 1e-12) + 1e-300:
        raise UsageError("g_samples(0) exceeds g0")
    margin, ok10, ok9 = check_conditions(instance, rel_tol=rel_tol)
    phi = integrate_phi(instance) if phi is None else phi
    inv_mu = np.array([1.0 / instance.mu(t) for t in instance.grid])
    tol = tol_cert(inv_mu, rel_tol)
    valid = np.isfinite(phi.phi)
    lower = np.where(valid, g - phi.phi, np.inf)
    upper = np.where(valid, phi.phi - inv_mu, np.inf)
    # the certified conclusion is g <= 1/mu; report how far g or phi exceed it
    viol = np.maximum(g - inv_mu, upper)
    j = int(np.argmax(viol))
    lower_ok = bool(np.all(lower <= tol))
    upper_ok = bool(np.all(upper <= tol))
    return Certificate(
        condition9_margin=float(margin), condition10_ok=ok10,
        sandwich_ok=lower_ok and upper_ok and phi.status == "ok",
        max_violation=float(max(viol[j], 0.0)), worst_t=float(instance.grid[j]),
        lower_ok=lower_ok, upper_ok=upper_ok, blowup=phi.blew_up,
        details={"condition9_ok": ok9, "phi_status": phi.status,
                 "max_lower_violation": float(max(np.max(lower), 0.0)),
                 "phi_steps": phi.nsteps, "blowup_time": phi.blowup_time})


def powerlaw_instance(pl: PowerLaw, g0: float, grid, label="powerlaw") -> InequalityInstance:
    """Build an instance whose callables are the power laws of ``pl``."""
    grid = np.asarray(grid, dtype=float)

    def s(t):
        return pl.s0 + pl.s1 * t

    return InequalityInstance(
        gamma=lambda t: pl.gamma,
        alpha=lambda t, g: pl.A * s(t) ** pl.ea * abs(g) ** pl.p,
        beta=lambda t: pl.B * s(t) ** pl.eb,
        mu=lambda t: 1.0 / (pl.M * s(t) ** pl.em),
        mudot=lambda t: -pl.em * pl.s1 / s(t) / (pl.M * s(t) ** pl.em),
        dalpha_dg=lambda t, g: pl.A * s(t) ** pl.ea * pl.p * math.copysign(abs(g) ** (pl.p - 1), g),
        g0=g0, T=float(grid[-1]), grid=grid, powerlaw=pl, label=label)


def dsm_instance(schedule, c2: float, b: float, g0: float, grid, label="dsm") -> InequalityInstance:
    """The comparison instance governing ``||u(t) - w_{a(t)}||`` under ``schedule``.

    ``gamma = 1``, ``alpha(t, g) = c3 r**-b g**p``, ``beta = c2 |r'| r**-b``
    and ``mu = lam r**-k``. With ``s = c5 + c6 t`` and ``m = kp - 2`` every
    coefficient is a power of ``s``.
    """
    m = schedule.m
    pl = PowerLaw(
        gamma=1.0,
        A=schedule.c3, ea=b / m,
        B=c2 * schedule.c6 / m, eb=(b - 1.0) / m - 1.0,
        M=1.0 / schedule.lam, em=-schedule.k / m,
        p=schedule.p, s0=schedule.c5, s1=schedule.c6)
    return powerlaw_instance(pl, g0, grid, label=label)


def log_grid(T: float, n: int = 64, t_first=None):
    """``0`` followed by ``n`` log-spaced points ending at ``T``."""
    t_first = min(1e-2, T / 10) if t_first is None else t_first
    return np.concatenate([[0.0], np.geomspace(t_first, T, n)])


def random_passing_instance(rng: np.random.Generator, n_grid=64):
    """A random instance with ``alpha = alpha(t) g**p``, ``p`` in (1, 2], that meets both conditions.

    Half of the draws are constant-coefficient instances; the rest come from
    a random schedule whose gates pass.
    """
    from .schedule import (G0_FLOOR, ScheduleInputs, derive_exponent, derive_schedule,
                           validate_initial_conditions)

    kappa = float(rng.uniform(0.05, 1.0))
    p = 1.0 + kappa
    if rng.random() < 0.5:
        gamma = float(rng.uniform(0.2, 3.0))
        inv_mu = float(rng.uniform(0.1, 5.0))
        share = float(rng.uniform(0.05, 0.95))
        A = share * gamma * inv_mu / inv_mu ** p
        B = (1 - share) * gamma * inv_mu * float(rng.uniform(0.0, 1.0))
        pl = PowerLaw(gamma, A, 0.0, B, 0.0, inv_mu, 0.0, p)
        g0 = inv_mu * float(rng.uniform(0.0, 1.0))
        T = float(rng.uniform(5.0, 50.0)) / gamma
        return powerlaw_instance(pl, g0, log_grid(T, n_grid), label="constant")
    while True:
        b = float(rng.uniform(0.25, 3.0))
        k = derive_exponent(b, kappa)
        c0 = float(rng.uniform(0.0, 3.0))
        c1 = float(rng.uniform(0.5, 2.0))
        c2 = float(rng.uniform(0.5, 3.0))
        expo = kappa + (1 - kappa) * b
        thresh = (4 * c0 * c1 * (2 * c2 / k) ** kappa) ** (1 / expo) if c0 > 0 else 0.0
        r0 = max(thresh * float(rng.uniform(1.0, 2.0)), float(rng.uniform(0.5, 4.0)))
        g0 = float(rng.uniform(0.1, 0.99)) * min(c2 / k * r0 ** (b - 1), c2 / k * r0 ** (1 - b))
        # the g0 floor would override a smaller draw; redraw instead
        if g0 >= G0_FLOOR * r0 ** k:
            break
    inputs = ScheduleInputs(b=b, kappa=kappa, c0=c0, c1=c1, c2=c2, g0=g0, r0=r0)
    sched = derive_schedule(inputs)
    if not validate_initial_conditions(sched, inputs).passed:  # pragma: no cover - by construction
        raise AssertionError("random schedule failed its gates")
    T = sched.time_at(r0 * 1e-2)
    return dsm_instance(sched, c2, b, g0, log_grid(T, n_grid), label="schedule")
