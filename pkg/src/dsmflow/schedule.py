"""Regularization schedule for the DSM flow.

Given the problem constants, the decay law of ``r(t) = |a(t)|`` is

    r(t) = (c5 + c6 t) ** (-1 / (k p - 2)),   p = 1 + kappa,  k = (b + 1) / kappa,

with ``c5 = r0**(2 - kp)`` and ``c6 = (kp - 2) / (4 c4)``, ``c4 = c2 lam``,
``lam = r0**k / (2 g0)``. Along this law the error ``||u(t) - w_{a(t)}||``
stays below the envelope ``r(t)**k / lam`` once the initial conditions
checked by :func:`validate_initial_conditions` hold.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import asdict, dataclass

from .errors import UsageError

#: right-hand side of the schedule's defining ODE ``c4 |r'| / r**(kp-1) = 1/4``
SCHEDULE_QUARTER = 0.25

#: relative floor for a vanishing initial distance, ``g0 >= G0_FLOOR * r0**k``
G0_FLOOR = 1e-8


@dataclass(frozen=True)
class ScheduleInputs:
    b: float
    kappa: float
    c0: float
    c1: float
    c2: float
    g0: float
    r0: float
    theta: float = 0.0
    eps0: float = math.inf

    def __post_init__(self):
        if not self.b > 0:
            raise UsageError(f"b must be positive, got {self.b}")
        if not 0 < self.kappa <= 1:
            raise UsageError(f"kappa must lie in (0, 1], got {self.kappa}")
        if not self.c0 >= 0:
            raise UsageError(f"c0 must be nonnegative, got {self.c0}")
        if not (self.c1 > 0 and self.c2 > 0):
            raise UsageError("c1 and c2 must be positive")
        if not self.g0 >= 0:
            raise UsageError(f"g0 must be nonnegative, got {self.g0}")
        if not self.r0 > 0:
            raise UsageError(f"r0 must be positive, got {self.r0}")
        if not self.eps0 > 0:
            raise UsageError(f"eps0 must be positive, got {self.eps0}")


@dataclass(frozen=True)
class Schedule:
    p: float
    k: float
    lam: float
    c3: float
    c4: float
    c5: float
    c6: float
    r0: float
    theta: float = 0.0
    eps0: float = math.inf
    quarter: float = SCHEDULE_QUARTER

    @property
    def m(self) -> float:
        """The exponent ``kp - 2`` of the decay law."""
        return self.k * self.p - 2.0

    def s(self, t):
        return self.c5 + self.c6 * t

    def r(self, t) -> float:
        return self.s(t) ** (-1.0 / self.m)

    def rdot(self, t) -> float:
        m = self.m
        return -self.c6 / m * self.s(t) ** (-1.0 / m - 1.0)

    def shift(self, t):
        r = self.r(t)
        if self.theta == 0.0:
            return r
        return cmath.exp(1j * self.theta) * r

    def envelope(self, t) -> float:
        return self.r(t) ** self.k / self.lam

    def time_at(self, r: float) -> float:
        """Inverse of the decay law: the time at which ``r(t) == r``."""
        if not r > 0:
            raise UsageError("r must be positive")
        return max(0.0, (r ** (-self.m) - self.c5) / self.c6)

    def time_at_envelope(self, level: float) -> float:
        return self.time_at((level * self.lam) ** (1.0 / self.k))

    def as_dict(self):
        d = asdict(self)
        d["kp_minus_2"] = self.m
        return d


def derive_exponent(b: float, kappa: float) -> float:
    """``k = (b + 1) / (p - 1)`` with ``p = 1 + kappa``."""
    if not 0 < kappa <= 1:
        raise UsageError(f"kappa must lie in (0, 1], got {kappa}")
    if not b > 0:
        raise UsageError(f"b must be positive, got {b}")
    return (b + 1.0) / kappa


def derive_lambda(r0: float, k: float, g0: float) -> float:
    """``lam = r0**k / (2 g0)``, so that ``g0 lam / r0**k == 1/2``."""
    if not g0 > 0:
        raise UsageError("g0 must be positive; apply the floor with floored_g0()")
    return r0 ** k / (2.0 * g0)


def floored_g0(g0_measured: float, r0: float, k: float) -> float:
    return max(g0_measured, G0_FLOOR * r0 ** k)


def derive_schedule(inputs: ScheduleInputs) -> Schedule:
    p = 1.0 + inputs.kappa
    k = derive_exponent(inputs.b, inputs.kappa)
    g0 = floored_g0(inputs.g0, inputs.r0, k)
    lam = derive_lambda(inputs.r0, k, g0)
    c3 = inputs.c0 * inputs.c1
    c4 = inputs.c2 * lam
    m = k * p - 2.0
    c5 = inputs.r0 ** (-m)
    c6 = m / (4.0 * c4)
    return Schedule(p=p, k=k, lam=lam, c3=c3, c4=c4, c5=c5, c6=c6, r0=inputs.r0,
                    theta=inputs.theta, eps0=inputs.eps0)


@dataclass
class Gate:
    name: str
    equation: str
    lhs: float
    rhs: float
    passed: bool
    remedy: str = ""

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    def as_dict(self):
        return {"name": self.name, "equation": self.equation, "lhs": self.lhs,
                "rhs": self.rhs, "slack": self.slack, "passed": self.passed,
                "remedy": self.remedy}


@dataclass
class ValidationReport:
    gates: list
    info: list

    @property
    def passed(self) -> bool:
        return all(g.passed for g in self.gates)

    def failures(self):
        return [g for g in self.gates if not g.passed]

    def as_dict(self):
        return {"passed": self.passed,
                "gates": [g.as_dict() for g in self.gates],
                "info": [g.as_dict() for g in self.info]}

    def remediation(self) -> str:
        return "\n".join(f"{g.name} gate [{g.equation}] failed: {g.remedy}" for g in self.failures())


def _fmt(x):
    return f"{x:.6g}"


def validate_initial_conditions(schedule: Schedule, inputs: ScheduleInputs) -> ValidationReport:
    """Check the sufficient conditions on ``r0`` and ``g0``.

    Gates, each with its slack ``rhs - lhs``:

    * ``rate``: ``k r0**(kp-2) / (4 c4) <= 1/2``, i.e. ``k |r'|/r <= 1/2`` at t=0,
    * ``distance``: ``g0 <= (c2 / k) r0**(b-1)``,
    * ``scale``: ``r0 >= [4 c3 (2 c2 / k)**(p-1)] ** (1 / (kappa + (1-kappa) b))``,
    * ``eps0``: ``r0 < eps0``.

    ``info`` carries ``c3 (2 g0)**(p-1) / r0**b <= 1/4``, the inequality the
    last two gates are meant to imply, for audit only.
    """
    s, x = schedule, inputs
    k, p, b, kappa = s.k, s.p, x.b, x.kappa
    r0, c2, c3, c4 = x.r0, x.c2, s.c3, s.c4
    g0 = floored_g0(x.g0, r0, k)
    m = s.m
    gates = []

    lhs = k * r0 ** m / (4.0 * c4)
    ok = lhs <= 0.5
    # lhs == k g0 r0**(b-1) / (2 c2)
    g0_max = c2 / (k * r0 ** (b - 1.0))
    gates.append(Gate("rate", "k*r0**(kp-2)/(4*c4) <= 1/2", lhs, 0.5, ok,
                      "" if ok else f"lower g0 to <= {_fmt(g0_max)}" + _r0_direction(k * g0 / c2, 1.0 - b)))

    rhs = c2 / k * r0 ** (b - 1.0)
    ok = g0 <= rhs
    remedy = ""
    if not ok:
        remedy = f"lower g0 to <= {_fmt(rhs)}" + _r0_direction(k * g0 / c2, b - 1.0)
    gates.append(Gate("distance", "g0 <= (c2/k)*r0**(b-1)", g0, rhs, ok, remedy))

    expo = kappa + (1.0 - kappa) * b
    thresh = (4.0 * c3 * (2.0 * c2 / k) ** (p - 1.0)) ** (1.0 / expo) if c3 > 0 else 0.0
    ok = r0 >= thresh
    gates.append(Gate("scale", "r0 >= (4*c3*(2*c2/k)**(p-1))**(1/(kappa+(1-kappa)*b))", thresh, r0, ok,
                      "" if ok else f"raise r0 to >= {_fmt(thresh)}"))

    ok = r0 < x.eps0
    gates.append(Gate("eps0", "r0 < eps0", r0, x.eps0, ok,
                      "" if ok else f"lower r0 below eps0={_fmt(x.eps0)}"))

    lhs60 = c3 * (2.0 * g0) ** (p - 1.0) / r0 ** b
    info = [Gate("nonlinear-term", "c3*(2*g0)**(p-1)/r0**b <= 1/4", lhs60, 0.25, lhs60 <= 0.25)]
    return ValidationReport(gates, info)


def _r0_direction(Y, e):
    """Remedy text for ``r0**e >= Y`` solved for ``r0``."""
    if e == 0:
        return ""
    try:
        bound = Y ** (1.0 / e)
    except OverflowError:
        return ""
    if not math.isfinite(bound) or bound == 0:
        return ""
    return f", or {'raise' if e > 0 else 'lower'} r0 to {'>=' if e > 0 else '<='} {_fmt(bound)}"


def evaluate(schedule: Schedule, t: float):
    """Return ``(r, rdot, a, envelope)`` at time ``t >= 0``."""
    if not t >= 0:
        raise UsageError(f"t must be nonnegative, got {t}")
    return schedule.r(t), schedule.rdot(t), schedule.shift(t), schedule.envelope(t)


def majorant_terms(schedule: Schedule, c2: float, b: float, t: float):
    """Both sides of the majorant condition for the DSM comparison instance.

    With ``gamma = 1``, ``alpha(t, g) = c3 r**-b g**p``, ``beta = c2 |r'| r**-b``
    and ``mu = lam r**-k``, returns ``(alpha(t, 1/mu) + beta, (1/mu)(1 - mu'/mu))``.
    """
    s = schedule
    r, rd = s.r(t), s.rdot(t)
    inv_mu = r ** s.k / s.lam
    lhs = s.c3 * r ** (-b) * inv_mu ** s.p + c2 * abs(rd) * r ** (-b)
    rhs = inv_mu * (1.0 - s.k * abs(rd) / r)
    return lhs, rhs
