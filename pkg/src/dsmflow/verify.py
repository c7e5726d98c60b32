"""Invariant suites behind ``dsm verify``.

Each check returns a :class:`Check` with a pass flag and the measured
margin. Suites: ``operator``, ``schedule``, ``lemma1``, ``path``,
``theorem``; ``all`` runs every one of them.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import comparison as cmp
from .gallery import gallery_make, rank_deficient_matrix, rng_for
from .operator import (
    OperatorProblem,
    ResolventParams,
    SmoothnessParams,
    VectorSpace,
    apply_derivative,
    apply_resolvent,
    estimate_holder_constants,
    jacobian,
    norm_and_derivative,
    operator_norm,
    verify_resolvent_bound,
)
from .path import default_a_sequence, normal_solution, path_derivative_check, track_path
from .plan import plan_run
from .schedule import (
    ScheduleInputs,
    derive_exponent,
    derive_schedule,
    majorant_terms,
    validate_initial_conditions,
)
from .solver import IntegratorConfig, audit_summary, convergence_check, envelope_check, solve

log = logging.getLogger(__name__)

SUITES = ("operator", "schedule", "lemma1", "path", "theorem")


@dataclass
class Check:
    suite: str
    name: str
    passed: bool
    value: float = math.nan
    limit: float = math.nan
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def as_dict(self):
        return {"suite": self.suite, "name": self.name, "passed": self.passed,
                "value": self.value, "limit": self.limit, "detail": self.detail}

    def line(self):
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag} {self.suite}/{self.name}: value={self.value:.6g} limit={self.limit:.6g}"


# ----------------------------------------------------------------- operator


def psd_problem(n, rng):
    """``F(u) = S u`` for a random symmetric positive semidefinite ``S`` (rank <= n)."""
    rank = int(rng.integers(0, n + 1))
    G = rng.standard_normal((n, rank))
    S = G @ G.T
    return OperatorProblem(VectorSpace(n), lambda u: S @ u, np.zeros(n),
                           SmoothnessParams(0.0, 1.0), ResolventParams(1.0, 1.0, math.inf),
                           jac=lambda u: S)


def check_resolvent_psd(seed=0, instances=100, n_max=50):
    rng = rng_for(seed)
    worst = 0.0
    # below about 1e-3 the smallest singular value of S + rI carries rounding
    # error of order eps ||S|| / r, which is not a property of the bound
    grid = np.geomspace(1e-3, 1e3, 25)
    for _ in range(instances):
        P = psd_problem(int(rng.integers(1, n_max + 1)), rng)
        rep = verify_resolvent_bound(P, np.zeros(P.n), grid)
        worst = max(worst, rep.max_scaled)
    return Check("operator", "resolvent-bound-psd", worst <= 1 + 1e-8, worst, 1 + 1e-8,
                 {"instances": instances})


def smooth_curve(rng, n):
    """``w(s) = c0 + c1 sin(s w1) + c2 cos(s w2)``, with a bound on ``|w''|``."""
    c0, c1, c2 = rng.standard_normal((3, n))
    w1, w2 = rng.uniform(0.5, 2.0, 2)

    def w(s):
        return c0 + c1 * np.sin(w1 * s) + c2 * np.cos(w2 * s)

    def wdot(s):
        return c1 * w1 * np.cos(w1 * s) - c2 * w2 * np.sin(w2 * s)

    accel = np.abs(c1) * w1 ** 2 + np.abs(c2) * w2 ** 2
    return w, wdot, accel


def lemma4_case(space: VectorSpace, rng, s=1e-4):
    """One random curve: returns ``(|FD rate|, ||w'|| + 10 s M)``.

    ``M`` bounds the second derivative of ``||w(t)||`` near ``t``: in l2 it is
    at most ``||w''|| + ||w'||**2 / ||w||``. For lp the second term picks up
    the l2/lp equivalence factor, taken generously as ``n``, and ``||w||`` is
    replaced by half its value to cover the interval ``[t - s, t + s]``.
    """
    n = space.dimension
    w, wdot, accel = smooth_curve(rng, n)
    t = float(rng.uniform(-1, 1))
    wn = space.norm(w(t))
    M = space.norm(accel) + space.norm(wdot(t)) ** 2 / max(wn * 0.5, 1e-12) * n
    fd = (space.norm(w(t + s)) - space.norm(w(t - s))) / (2 * s)
    _, rate = norm_and_derivative(space, w(t), wdot(t))
    return abs(fd), space.norm(wdot(t)) + 10 * s * M, rate


def check_lemma4(seed=0, curves=100):
    rng = rng_for(seed + 1)
    worst = -math.inf
    rate_ok = True
    for space in (VectorSpace(5), VectorSpace(5, "lp", 1.5), VectorSpace(5, "lp", 3.0)):
        for _ in range(curves):
            fd, bound, rate = lemma4_case(space, rng)
            worst = max(worst, fd - bound)
            rate_ok &= abs(rate) <= bound
    return Check("operator", "norm-rate-bound", worst <= 0 and rate_ok, worst, 0.0,
                 {"curves_per_norm": curves, "norms": ["l2", "l1.5", "l3"]})


def check_derivative_linearity(seed=0):
    rng = rng_for(seed + 2)
    worst = 0.0
    for name, kw in (("monotone-holder", {"kappa": 0.5}), ("monotone-smooth", {}),
                     ("illposed-kernel", {})):
        P = gallery_make(name, n=8, seed=seed, **kw)
        for _ in range(10):
            u, h1, h2 = rng.standard_normal((3, P.n))
            al, be = rng.standard_normal(2)
            lhs = apply_derivative(P, u, al * h1 + be * h2)
            rhs = al * apply_derivative(P, u, h1) + be * apply_derivative(P, u, h2)
            worst = max(worst, np.linalg.norm(lhs - rhs) / (np.linalg.norm(h1) + np.linalg.norm(h2)))
    return Check("operator", "derivative-linearity", worst <= 1e-10, worst, 1e-10)


def check_resolvent_consistency(seed=0):
    rng = rng_for(seed + 3)
    worst = 0.0
    for name in ("monotone-holder", "monotone-smooth", "wellposed-linear", "illposed-kernel"):
        P = gallery_make(name, n=8, seed=seed)
        for a in (1.0, 1e-3, 1e-6):
            u, v = rng.standard_normal((2, P.n))
            h = apply_resolvent(P, u, a, v)
            back = jacobian(P, u) @ h + a * h
            worst = max(worst, np.linalg.norm(back - v) / np.linalg.norm(v))
    return Check("operator", "resolvent-consistency", worst <= 1e-10, worst, 1e-10)


def check_holder_gallery(seed=0):
    rng = rng_for(seed + 4)
    worst = 0.0
    for name, kw in (("monotone-holder", {"kappa": 0.5}), ("monotone-holder", {"kappa": 1.0}),
                     ("monotone-smooth", {})):
        P = gallery_make(name, n=6, seed=seed, **kw)
        c0, kappa = P.smoothness.c0, P.smoothness.kappa
        for _ in range(100):
            u, v = rng.standard_normal((2, P.n)) * rng.uniform(0.01, 2.0)
            d = P.norm(u - v)
            lhs = operator_norm(jacobian(P, u) - jacobian(P, v))
            worst = max(worst, lhs / (c0 * d ** kappa))
    return Check("operator", "holder-bound-gallery", worst <= 1 + 1e-8, worst, 1 + 1e-8)


def check_holder_estimate(seed=0):
    P = gallery_make("monotone-holder", n=4, kappa=0.5, seed=seed)
    c0, kappa = estimate_holder_constants(P, 200, 1.0, seed=seed)
    ok = 0.45 <= kappa <= 0.55 and c0 <= 1.6
    return Check("operator", "holder-estimate", ok, kappa, 0.55, {"c0_est": c0, "kappa_est": kappa})


def check_path_inequality(seed=0):
    rng = rng_for(seed + 5)
    worst = 0.0
    for theta in (0.0, 0.7, -1.2, math.pi / 2):
        inputs = ScheduleInputs(b=1.0, kappa=1.0, c0=0.0, c1=1.0, c2=1.0, g0=0.25, r0=1.0, theta=theta)
        s = derive_schedule(inputs)
        for t in rng.uniform(0, 100, 20):
            h = 1e-6 * max(1.0, t)
            adot = (s.shift(t + h) - s.shift(t - h)) / (2 * h)
            rdot_fd = (s.r(t + h) - s.r(t - h)) / (2 * h)
            worst = max(worst, abs(abs(adot) - abs(rdot_fd)) / abs(rdot_fd))
    return Check("operator", "ray-derivative-equality", worst <= 1e-8, worst, 1e-8,
                 {"note": "finite differences of a and r share the same step"})


# ----------------------------------------------------------------- schedule


def check_exponent_identities(seed=0, draws=1000):
    rng = rng_for(seed + 6)
    worst = 0.0
    kp_ok = True
    pos_ok = True
    for _ in range(draws):
        b = float(3.0 * (1.0 - rng.random()))
        kappa = float(1.0 - rng.random())
        p = 1 + kappa
        k = derive_exponent(b, kappa)
        worst = max(worst,
                    abs(k - (b + 1) / (p - 1)) / k,
                    abs((k + b) - (k * p - 1)) / (k * p - 1),
                    abs((k * (p - 1) - 2) - (b - 1)) / max(abs(b - 1), 1.0))
        kp_ok &= k * p > 2
        pos_ok &= kappa + (1 - kappa) * b > 0
    return Check("schedule", "exponent-identities", worst <= 1e-12 and kp_ok and pos_ok, worst, 1e-12,
                 {"draws": draws, "kp_gt_2": kp_ok, "exponent_positive": pos_ok})


def check_schedule_ode(seed=0):
    rng = rng_for(seed + 7)
    worst = 0.0
    mono = True
    for _ in range(50):
        inputs = ScheduleInputs(b=float(rng.uniform(0.1, 3)), kappa=float(rng.uniform(0.05, 1)),
                                c0=1.0, c1=1.0, c2=float(rng.uniform(0.5, 3)),
                                g0=float(rng.uniform(0.01, 1)), r0=float(rng.uniform(0.5, 5)))
        s = derive_schedule(inputs)
        ts = np.concatenate([[0.0], np.geomspace(1e-3, s.time_at(s.r0 * 1e-3), 100)])
        for t in ts:
            val = s.c4 * abs(s.rdot(t)) / s.r(t) ** (s.k * s.p - 1)
            worst = max(worst, abs(val - 0.25) / 0.25)
        r = np.array([s.r(t) for t in ts])
        rd = np.abs([s.rdot(t) for t in ts])
        mono &= bool(np.all(np.diff(r) < 0) and np.all(np.diff(rd) < 0))
    return Check("schedule", "decay-law-ode", worst <= 1e-10 and mono, worst, 1e-10,
                 {"monotone": mono})


def check_majorant(seed=0):
    rng = rng_for(seed + 8)
    worst = math.inf
    tried = 0
    while tried < 100:
        inst = cmp.random_passing_instance(rng)
        if inst.label != "schedule":
            continue
        tried += 1
        margin, ok10, ok9 = cmp.check_conditions(inst)
        worst = min(worst, margin if ok9 and ok10 else -math.inf)
    # the gallery schedule through the schedule module's own formula
    P = gallery_make("monotone-holder", n=2, kappa=0.5, seed=seed)
    plan = plan_run(P)
    for t in np.geomspace(1e-3, plan.schedule.time_at(1e-3), 200):
        lhs, rhs = majorant_terms(plan.schedule, plan.c2, P.resolvent.b, t)
        worst = min(worst, (rhs - lhs) / rhs + 1e-12)
    return Check("schedule", "majorant-condition", worst >= 0, worst, 0.0, {"schedules": tried + 1})


def check_gate_example():
    inputs = ScheduleInputs(b=1, kappa=1, c0=0, c1=1, c2=1, g0=0.25, r0=1)
    s = derive_schedule(inputs)
    rep = validate_initial_conditions(s, inputs)
    ok = rep.passed and abs(s.r(12) - 0.5) < 1e-15 and abs(s.lam - 2) < 1e-15
    return Check("schedule", "worked-example", ok, s.r(12.0), 0.5)


# ----------------------------------------------------------------- lemma 1


def check_logistic():
    grid = np.array([0.0, 0.5, 1.0, 2.0])
    inst = cmp.InequalityInstance(gamma=lambda t: 1.0, alpha=lambda t, g: g * g, beta=lambda t: 0.0,
                                  mu=lambda t: 2.0, g0=0.5, T=2.0, grid=grid)
    phi = cmp.integrate_phi(inst)
    err = float(np.max(np.abs(phi.phi - 1 / (1 + np.exp(grid)))))
    return Check("lemma1", "logistic-closed-form", err <= 1e-8, err, 1e-8)


def check_random_sandwich(seed=0, instances=100):
    rng = rng_for(seed + 9)
    worst = 0.0
    failures = 0
    for _ in range(instances):
        inst = cmp.random_passing_instance(rng)
        phi = cmp.integrate_phi(inst)
        sub = inst.with_beta_scaled(float(rng.random()), float(rng.random()))
        g = cmp.integrate_phi(sub).phi
        cert = cmp.verify_sandwich(g, inst, phi=phi)
        worst = max(worst, cert.max_violation)
        failures += not cert.passed
    return Check("lemma1", "random-sandwich", failures == 0, worst, 0.0,
                 {"instances": instances, "failures": failures})


def check_monotone_in_beta(seed=0, instances=50):
    rng = rng_for(seed + 10)
    worst = -math.inf
    for _ in range(instances):
        inst = cmp.random_passing_instance(rng)
        lo = inst.with_beta_scaled(float(rng.random()))
        d = cmp.integrate_phi(lo).phi - cmp.integrate_phi(inst).phi
        worst = max(worst, float(np.max(d)))
    return Check("lemma1", "monotone-in-beta", worst <= 1e-9, worst, 1e-9)


def check_grid_refinement(seed=0, instances=20):
    rng = rng_for(seed + 11)
    worst = 0.0
    for _ in range(instances):
        inst = cmp.random_passing_instance(rng)
        a = cmp.integrate_phi(inst).phi
        b = cmp.integrate_phi(inst.refined()).phi[0::2]
        scale = np.maximum(np.abs(a), 1e-12 * np.max(np.abs(a)))
        worst = max(worst, float(np.max(np.abs(a - b) / scale)))
    return Check("lemma1", "grid-refinement", worst <= 1e-8, worst, 1e-8)


# ----------------------------------------------------------------- path


def check_normal_solution(seed=0, seeds=50):
    """Random 5x5 rank-3 matrices against the pseudoinverse from an SVD."""
    worst = 0.0
    for s in range(seed, seed + seeds):
        A = rank_deficient_matrix(5, 3, 1000 + s)
        f = A @ rng_for(2000 + s).standard_normal(5)
        y, _ = normal_solution(A, f, np.geomspace(1.0, 1e-8, 27))
        worst = max(worst, float(np.linalg.norm(y - np.linalg.pinv(A) @ f)))
    return Check("path", "normal-solution", worst <= 1e-6, worst, 1e-6, {"seeds": seeds})


def check_rank_deficient_spectrum(seed=0):
    A = rank_deficient_matrix(5, 3, seed)
    sv = np.linalg.svd(A, compute_uv=False)
    small = int(np.sum(sv < 1e-14))
    return Check("path", "rank-deficient-spectrum", small == 2, small, 2)


def check_gallery_paths(seed=0):
    worst_res = 0.0
    max_iters = 0
    shrink_ok = True
    for name, kw in (("monotone-holder", {"kappa": 0.5}), ("monotone-holder", {"kappa": 1.0}),
                     ("monotone-smooth", {}), ("wellposed-linear", {})):
        P = gallery_make(name, n=8, seed=seed, **kw)
        path = track_path(P, default_a_sequence(10.0), np.zeros(P.n))
        f_scale = 1 + P.norm(P.rhs)
        worst_res = max(worst_res, max(e.residual / f_scale for e in path.entries))
        max_iters = max(max_iters, max(e.newton_iters for e in path.entries[1:]))
        d = [P.norm(e.w - P.known_solution) for e in path.entries]
        shrink_ok &= all(d[j + 1] <= d[j] + 1e-10 for j in range(len(d) - 1))
    ok = worst_res <= 1e-10 and max_iters <= 10 and shrink_ok
    return Check("path", "gallery-paths", ok, worst_res, 1e-10,
                 {"max_warm_newton_iters": max_iters, "distance_to_y_nonincreasing": shrink_ok})


def check_path_derivative(seed=0):
    P = gallery_make("monotone-holder", n=4, kappa=1.0, seed=seed)
    plan = plan_run(P)
    rep = path_derivative_check(P, plan.path, plan.schedule)
    worst = max((r["rel_diff"] for r in rep["rows"] if r["wdot_analytic"] > 1e-8), default=0.0)
    return Check("path", "path-derivative", rep["passed"], worst, 1e-5,
                 {"entries": len(rep["rows"])})


# ----------------------------------------------------------------- theorem


def theorem_cases():
    return [("monotone-holder", n, {"kappa": k}) for k in (0.5, 1.0) for n in (2, 16)] + \
        [("wellposed-linear", n, {}) for n in (2, 16)]


def run_theorem_case(name, n, params, seed=0, config=None):
    P = gallery_make(name, n=n, seed=seed, **params)
    plan = plan_run(P)
    t0 = time.perf_counter()
    traj = solve(P, plan.schedule, plan.u0, config or IntegratorConfig(), c2=plan.c2)
    elapsed = time.perf_counter() - t0
    return P, plan, traj, elapsed


def check_theorem(seed=0):
    out = []
    for name, n, params in theorem_cases():
        label = f"{name}[n={n}{''.join(f',{k}={v}' for k, v in params.items())}]"
        P, plan, traj, elapsed = run_theorem_case(name, n, params, seed)
        env = envelope_check(traj)
        conv = convergence_check(traj, P)
        aud = audit_summary(traj)
        bound = plan.path.max_norm(P) + plan.schedule.envelope(0.0)
        bounded = traj.diagnostics["sup_norm_u"] <= bound * (1 + 1e-8)
        ok = plan.report.passed and env["passed"] and env["n_resolved"] >= 32 and elapsed < 30
        out.append(Check("theorem", f"envelope {label}", ok, env["max_ratio"], 1.05,
                         {"resolved": env["n_resolved"], "seconds": elapsed, "status": traj.status}))
        out.append(Check("theorem", f"convergence {label}", conv["passed"], conv["final_dist_to_y"],
                         conv["threshold"], conv))
        out.append(Check("theorem", f"master-inequality {label}", aud["passed"], aud["max_violation"],
                         0.0, aud))
        out.append(Check("theorem", f"boundedness {label}", bounded, traj.diagnostics["sup_norm_u"], bound))
    return out


SUITE_CHECKS = {
    "operator": [check_resolvent_psd, check_lemma4, check_derivative_linearity,
                 check_resolvent_consistency, check_holder_gallery, check_holder_estimate,
                 check_path_inequality],
    "schedule": [check_exponent_identities, check_schedule_ode, check_majorant, check_gate_example],
    "lemma1": [check_logistic, check_random_sandwich, check_monotone_in_beta, check_grid_refinement],
    "path": [check_normal_solution, check_rank_deficient_spectrum, check_gallery_paths,
             check_path_derivative],
    "theorem": [check_theorem],
}


def run_suite(suite: str, seed: int = 0):
    """Run one suite (or ``"all"``) and return the list of checks."""
    from .errors import UsageError

    names = SUITES if suite == "all" else (suite,)
    if any(s not in SUITE_CHECKS for s in names):
        raise UsageError(f"unknown suite {suite!r}; choose from all, {', '.join(SUITES)}")
    results = []
    for s in names:
        for fn in SUITE_CHECKS[s]:
            t0 = time.perf_counter()
            got = fn(seed=seed) if "seed" in fn.__code__.co_varnames else fn()
            got = got if isinstance(got, list) else [got]
            for c in got:
                c.seconds = time.perf_counter() - t0
                log.info(c.line())
            results.extend(got)
    return results
