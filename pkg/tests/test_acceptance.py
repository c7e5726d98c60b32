"""Acceptance criteria, one test each, at their stated tolerances.

Every test prints a single ``PASS``/``FAIL`` line (shown even when pytest
captures output) before asserting.
"""
import json
import math
import time

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from dsmflow import comparison as cmp
from dsmflow.cli import EXIT_OK, main
from dsmflow.gallery import gallery_make, rank_deficient_matrix, rng_for
from dsmflow.operator import OperatorProblem, ResolventParams, SmoothnessParams, VectorSpace
from dsmflow.operator import norm_and_derivative, verify_resolvent_bound
from dsmflow.path import normal_solution
from dsmflow.plan import plan_run
from dsmflow.schedule import ScheduleInputs, derive_schedule
from dsmflow.solver import IntegratorConfig, audit_summary, convergence_check, envelope_check, solve

CASES = [("monotone-holder", n, {"kappa": k}) for k in (0.5, 1.0) for n in (2, 16)] + \
    [("wellposed-linear", n, {}) for n in (2, 16)]


def case_id(case):
    name, n, params = case
    return f"{name}[n={n}" + "".join(f",{k}={v}" for k, v in params.items()) + "]"


@pytest.fixture
def report(capsys):
    def emit(label, passed, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if passed else 'FAIL'} {label}: {detail}")
        return passed

    return emit


_RUNS = {}


def theorem_run(case):
    """Plan and integrate one gallery case once per session."""
    key = case_id(case)
    if key not in _RUNS:
        name, n, params = case
        P = gallery_make(name, n=n, **params)
        plan = plan_run(P)
        t0 = time.perf_counter()
        traj = solve(P, plan.schedule, plan.u0, IntegratorConfig(), c2=plan.c2)
        _RUNS[key] = (P, plan, traj, time.perf_counter() - t0)
    return _RUNS[key]


def test_criterion_1_envelope(report):
    worst, fewest, slowest, failed = 0.0, math.inf, 0.0, []
    for case in CASES:
        P, plan, traj, elapsed = theorem_run(case)
        env = envelope_check(traj, tol_env=0.05)
        if not (plan.report.passed and env["passed"] and env["n_resolved"] >= 32 and elapsed < 30):
            failed.append(case_id(case))
        worst = max(worst, env["max_ratio"])
        fewest = min(fewest, env["n_resolved"])
        slowest = max(slowest, elapsed)
    report("criterion 1 envelope", not failed,
           f"{len(CASES)} runs, max dist_to_w/envelope={worst:.4g} (<= 1.05), "
           f"fewest resolved samples={fewest} (>= 32), slowest={slowest:.2f}s (< 30)"
           + (f", failed: {failed}" if failed else ""))
    assert not failed


def test_criterion_2_convergence(report):
    worst, largest_r, at_crossing, failed = 0.0, 0.0, 0.0, []
    for case in CASES:
        P, plan, traj, _ = theorem_run(case)
        conv = convergence_check(traj, P, rel=1e-3)
        if not (conv["passed"] and conv["reached_r"] <= 1e-2):
            failed.append(case_id(case))
        worst = max(worst, conv["final_dist_to_y"] / conv["threshold"])
        largest_r = max(largest_r, conv["reached_r"])
        first = next(p for p in traj.samples() if p.r <= 1e-2)
        at_crossing = max(at_crossing, first.dist_to_y / conv["threshold"])
    report("criterion 2 convergence", not failed,
           f"{len(CASES)} runs, max final dist_to_y / (1e-3 (1 + ||y||))={worst:.3g} (<= 1), "
           f"largest final r={largest_r:.3g} (<= 1e-2), tail nonincreasing in every run={not failed}; "
           f"info: same ratio at the first sample with r <= 1e-2 is {at_crossing:.3g}"
           + (f", failed: {failed}" if failed else ""))
    assert not failed


def test_criterion_3_comparison_lemma(report):
    lib_time = 0.0
    t0 = time.perf_counter()
    grid = np.array([0.0, 0.5, 1.0, 2.0])
    logistic = cmp.InequalityInstance(gamma=lambda t: 1.0, alpha=lambda t, g: g * g,
                                      beta=lambda t: 0.0, mu=lambda t: 2.0, g0=0.5, T=2.0, grid=grid)
    phi = cmp.integrate_phi(logistic).phi
    lib_time += time.perf_counter() - t0
    closed_err = float(np.max(np.abs(phi[1:] - 1.0 / (1.0 + np.exp(grid[1:])))))

    rng = rng_for(33)
    failures = 0
    worst_g = -math.inf
    for _ in range(100):
        inst = cmp.random_passing_instance(rng)
        assert inst.powerlaw is not None and 1.0 < inst.powerlaw.p <= 2.0
        sub = inst.with_beta_scaled(float(rng.random()), float(rng.random()))
        # g solves the equality with smaller forcing. An implicit scipy method
        # integrates log g in the variable tau = log(1 + t), which keeps g
        # positive and reaches the long schedule horizons.
        def dlog_g(tau, y):
            t = math.expm1(tau)
            g = math.exp(y[0])
            return [(1.0 + t) * (-sub.gamma(t) + (sub.alpha(t, g) + sub.beta(t)) / g)]

        if sub.g0 <= 0:
            continue
        taus = np.log1p(inst.grid)
        sol = solve_ivp(dlog_g, (taus[0], taus[-1]), [math.log(sub.g0)], method="Radau",
                        rtol=1e-11, atol=1e-11, t_eval=taus)
        assert sol.success, sol.message
        g = np.exp(sol.y[0])
        t0 = time.perf_counter()
        phi = cmp.integrate_phi(inst)
        cert = cmp.verify_sandwich(g, inst, phi=phi)
        lib_time += time.perf_counter() - t0
        inv_mu = np.array([1.0 / inst.mu(t) for t in inst.grid])
        tol = 1e-8 * (1.0 + inv_mu)
        ok = cert.passed and bool(np.all(g <= phi.phi + tol) and np.all(phi.phi <= inv_mu + tol))
        worst_g = max(worst_g, float(np.max(g - inv_mu)))
        failures += not ok
    passed = closed_err <= 1e-8 and failures == 0 and lib_time < 10
    report("criterion 3 comparison lemma", passed,
           f"logistic error={closed_err:.3g} (<= 1e-8), random failures={failures}/100, "
           f"max(g - 1/mu)={worst_g:.3g}, certification time={lib_time:.2f}s (< 10)")
    assert passed


def test_criterion_4_normal_solution(report):
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(50):
        A = rank_deficient_matrix(5, 3, seed=seed)
        f = rng_for(100 + seed).standard_normal(5)
        U, s, Vt = np.linalg.svd(A)
        inv = np.where(s > 1e-12 * s[0], 1.0 / np.where(s > 0, s, 1.0), 0.0)
        oracle = Vt.T @ (inv * (U.T @ f))
        y, _ = normal_solution(A, f, np.geomspace(1.0, 1e-8, 27))
        worst = max(worst, float(np.linalg.norm(y - oracle)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed < 5
    report("criterion 4 normal solution", ok,
           f"max ||y - A+ f||={worst:.3g} (<= 1e-6) over 50 seeds, time={elapsed:.2f}s (< 5)")
    assert ok


def test_criterion_5_resolvent_bound(report):
    rng = rng_for(55)
    worst = 0.0
    # below 1e-3 the computed smallest singular value of S + rI carries
    # rounding error of order eps ||S|| / r
    grid = np.geomspace(1e-3, 1e3, 41)
    for _ in range(100):
        n = int(rng.integers(1, 51))
        B = rng.standard_normal((n, n))
        S = B @ B.T / n
        if rng.random() < 0.5:  # make some instances singular
            Q = np.linalg.qr(rng.standard_normal((n, n)))[0]
            d = np.abs(rng.standard_normal(n))
            d[: n // 2] = 0.0
            S = (Q * d) @ Q.T
            S = 0.5 * (S + S.T)
        P = OperatorProblem(VectorSpace(n), lambda u, S=S: S @ u, np.zeros(n),
                            SmoothnessParams(0.0, 1.0), ResolventParams(1.0, 1.0, math.inf),
                            jac=lambda u, S=S: S)
        worst = max(worst, verify_resolvent_bound(P, np.zeros(n), grid).max_scaled)
    ok = worst <= 1 + 1e-8
    report("criterion 5 resolvent bound", ok, f"max r ||(A + rI)^-1||={worst!r} (<= 1 + 1e-8), 100 instances")
    assert ok


def test_criterion_6_exponent_identities(report):
    rng = rng_for(66)
    worst = 0.0
    kp_ok = True
    for _ in range(1000):
        b = 3.0 * (1.0 - float(rng.random()))
        kappa = 1.0 - float(rng.random())
        s = derive_schedule(ScheduleInputs(b=b, kappa=kappa, c0=1.0, c1=1.0, c2=1.0, g0=0.1, r0=1.0))
        k, p = s.k, s.p
        rel = [
            abs(k * (p - 1) - (b + 1)) / (b + 1),
            abs((k + b) - (k * p - 1)) / (k * p - 1),
            abs((k * (p - 1) - 2) - (b - 1)) / max(abs(b - 1), 1.0),
            abs((k * p - 2) - (b + 1 + kappa * (b - 1)) / kappa) / (k * p - 2),
        ]
        worst = max(worst, *rel)
        kp_ok &= k * p > 2 and kappa + (1 - kappa) * b > 0
    ok = worst <= 1e-12 and kp_ok
    report("criterion 6 exponent identities", ok, f"max relative error={worst:.3g} (<= 1e-12), kp > 2: {kp_ok}")
    assert ok


def test_criterion_7_master_audit(report):
    worst, points, failed = 0.0, 0, []
    for case in CASES:
        P, plan, traj, _ = theorem_run(case)
        aud = audit_summary(traj)
        if not (plan.report.passed and aud["passed"] and aud["n_points"] >= 10):
            failed.append(case_id(case))
        points += aud["n_points"]
        for r in traj.audit:
            if r["violation"] > 0:
                worst = max(worst, r["violation"] / r["disc_estimate"] if r["disc_estimate"] > 0 else math.inf)
    report("criterion 7 master audit", not failed,
           f"{points} audited points in {len(CASES)} runs, "
           f"max violation / discretization estimate={worst:.3g} (<= 10)"
           + (f", failed: {failed}" if failed else ""))
    assert not failed


def test_criterion_8_norm_rate(report):
    rng = rng_for(88)
    s = 1e-4
    worst = -math.inf
    for space in (VectorSpace(6), VectorSpace(6, "lp", 1.5), VectorSpace(6, "lp", 3.0)):
        n = space.dimension
        for _ in range(100):
            c = rng.standard_normal((3, n))
            w1, w2 = rng.uniform(0.5, 2.0, 2)

            def w(t):
                return c[0] + c[1] * np.sin(w1 * t) + c[2] * np.cos(w2 * t)

            def wdot(t):
                return c[1] * w1 * np.cos(w1 * t) - c[2] * w2 * np.sin(w2 * t)

            t = float(rng.uniform(-1, 1))
            # M bounds |d^2/dt^2 ||w||| on [t - s, t + s], with the lp/l2 factor taken as n
            accel = np.abs(c[1]) * w1 ** 2 + np.abs(c[2]) * w2 ** 2
            M = space.norm(accel) + space.norm(wdot(t)) ** 2 / (0.5 * space.norm(w(t))) * n
            fd = (space.norm(w(t + s)) - space.norm(w(t - s))) / (2 * s)
            _, rate = norm_and_derivative(space, w(t), wdot(t))
            bound = space.norm(wdot(t)) + 10 * s * M
            worst = max(worst, abs(fd) - bound, abs(rate) - space.norm(wdot(t)) * (1 + 1e-12))
    ok = worst <= 0
    report("criterion 8 norm rate", ok, f"max(|rate| - bound)={worst:.3g} (<= 0) over 300 curves")
    assert ok


def test_criterion_9_reproducibility(tmp_path, report):
    first, second, third = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(["solve", "monotone-holder", "--n", "4", "--kappa", "0.5", "--seed", "9",
                 "--out", str(first)]) == EXIT_OK
    manifest = first / "manifest.json"
    codes = [main(["solve", "--manifest", str(manifest), "--out", str(d)]) for d in (second, third)]
    same = (second / "trace.csv").read_bytes() == (third / "trace.csv").read_bytes()
    same_first = (first / "trace.csv").read_bytes() == (second / "trace.csv").read_bytes()
    seed = json.loads(manifest.read_text())["seed"]
    ok = codes == [EXIT_OK, EXIT_OK] and same and same_first and seed == 9
    report("criterion 9 reproducibility", ok,
           f"two manifest re-runs byte-identical={same}, identical to the original run={same_first}")
    assert ok
