import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from dsmflow.errors import NoConvergence, UsageError
from dsmflow.gallery import gallery_make, rank_deficient_matrix, rng_for
from dsmflow.path import (
    default_a_sequence,
    normal_solution,
    path_derivative,
    path_derivative_check,
    solve_regularized,
    tikhonov_solution,
    track_path,
)
from dsmflow.plan import plan_run
from dsmflow.schedule import ScheduleInputs, derive_schedule

from conftest import linear_problem, make_problem


def cubic(f):
    return make_problem(lambda w: w ** 3, lambda w: np.diag(3 * w ** 2), [f])


def test_cubic_zero_rhs():
    w, res, _ = solve_regularized(cubic(0.0), 1.0, [0.7])
    assert abs(w[0]) <= 1e-12 and res <= 1e-12


def test_linear_closed_form():
    w, _, _ = solve_regularized(linear_problem([[1.0]], [1.0]), 0.1, [0.0])
    assert w[0] == pytest.approx(1 / 1.1, rel=1e-14)


def test_cubic_against_bracketing_oracle():
    root = brentq(lambda w: w ** 3 + 0.5 * w - 0.5, 0.0, 1.0, xtol=1e-15)
    w, res, _ = solve_regularized(cubic(0.5), 0.5, [0.0])
    assert w[0] == pytest.approx(root, abs=1e-12)
    assert w[0] == pytest.approx(0.5897545, abs=1e-6)
    assert res <= 1e-12 * 1.5


def test_newton_far_start_uses_damping():
    root = brentq(lambda w: w ** 3 + 0.5 * w - 0.5, 0.0, 1.0, xtol=1e-15)
    w, _, it = solve_regularized(cubic(0.5), 0.5, [100.0])
    assert w[0] == pytest.approx(root, abs=1e-12)
    assert it > 3


def test_no_convergence_carries_residual():
    with pytest.raises(NoConvergence) as exc:
        solve_regularized(cubic(0.5), 0.5, [100.0], max_iter=2)
    assert exc.value.iterations == 2 and exc.value.residual > 0
    assert exc.value.last is not None


def test_complex_shift_gives_complex_solution():
    P = linear_problem([[2.0]], [1.0], theta=math.pi / 4)
    a = 0.1 * complex(math.cos(math.pi / 4), math.sin(math.pi / 4))
    w, _, _ = solve_regularized(P, a, [0.0])
    assert w[0] == pytest.approx(1 / (2 + a), rel=1e-13)


def test_shift_outside_eps0():
    with pytest.raises(UsageError):
        solve_regularized(linear_problem([[1.0]], [1.0], eps0=0.5), 1.0, [0.0])


def test_track_linear_closed_form():
    P = linear_problem([[1.0]], [1.0])
    a_values = [0.5 ** j for j in range(20)]
    path = track_path(P, a_values, [0.0])
    for e in path.entries:
        assert e.w[0] == pytest.approx(1 / (1 + e.a), rel=1e-13)
    assert path.limit_estimate[0] == pytest.approx(1.0, abs=1e-5)
    assert path.cauchy_decreasing


def test_track_empty():
    path = track_path(linear_problem([[1.0]], [1.0]), [], [0.0])
    assert path.entries == [] and path.limit_estimate is None


def test_track_requires_decreasing():
    with pytest.raises(UsageError):
        track_path(linear_problem([[1.0]], [1.0]), [0.1, 0.2], [0.0])


def test_track_aborts_with_prefix():
    # w**2 + a w + 1 = 0 has real roots only for a >= 2
    P = make_problem(lambda w: w ** 2, lambda w: np.diag(2 * w), [-1.0])
    path = track_path(P, [5.0, 1.0, 0.5], [0.0])
    assert len(path.entries) == 1 and path.aborted
    assert path.entries[0].w[0] == pytest.approx((-5 + math.sqrt(21)) / 2, rel=1e-12)


def test_default_sequence():
    seq = default_a_sequence(1.0)
    assert seq[0] == 1.0 and seq[-1] == pytest.approx(2.0 ** -26)
    assert all(seq[j + 1] == seq[j] * 0.5 for j in range(len(seq) - 1))
    assert default_a_sequence(1.0, 0.3)[3] == pytest.approx(0.125 * complex(math.cos(0.3), math.sin(0.3)))


@pytest.mark.parametrize("name,kw", [("monotone-holder", {"kappa": 0.5}), ("monotone-holder", {"kappa": 1.0}),
                                     ("monotone-smooth", {}), ("wellposed-linear", {}),
                                     ("illposed-kernel", {"n": 16})])
def test_gallery_path_invariants(name, kw):
    P = gallery_make(name, **kw)
    path = track_path(P, default_a_sequence(8.0), np.zeros(P.n))
    f_scale = 1 + P.norm(P.rhs)
    assert all(e.residual <= 1e-10 * f_scale for e in path.entries)
    assert all(e.newton_iters <= 10 for e in path.entries[1:])
    d = [P.norm(e.w - P.known_solution) for e in path.entries]
    assert all(d[j + 1] <= d[j] + 1e-10 for j in range(len(d) - 1))


def test_path_derivative_linear_closed_form():
    P = linear_problem([[1.0]], [3.0])
    a, adot = 0.2, -0.7
    w = np.array([3.0 / 1.2])
    assert path_derivative(P, w, a, adot)[0] == pytest.approx(-adot * 3.0 / 1.2 ** 2, rel=1e-14)
    assert path_derivative(P, w, a, 0.0)[0] == 0.0


@pytest.mark.parametrize("kappa", [0.5, 1.0])
def test_path_derivative_check_monotone(kappa):
    P = gallery_make("monotone-holder", n=4, kappa=kappa)
    plan = plan_run(P)
    rep = path_derivative_check(P, plan.path, plan.schedule, c2=plan.c2)
    assert rep["passed"]
    assert all(r["resolvent_bound_ok"] for r in rep["rows"])


def test_path_derivative_check_linear_rows():
    P = linear_problem([[1.0]], [1.0])
    s = derive_schedule(ScheduleInputs(b=1, kappa=1, c0=0, c1=1, c2=1.1, g0=0.5, r0=1))
    path = track_path(P, default_a_sequence(1.0), [0.0])
    rep = path_derivative_check(P, path, s, c2=1.1)
    for row in rep["rows"]:
        t = s.time_at(row["abs_a"])
        exact = abs(s.rdot(t)) / (1 + row["abs_a"]) ** 2
        assert row["wdot_analytic"] == pytest.approx(exact, rel=1e-12)
        assert row["fd_ok"]


# --------------------------------------------------------------- normal solution


def test_normal_diag_example():
    y, hist = normal_solution(np.diag([1.0, 0.0]), [1.0, 0.0], np.geomspace(1, 1e-10, 11))
    np.testing.assert_allclose(y, [1.0, 0.0], atol=1e-9)
    assert y[1] == 0.0
    assert hist["bounded"] and hist["residual_decreasing"]


def test_normal_zero_operator():
    y, _ = normal_solution(np.zeros((3, 3)), [1.0, 2.0, 3.0], [1.0, 0.1])
    assert np.all(y == 0.0)


def test_normal_sequence_must_decrease():
    with pytest.raises(UsageError):
        normal_solution(np.eye(2), [1.0, 1.0], [0.1, 0.2])


def test_tikhonov_matches_normal_equations():
    A = rng_for(3).standard_normal((6, 4))
    f = rng_for(4).standard_normal(6)
    a = 0.3
    np.testing.assert_allclose(tikhonov_solution(A, f, a),
                               np.linalg.solve(A.T @ A + a * np.eye(4), A.T @ f), rtol=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_normal_against_svd_oracle(seed):
    A = rank_deficient_matrix(5, 3, seed)
    f = A @ rng_for(seed + 100).standard_normal(5)
    y, _ = normal_solution(A, f, np.geomspace(1.0, 1e-8, 27))
    U, s, Vt = np.linalg.svd(A)
    keep = s > 1e-12 * s[0]
    oracle = Vt[keep].T @ ((U[:, keep].T @ f) / s[keep])
    assert np.linalg.norm(y - oracle) <= 1e-6


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.integers(0, 2**31))
def test_minimal_norm_property(seed, seed2):
    A = rank_deficient_matrix(5, 3, seed)
    f = A @ rng_for(seed2).standard_normal(5)
    y, _ = normal_solution(A, f, np.geomspace(1.0, 1e-8, 27))
    _, _, Vt = np.linalg.svd(A)
    null = Vt[3:].T
    rng = rng_for(seed2 + 1)
    for _ in range(10):
        x = y + null @ rng.standard_normal(2)
        if np.linalg.norm(A @ x - f) <= np.linalg.norm(A @ y - f) + 1e-10:
            assert np.linalg.norm(y) <= np.linalg.norm(x) + 1e-6


def test_rank_deficient_spectrum():
    sv = np.linalg.svd(rank_deficient_matrix(5, 3, 7), compute_uv=False)
    assert np.sum(sv < 1e-14) == 2
    assert np.all(sv[:3] >= 0.5 - 1e-12)
