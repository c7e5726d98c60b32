import json

import numpy as np
import pytest

from dsmflow.errors import UsageError
from dsmflow.gallery import (
    GALLERY,
    gallery_make,
    kernel_matrix,
    load_problem,
    problem_from_spec,
    problem_spec,
    rank_deficient_matrix,
    rng_for,
)
from dsmflow.operator import jacobian, verify_resolvent_bound


def test_holder_example_rhs():
    P = gallery_make("monotone-holder", n=2, kappa=1.0)
    assert P.known_solution.tolist() == [1.0, -1.0]
    assert P.rhs.tolist() == [2.0, -2.0]
    assert (P.smoothness.c0, P.resolvent.c1, P.resolvent.b) == (2.0, 1.0, 1.0)


def test_wellposed_scalar():
    P = gallery_make("wellposed-linear", n=1)
    assert P.meta["matrix"].tolist() == [[2.0]]
    assert P.known_solution.tolist() == [1.0] and P.rhs.tolist() == [2.0]


def test_rank_deficient_has_two_zero_singular_values():
    A = gallery_make("rank-deficient-linear", n=5, rank=3, seed=7).meta["A"]
    s = np.linalg.svd(A, compute_uv=False)
    assert np.sum(s < 1e-14) == 2
    assert s[2] >= 0.5 - 1e-12


def test_rank_deficient_known_solution_is_minimal_norm():
    P = gallery_make("rank-deficient-linear", n=5, rank=3, seed=2)
    A = P.meta["A"]
    y = P.known_solution
    assert np.allclose(P.F(y), P.rhs, atol=1e-12)
    # y lies in the row space of A
    _, _, Vt = np.linalg.svd(A)
    assert np.linalg.norm(Vt[3:] @ y) <= 1e-12


def test_kernel_matrix_first_column():
    K = kernel_matrix(4)
    s = (np.arange(4) + 0.5) / 4
    assert np.allclose(K[:, 0], 0.25 * np.exp(-(s - s[0]) ** 2), rtol=1e-15)
    assert np.allclose(K, K.T)


def test_kernel_is_ill_conditioned():
    assert np.linalg.cond(kernel_matrix(32)) > 1e12


@pytest.mark.parametrize("name", GALLERY)
def test_gallery_derivative_consistency(name):
    P = gallery_make(name)
    rng = rng_for(11)
    u = rng.standard_normal(P.n)
    h = rng.standard_normal(P.n)
    eps = 1e-6
    fd = (P.F(u + eps * h) - P.F(u - eps * h)) / (2 * eps)
    assert np.linalg.norm(jacobian(P, u) @ h - fd) <= 1e-6 * (1 + np.linalg.norm(fd))


@pytest.mark.parametrize("name", ["monotone-holder", "monotone-smooth"])
def test_gallery_holder_constants_hold(name):
    P = gallery_make(name, n=3)
    c0, kappa = P.smoothness.c0, P.smoothness.kappa
    rng = rng_for(3)
    for _ in range(300):
        u, v = rng.uniform(-2, 2, (2, 3))
        lhs = np.linalg.norm(jacobian(P, u) - jacobian(P, v), 2)
        assert lhs <= c0 * np.linalg.norm(u - v) ** kappa * (1 + 1e-9)


@pytest.mark.parametrize("name", GALLERY)
def test_gallery_resolvent_bound(name):
    P = gallery_make(name)
    rep = verify_resolvent_bound(P, np.zeros(P.n), np.geomspace(1e-3, 1e3, 13))
    assert rep.passed


def test_unknown_name_lists_gallery():
    with pytest.raises(UsageError) as info:
        gallery_make("nope")
    for name in GALLERY:
        assert name in str(info.value)


def test_unknown_parameter():
    with pytest.raises(UsageError):
        gallery_make("monotone-holder", cond=3)


def test_kernel_dimension_limit():
    with pytest.raises(UsageError):
        gallery_make("illposed-kernel", n=65)


def test_same_seed_same_problem():
    a = gallery_make("wellposed-linear", n=6, seed=4).meta["matrix"]
    b = gallery_make("wellposed-linear", n=6, seed=4).meta["matrix"]
    c = gallery_make("wellposed-linear", n=6, seed=5).meta["matrix"]
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_rank_deficient_matrix_spectrum_range():
    s = np.linalg.svd(rank_deficient_matrix(6, 4, seed=1, smin=1.0, smax=3.0), compute_uv=False)
    assert np.all((s[:4] >= 1.0 - 1e-12) & (s[:4] <= 3.0 + 1e-12))


@pytest.mark.parametrize("name", GALLERY)
def test_problem_file_roundtrip(tmp_path, name):
    P = gallery_make(name, seed=3)
    path = tmp_path / "p.json"
    path.write_text(json.dumps(problem_spec(P)))
    Q = load_problem(path)
    u = rng_for(0).standard_normal(P.n)
    assert np.array_equal(P.F(u), Q.F(u)) and np.array_equal(P.rhs, Q.rhs)


def test_linear_problem_file(tmp_path):
    spec = {"kind": "linear", "n": 2, "data": [2.0, 0.0, 0.0, 3.0], "known_solution": [1.0, 1.0]}
    path = tmp_path / "p.json"
    path.write_text(json.dumps(spec))
    P = load_problem(path)
    assert P.rhs.tolist() == [2.0, 3.0]
    assert P.meta["constants_source"] == "asserted"
    assert problem_spec(P)["data"] == spec["data"]


def test_asserted_constants_override():
    P = problem_from_spec({"kind": "monotone-holder", "n": 2, "asserted_constants": {"c1": 2.0}})
    assert P.resolvent.c1 == 2.0 and P.meta["constants_source"] == "asserted"
    with pytest.raises(UsageError):
        problem_from_spec({"kind": "monotone-holder", "asserted_constants": {"zeta": 1}})


@pytest.mark.parametrize("spec", [[], {"n": 2}, {"kind": "linear", "n": 2, "data": [1.0]},
                                  {"kind": "linear", "n": 1, "data": [1.0]}])
def test_bad_problem_specs(spec):
    with pytest.raises(UsageError):
        problem_from_spec(spec)


def test_invalid_json(tmp_path):
    path = tmp_path / "p.json"
    path.write_text("{not json")
    with pytest.raises(UsageError):
        load_problem(path)
