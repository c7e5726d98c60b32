"""Test problems with analytically known constants, and the JSON problem format.

A problem file is a JSON object ``{kind, n, params, asserted_constants, seed}``.
``kind`` is a gallery name or ``"linear"``; a linear problem carries its
matrix row-major in ``data`` and its right-hand side in ``rhs`` (or a
``known_solution`` from which ``f = F(y)`` is assembled).
"""
from __future__ import annotations

import json
import math

import numpy as np

from .errors import UsageError
from .operator import OperatorProblem, ResolventParams, SmoothnessParams, VectorSpace

GALLERY = ("wellposed-linear", "illposed-kernel", "rank-deficient-linear",
           "monotone-holder", "monotone-smooth")

#: default radius of validity of the resolvent bound for gallery problems
GALLERY_EPS0 = 1e6

_TANH_CURV = 4.0 / (3.0 * math.sqrt(3.0))  # max |d/du sech(u)**2|


def rng_for(seed: int) -> np.random.Generator:
    """Counter-based generator; the only source of randomness in the package."""
    return np.random.Generator(np.random.Philox(int(seed)))


def alternating(n: int) -> np.ndarray:
    """``y_i = (-1)**i``, the default known solution."""
    return np.array([(-1.0) ** i for i in range(n)])


def random_orthogonal(n: int, rng) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(R))


def spd_matrix(n: int, spectrum, rng) -> np.ndarray:
    if n == 1:
        return np.array([[float(spectrum[0])]])
    Q = random_orthogonal(n, rng)
    M = (Q * np.asarray(spectrum, dtype=float)) @ Q.T
    return 0.5 * (M + M.T)


def _linear(name, M, y, *, rhs=None, eps0=GALLERY_EPS0, theta=0.0, c1=1.0, b=1.0,
            descriptor=None, extra=None):
    M = np.array(M, dtype=float)
    M.setflags(write=False)
    n = M.shape[0]
    f = M @ y if rhs is None else np.asarray(rhs, dtype=float)
    meta = {"descriptor": descriptor or {}, "matrix": M, "constants_source": "analytic"}
    meta.update(extra or {})
    return OperatorProblem(
        space=VectorSpace(n),
        F=lambda u: M @ u,
        jac=lambda u: M,
        rhs=f,
        smoothness=SmoothnessParams(0.0, 1.0),
        resolvent=ResolventParams(c1, b, eps0, theta),
        known_solution=y,
        name=name,
        meta=meta,
    )


def wellposed_linear(n=4, cond=10.0, seed=0, theta=0.0):
    """``F(u) = M u`` with ``M`` symmetric positive definite, spectrum ``[2, 2 cond]``."""
    spectrum = np.geomspace(2.0, 2.0 * cond, n) if n > 1 else [2.0]
    M = spd_matrix(n, spectrum, rng_for(seed))
    desc = {"kind": "wellposed-linear", "n": n, "params": {"cond": cond, "theta": theta}, "seed": seed}
    return _linear("wellposed-linear", M, alternating(n), theta=theta, descriptor=desc)


def kernel_matrix(n: int) -> np.ndarray:
    """Midpoint-rule discretization of ``(K u)(s) = int_0^1 exp(-(s - t)**2) u(t) dt``."""
    h = 1.0 / n
    s = (np.arange(n) + 0.5) * h
    return h * np.exp(-np.subtract.outer(s, s) ** 2)


def illposed_kernel(n=32, seed=0):
    """First-kind integral equation with a Gaussian kernel; ``y(s) = sin(pi s)``."""
    if not 1 <= n <= 64:
        raise UsageError("illposed-kernel supports 1 <= n <= 64")
    K = kernel_matrix(n)
    s = (np.arange(n) + 0.5) / n
    y = np.sin(np.pi * s)
    desc = {"kind": "illposed-kernel", "n": n, "params": {}, "seed": seed}
    return _linear("illposed-kernel", K, y, descriptor=desc)


def rank_deficient_matrix(n=5, rank=3, seed=0, smin=0.5, smax=2.0, m=None):
    """``U diag(s) V^T`` with ``rank`` singular values drawn from ``[smin, smax]``, the rest exactly 0."""
    m = n if m is None else m
    rng = rng_for(seed)
    U = random_orthogonal(m, rng)
    V = random_orthogonal(n, rng)
    s = np.zeros(min(m, n))
    s[:rank] = np.sort(rng.uniform(smin, smax, rank))[::-1]
    S = np.zeros((m, n))
    S[np.arange(s.size), np.arange(s.size)] = s
    return U @ S @ V.T


def rank_deficient_linear(n=5, rank=3, seed=0):
    """Normal equations ``A^T A u = A^T A x`` of a rank-deficient ``A``.

    The known solution is the minimal-norm one, the projection of
    ``x = (-1)**i`` onto the row space of ``A``.
    """
    if not 0 <= rank <= n:
        raise UsageError("rank must lie in [0, n]")
    A = rank_deficient_matrix(n, rank, seed)
    T = A.T @ A
    x = alternating(n)
    y = np.linalg.pinv(A) @ (A @ x)
    desc = {"kind": "rank-deficient-linear", "n": n, "params": {"rank": rank}, "seed": seed}
    return _linear("rank-deficient-linear", T, y, rhs=T @ x, descriptor=desc, extra={"A": A})


def monotone_holder(n=2, kappa=1.0, seed=0):
    """``F(u)_i = u_i + u_i |u_i|**kappa``; ``c0 = 1 + kappa``, ``c1 = b = 1``."""
    k = float(kappa)
    y = alternating(n)

    def F(u):
        return u + u * np.abs(u) ** k

    def jac(u):
        return np.diag(1.0 + (1.0 + k) * np.abs(u) ** k)

    desc = {"kind": "monotone-holder", "n": n, "params": {"kappa": k}, "seed": seed}
    return OperatorProblem(
        space=VectorSpace(n), F=F, jac=jac, rhs=F(y),
        smoothness=SmoothnessParams(1.0 + k, k),
        resolvent=ResolventParams(1.0, 1.0, GALLERY_EPS0),
        known_solution=y, name="monotone-holder",
        meta={"descriptor": desc, "constants_source": "analytic"})


def monotone_smooth(n=4, eps=0.5, lam_min=1e-2, seed=0):
    """``F(u) = M u + eps tanh(u)`` with ``M`` symmetric positive definite, spectrum ``[lam_min, 1]``.

    The perturbation is monotone with a Lipschitz derivative:
    ``c0 = eps * 4 / (3 sqrt 3)``, ``kappa = 1``.
    """
    spectrum = np.geomspace(lam_min, 1.0, n) if n > 1 else [1.0]
    M = spd_matrix(n, spectrum, rng_for(seed))
    M.setflags(write=False)
    y = alternating(n)

    def F(u):
        return M @ u + eps * np.tanh(u)

    def jac(u):
        return M + np.diag(eps / np.cosh(u) ** 2)

    desc = {"kind": "monotone-smooth", "n": n,
            "params": {"eps": eps, "lam_min": lam_min}, "seed": seed}
    return OperatorProblem(
        space=VectorSpace(n), F=F, jac=jac, rhs=F(y),
        smoothness=SmoothnessParams(eps * _TANH_CURV, 1.0),
        resolvent=ResolventParams(1.0, 1.0, GALLERY_EPS0),
        known_solution=y, name="monotone-smooth",
        meta={"descriptor": desc, "matrix": M, "constants_source": "analytic"})


_BUILDERS = {
    "wellposed-linear": (wellposed_linear, ("cond", "theta")),
    "illposed-kernel": (illposed_kernel, ()),
    "rank-deficient-linear": (rank_deficient_linear, ("rank",)),
    "monotone-holder": (monotone_holder, ("kappa",)),
    "monotone-smooth": (monotone_smooth, ("eps", "lam_min")),
}

DEFAULT_N = {"wellposed-linear": 4, "illposed-kernel": 32, "rank-deficient-linear": 5,
             "monotone-holder": 2, "monotone-smooth": 4}


def gallery_make(name: str, n=None, seed=0, **params) -> OperatorProblem:
    """Construct a gallery problem by name; unknown names raise UsageError."""
    if name not in _BUILDERS:
        raise UsageError(f"unknown problem {name!r}; gallery: {', '.join(GALLERY)}")
    build, allowed = _BUILDERS[name]
    unknown = set(params) - set(allowed)
    if unknown:
        raise UsageError(f"{name} does not take parameter(s) {sorted(unknown)}")
    n = DEFAULT_N[name] if n is None else int(n)
    if n < 1:
        raise UsageError("n must be positive")
    return build(n=n, seed=seed, **params)


def apply_asserted_constants(problem: OperatorProblem, constants: dict) -> OperatorProblem:
    """Override ``c0, kappa, c1, b, eps0, theta`` with user-asserted values."""
    if not constants:
        return problem
    sm, rp = problem.smoothness, problem.resolvent
    known = {"c0", "kappa", "c1", "b", "eps0", "theta"}
    bad = set(constants) - known
    if bad:
        raise UsageError(f"unknown constant(s) {sorted(bad)}; expected a subset of {sorted(known)}")
    sm = SmoothnessParams(float(constants.get("c0", sm.c0)), float(constants.get("kappa", sm.kappa)))
    rp = ResolventParams(float(constants.get("c1", rp.c1)), float(constants.get("b", rp.b)),
                         float(constants.get("eps0", rp.eps0)), float(constants.get("theta", rp.theta)))
    meta = dict(problem.meta, constants_source="asserted")
    return problem.replace(smoothness=sm, resolvent=rp, meta=meta)


def problem_from_spec(spec: dict) -> OperatorProblem:
    """Build a problem from the decoded JSON problem-file object."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise UsageError("problem file must be a JSON object with a 'kind' field")
    kind = spec["kind"]
    seed = int(spec.get("seed", 0))
    params = dict(spec.get("params", {}))
    if kind == "linear":
        n = int(spec["n"])
        data = np.asarray(spec["data"], dtype=float)
        if data.size != n * n:
            raise UsageError(f"'data' has {data.size} entries, expected n*n={n * n}")
        M = data.reshape(n, n)
        y = spec.get("known_solution")
        y = None if y is None else np.asarray(y, dtype=float)
        rhs = spec.get("rhs")
        if rhs is None and y is None:
            raise UsageError("a linear problem needs 'rhs' or 'known_solution'")
        desc = {"kind": "linear", "n": n, "params": params, "seed": seed}
        prob = _linear("linear", M, y, rhs=rhs if rhs is not None else M @ y, descriptor=desc)
        prob.meta["data"] = data.tolist()
        if rhs is not None:
            prob.meta["rhs"] = list(map(float, rhs))
        if y is not None:
            prob.meta["known_solution"] = y.tolist()
        if "asserted_constants" not in spec:
            # no analytic constants for an arbitrary matrix
            prob.meta["constants_source"] = "asserted"
    else:
        prob = gallery_make(kind, n=spec.get("n"), seed=seed, **params)
    return apply_asserted_constants(prob, spec.get("asserted_constants") or {})


def problem_spec(problem: OperatorProblem) -> dict:
    """The JSON problem-file object that rebuilds ``problem``."""
    desc = dict(problem.meta.get("descriptor") or {})
    if not desc:
        raise UsageError("problem was not built from the gallery or a problem file")
    spec = {"kind": desc["kind"], "n": desc["n"], "params": desc.get("params", {}),
            "seed": desc.get("seed", 0)}
    if desc["kind"] == "linear":
        spec["data"] = problem.meta["data"]
        for key in ("rhs", "known_solution"):
            if key in problem.meta:
                spec[key] = problem.meta[key]
    if problem.meta.get("constants_source") == "asserted":
        sm, rp = problem.smoothness, problem.resolvent
        spec["asserted_constants"] = {"c0": sm.c0, "kappa": sm.kappa, "c1": rp.c1,
                                      "b": rp.b, "eps0": rp.eps0, "theta": rp.theta}
    return spec


def load_problem(path) -> OperatorProblem:
    with open(path, encoding="utf-8") as fh:
        try:
            spec = json.load(fh)
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON ({exc})") from exc
    return problem_from_spec(spec)
