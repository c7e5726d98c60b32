import numpy as np
import pytest

from dsmflow.operator import OperatorProblem, ResolventParams, SmoothnessParams, VectorSpace


def make_problem(F, jac, rhs, *, n=None, c0=0.0, kappa=1.0, c1=1.0, b=1.0, eps0=1e6, theta=0.0,
                 y=None, space=None):
    rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
    n = rhs.size if n is None else n
    return OperatorProblem(
        space=space or VectorSpace(n), F=F, jac=jac, rhs=rhs,
        smoothness=SmoothnessParams(c0, kappa), resolvent=ResolventParams(c1, b, eps0, theta),
        known_solution=None if y is None else np.atleast_1d(np.asarray(y, dtype=float)))


def linear_problem(M, rhs, **kw):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return make_problem(lambda u: M @ u, lambda u: M, rhs, **kw)


@pytest.fixture
def identity1():
    """``F(u) = u`` on R^1 with ``f = 1``."""
    return linear_problem([[1.0]], [1.0], y=[1.0])
