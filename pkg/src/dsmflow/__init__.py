"""Regularized Newton flow for ill-posed operator equations.

The flow ``u' = -(A(u) + a(t) I)^{-1} (F(u) + a(t) u - f)`` is integrated
under a decay law ``|a(t)| = r(t)`` derived from the problem constants,
with tools that certify each step of the convergence argument numerically.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DegenerateSample,
    DSMError,
    EvaluationError,
    NoConvergence,
    NondifferentiablePoint,
    ResolventSingular,
    UsageError,
)
from .operator import (  # noqa: E402
    OperatorProblem,
    ResolventParams,
    SmoothnessParams,
    VectorSpace,
    apply_resolvent,
    estimate_holder_constants,
    norm_and_derivative,
    verify_resolvent_bound,
)
from .schedule import ScheduleInputs, derive_schedule, validate_initial_conditions  # noqa: E402
from .comparison import InequalityInstance, integrate_phi, verify_sandwich  # noqa: E402
from .path import normal_solution, solve_regularized, track_path  # noqa: E402
from .plan import plan_run  # noqa: E402
from .solver import IntegratorConfig, convergence_check, envelope_check, solve  # noqa: E402
from .gallery import gallery_make, load_problem  # noqa: E402

__all__ = [
    "DSMError", "UsageError", "EvaluationError", "ResolventSingular", "NoConvergence",
    "NondifferentiablePoint", "DegenerateSample",
    "VectorSpace", "SmoothnessParams", "ResolventParams", "OperatorProblem",
    "apply_resolvent", "estimate_holder_constants", "norm_and_derivative", "verify_resolvent_bound",
    "ScheduleInputs", "derive_schedule", "validate_initial_conditions",
    "InequalityInstance", "integrate_phi", "verify_sandwich",
    "solve_regularized", "track_path", "normal_solution",
    "plan_run", "IntegratorConfig", "solve", "envelope_check", "convergence_check",
    "gallery_make", "load_problem",
]
