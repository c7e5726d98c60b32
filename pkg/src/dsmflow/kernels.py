"""Selects the compiled comparison-ODE kernel, falling back to pure Python.

Set ``DSM_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py
from ._kernels_py import (  # noqa: F401
    BLOWUP,
    MAX_STEPS,
    NONFINITE,
    OK,
    STEP_FAILURE,
    exprk4_step,
    integrate_scalar,
    phi_functions,
)

COMPILED = False
if not os.environ.get("DSM_PURE_PYTHON"):
    try:
        from ._ckernels import integrate_powerlaw  # type: ignore[attr-defined]

        COMPILED = True
    except ImportError:
        pass
if not COMPILED:
    integrate_powerlaw = _kernels_py.integrate_powerlaw

integrate_powerlaw_py = _kernels_py.integrate_powerlaw

STATUS_NAMES = {
    OK: "ok",
    BLOWUP: "blow-up",
    STEP_FAILURE: "step-failure",
    MAX_STEPS: "max-steps",
    NONFINITE: "non-finite",
}
