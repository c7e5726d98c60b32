"""Pure-Python scalar integrator for comparison ODEs.

Mirrors ``_ckernels.pyx`` statement for statement. It is the fallback when
the compiled extension is unavailable, and the only path for instances
given as arbitrary callables.

The method is the five-stage exponential Runge-Kutta scheme of stiff order
four (Hochbruck & Ostermann, 2005) applied to ``y' = -gamma(t) y + N(t, y)``.
At the start of every step the right-hand side is linearized,
``L = -gamma(t_n) + dN/dy(t_n, y_n)``, and the scheme integrates ``L y``
exactly while treating the remainder explicitly; local error is estimated
by step doubling.
"""
import math

import numpy as np

OK, BLOWUP, STEP_FAILURE, MAX_STEPS, NONFINITE = 0, 1, 2, 3, 4

_INV_FACT = [1.0 / math.factorial(j) for j in range(30)]


def phi_functions(z):
    """``(e^z, phi1(z), phi2(z), phi3(z))`` for real ``z``."""
    if z > 700.0:
        return math.inf, math.inf, math.inf, math.inf
    if abs(z) < 0.5:
        # phi_k(z) = sum_j z^j / (j + k)!
        p1 = p2 = p3 = 0.0
        zj = 1.0
        for j in range(18):
            p1 += zj * _INV_FACT[j + 1]
            p2 += zj * _INV_FACT[j + 2]
            p3 += zj * _INV_FACT[j + 3]
            zj *= z
        return 1.0 + z * p1, p1, p2, p3
    e = math.exp(z)
    p1 = (e - 1.0) / z
    p2 = (p1 - 1.0) / z
    p3 = (p2 - 0.5) / z
    return e, p1, p2, p3


def exprk4_step(gam, N, t, y, h, N1):
    """One step of the stiff-order-4 exponential RK method.

    Works for floats and for numpy arrays (the linear part is a scalar).
    ``N1`` is ``N(t, y)``.
    """
    z = -gam * h
    e1, p11, p21, p31 = phi_functions(z)
    e2, p12, p22, p32 = phi_functions(0.5 * z)
    U2 = e2 * y + h * (0.5 * p12) * N1
    N2 = N(t + 0.5 * h, U2)
    U3 = e2 * y + h * ((0.5 * p12 - p22) * N1 + p22 * N2)
    N3 = N(t + 0.5 * h, U3)
    U4 = e1 * y + h * ((p11 - 2.0 * p21) * N1 + p21 * (N2 + N3))
    N4 = N(t + h, U4)
    a52 = 0.5 * p22 - p31 + 0.25 * p21 - 0.5 * p32
    a54 = 0.25 * p22 - a52
    a51 = 0.5 * p12 - 2.0 * a52 - a54
    U5 = e2 * y + h * (a51 * N1 + a52 * (N2 + N3) + a54 * N4)
    N5 = N(t + 0.5 * h, U5)
    return e1 * y + h * ((p11 - 3.0 * p21 + 4.0 * p31) * N1
                         + (4.0 * p31 - p21) * N4
                         + (4.0 * p21 - 8.0 * p31) * N5)


def integrate_scalar(gamma, N, dNdy, t_out, y0, rtol=1e-10, atol=1e-30, h0=0.0,
                     blowup=1e12, max_steps=1_000_000):
    """Integrate ``y' = -gamma(t) y + N(t, y)`` and report ``y`` at ``t_out``.

    ``dNdy(t, y)`` is the partial derivative of ``N`` in ``y``. ``t_out[0]``
    is the initial time; every output time is hit exactly.

    Returns
    -------
    y_out : ndarray
        Values at ``t_out``; entries past a failure are NaN.
    status : int
        One of OK, BLOWUP, STEP_FAILURE, MAX_STEPS, NONFINITE.
    t_fail : float
        Time of the failure (NaN when status is OK).
    nsteps, nreject : int
    """
    t_out = np.asarray(t_out, dtype=float)
    n_out = t_out.shape[0]
    y_out = np.full(n_out, np.nan)
    t = float(t_out[0])
    y = float(y0)
    y_out[0] = y
    if n_out == 1:
        return y_out, OK, math.nan, 0, 0
    span = float(t_out[-1]) - t
    h = h0 if h0 > 0 else min(1e-2, span)
    nsteps = nreject = 0
    idx = 1
    while idx < n_out:
        if nsteps + nreject >= max_steps:
            return y_out, MAX_STEPS, t, nsteps, nreject
        target = float(t_out[idx])
        remaining = target - t
        tiny = 1e-14 * max(1.0, abs(t))
        if remaining <= tiny:
            y_out[idx] = y
            idx += 1
            continue
        clipped = h >= remaining
        hs = remaining if clipped else h
        if hs <= tiny:
            return y_out, STEP_FAILURE, t, nsteps, nreject
        g = gamma(t) - dNdy(t, y)

        def R(tt, yy, g=g):
            return N(tt, yy) + (g - gamma(tt)) * yy

        R1 = R(t, y)
        y_full = exprk4_step(g, R, t, y, hs, R1)
        hh = 0.5 * hs
        y_half = exprk4_step(g, R, t, y, hh, R1)
        y_two = exprk4_step(g, R, t + hh, y_half, hh, R(t + hh, y_half))
        if not (math.isfinite(y_two) and math.isfinite(y_full)):
            nreject += 1
            h = 0.25 * hs
            continue
        err = abs(y_two - y_full) / 15.0
        sc = atol + rtol * max(abs(y), abs(y_two))
        errn = err / sc
        if errn <= 1.0:
            nsteps += 1
            t = target if clipped else t + hs
            y = y_two
            if abs(y) > blowup:
                return y_out, BLOWUP, t, nsteps, nreject
            if clipped:
                y_out[idx] = y
                idx += 1
            fac = 4.0 if errn < 1e-10 else min(4.0, max(0.2, 0.9 * errn ** -0.2))
            hn = hs * fac
            h = max(hn, h) if clipped else hn
        else:
            nreject += 1
            h = hs * max(0.2, 0.9 * errn ** -0.2)
    return y_out, OK, math.nan, nsteps, nreject


def integrate_powerlaw(gamma, A, ea, B, eb, s0, s1, p, y0, t_out, rtol=1e-10,
                       atol=1e-30, h0=0.0, blowup=1e12, max_steps=1_000_000):
    """Comparison ODE with power-law coefficients.

    ``y' = -gamma y + A s(t)**ea |y|**p + B s(t)**eb`` with ``s(t) = s0 + s1 t``.
    """
    def gam(t):
        return gamma

    def N(t, y):
        s = s0 + s1 * t
        return A * s ** ea * abs(y) ** p + B * s ** eb

    def dNdy(t, y):
        s = s0 + s1 * t
        return A * s ** ea * p * math.copysign(abs(y) ** (p - 1.0), y)

    return integrate_scalar(gam, N, dNdy, t_out, y0, rtol, atol, h0, blowup, max_steps)
