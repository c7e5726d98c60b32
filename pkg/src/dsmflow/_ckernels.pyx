# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled comparison-ODE kernel.

Same algorithm as ``_kernels_py.integrate_powerlaw``: exponential RK4 of
stiff order four around the linearization frozen at each step start,
step-doubling error control, coefficients of power-law form in
``s(t) = s0 + s1 t``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, pow, isfinite, NAN, INFINITY

cnp.import_array()

cdef enum:
    OK = 0
    BLOWUP = 1
    STEP_FAILURE = 2
    MAX_STEPS = 3
    NONFINITE = 4

cdef double[30] INV_FACT


cdef void _init_fact():
    cdef int j
    cdef double f = 1.0
    INV_FACT[0] = 1.0
    for j in range(1, 30):
        f *= j
        INV_FACT[j] = 1.0 / f


_init_fact()


cdef struct Coeffs:
    double gamma, A, ea, B, eb, s0, s1, p, g


cdef inline double _dNdy(const Coeffs* c, double t, double y) nogil:
    cdef double s = c.s0 + c.s1 * t
    cdef double v = c.A * pow(s, c.ea) * c.p * pow(fabs(y), c.p - 1.0)
    return -v if y < 0 else v


cdef inline double _N(const Coeffs* c, double t, double y) nogil:
    # remainder after removing the frozen linear part -c.g * y
    cdef double s = c.s0 + c.s1 * t
    return (c.A * pow(s, c.ea) * pow(fabs(y), c.p) + c.B * pow(s, c.eb)
            + (c.g - c.gamma) * y)


cdef inline void _phis(double z, double* out) nogil:
    cdef double p1, p2, p3, zj, e
    cdef int j
    if z > 700.0:
        out[0] = INFINITY
        out[1] = INFINITY
        out[2] = INFINITY
        out[3] = INFINITY
        return
    if fabs(z) < 0.5:
        p1 = 0.0
        p2 = 0.0
        p3 = 0.0
        zj = 1.0
        for j in range(18):
            p1 += zj * INV_FACT[j + 1]
            p2 += zj * INV_FACT[j + 2]
            p3 += zj * INV_FACT[j + 3]
            zj *= z
        out[0] = 1.0 + z * p1
    else:
        e = exp(z)
        p1 = (e - 1.0) / z
        p2 = (p1 - 1.0) / z
        p3 = (p2 - 0.5) / z
        out[0] = e
    out[1] = p1
    out[2] = p2
    out[3] = p3


cdef double _step(const Coeffs* c, double t, double y, double h, double N1) nogil:
    cdef double f[4]
    cdef double g[4]
    _phis(-c.g * h, f)
    _phis(-0.5 * c.g * h, g)
    cdef double e1 = f[0], p11 = f[1], p21 = f[2], p31 = f[3]
    cdef double e2 = g[0], p12 = g[1], p22 = g[2], p32 = g[3]
    cdef double U2 = e2 * y + h * (0.5 * p12) * N1
    cdef double N2 = _N(c, t + 0.5 * h, U2)
    cdef double U3 = e2 * y + h * ((0.5 * p12 - p22) * N1 + p22 * N2)
    cdef double N3 = _N(c, t + 0.5 * h, U3)
    cdef double U4 = e1 * y + h * ((p11 - 2.0 * p21) * N1 + p21 * (N2 + N3))
    cdef double N4 = _N(c, t + h, U4)
    cdef double a52 = 0.5 * p22 - p31 + 0.25 * p21 - 0.5 * p32
    cdef double a54 = 0.25 * p22 - a52
    cdef double a51 = 0.5 * p12 - 2.0 * a52 - a54
    cdef double U5 = e2 * y + h * (a51 * N1 + a52 * (N2 + N3) + a54 * N4)
    cdef double N5 = _N(c, t + 0.5 * h, U5)
    return e1 * y + h * ((p11 - 3.0 * p21 + 4.0 * p31) * N1
                         + (4.0 * p31 - p21) * N4
                         + (4.0 * p21 - 8.0 * p31) * N5)


def integrate_powerlaw(double gamma, double A, double ea, double B, double eb,
                       double s0, double s1, double p, double y0, t_out,
                       double rtol=1e-10, double atol=1e-30, double h0=0.0,
                       double blowup=1e12, long max_steps=1000000):
    """Comparison ODE ``y' = -gamma y + A s**ea |y|**p + B s**eb``, ``s = s0 + s1 t``.

    Returns ``(y_out, status, t_fail, nsteps, nreject)`` exactly as the
    pure-Python version does.
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=1] tt = np.ascontiguousarray(t_out, dtype=np.float64)
    cdef Py_ssize_t n_out = tt.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] y_out = np.full(n_out, np.nan)
    cdef Coeffs c
    c.gamma = gamma
    c.A = A
    c.ea = ea
    c.B = B
    c.eb = eb
    c.s0 = s0
    c.s1 = s1
    c.p = p
    c.g = gamma
    cdef double t = tt[0]
    cdef double y = y0
    y_out[0] = y
    if n_out == 1:
        return y_out, OK, NAN, 0, 0
    cdef double span = tt[n_out - 1] - t
    cdef double h = h0 if h0 > 0 else (1e-2 if 1e-2 < span else span)
    cdef long nsteps = 0, nreject = 0
    cdef Py_ssize_t idx = 1
    cdef double target, remaining, tiny, hs, hh, N1, y_full, y_half, y_two
    cdef double err, sc, errn, fac, hn
    cdef bint clipped
    with nogil:
        while idx < n_out:
            if nsteps + nreject >= max_steps:
                with gil:
                    return y_out, MAX_STEPS, t, nsteps, nreject
            target = tt[idx]
            remaining = target - t
            tiny = 1e-14 * (fabs(t) if fabs(t) > 1.0 else 1.0)
            if remaining <= tiny:
                y_out[idx] = y
                idx += 1
                continue
            clipped = h >= remaining
            hs = remaining if clipped else h
            if hs <= tiny:
                with gil:
                    return y_out, STEP_FAILURE, t, nsteps, nreject
            c.g = c.gamma - _dNdy(&c, t, y)
            N1 = _N(&c, t, y)
            y_full = _step(&c, t, y, hs, N1)
            hh = 0.5 * hs
            y_half = _step(&c, t, y, hh, N1)
            y_two = _step(&c, t + hh, y_half, hh, _N(&c, t + hh, y_half))
            if not (isfinite(y_two) and isfinite(y_full)):
                nreject += 1
                h = 0.25 * hs
                continue
            err = fabs(y_two - y_full) / 15.0
            sc = atol + rtol * (fabs(y) if fabs(y) > fabs(y_two) else fabs(y_two))
            errn = err / sc
            if errn <= 1.0:
                nsteps += 1
                t = target if clipped else t + hs
                y = y_two
                if fabs(y) > blowup:
                    with gil:
                        return y_out, BLOWUP, t, nsteps, nreject
                if clipped:
                    y_out[idx] = y
                    idx += 1
                if errn < 1e-10:
                    fac = 4.0
                else:
                    fac = 0.9 * pow(errn, -0.2)
                    fac = 4.0 if fac > 4.0 else (0.2 if fac < 0.2 else fac)
                hn = hs * fac
                h = (hn if hn > h else h) if clipped else hn
            else:
                nreject += 1
                fac = 0.9 * pow(errn, -0.2)
                h = hs * (0.2 if fac < 0.2 else fac)
    return y_out, OK, NAN, nsteps, nreject
