# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled scalar stepping kernel.

Handles the one-dimensional built-in coefficient families only; the generic
numpy engine in ``scheme.py`` is the reference implementation and the
fallback for everything else.  The update rule, evaluation order and
truncation arithmetic mirror the numpy engine so the two backends agree to
rounding noise.
"""

from libc.math cimport fabs, pow, sqrt, isfinite, NAN

cimport numpy as cnp

import numpy as np

# coefficient families (scalar state, scalar Brownian motion)
cdef enum CoeffFamily:
    FAMILY_LINEAR = 0   # f = p0*x, g = p1*x, h = p2*x
    FAMILY_CUBIC = 1    # f = p0*x^3 + p1*|y|^p2 + p3*x
                        # g = p4*|x|^p5 + p6*y
                        # h = p7*x + p8*y


cdef inline double _clip(double v, double radius) nogil:
    cdef double norm = sqrt(v * v)
    if norm > radius:
        return v * (radius / norm)
    return v


def step_scalar(
    double[:, ::1] hist,          # (M+1, P) ring buffer, hist[j] = X(t_{j-M})
    const double[:, ::1] d_brownian,    # (K, P)
    const cnp.int64_t[:, ::1] d_jumps,  # (K, P)
    double dt,
    double radius,                # +inf disables truncation (plain Euler)
    bint truncate_jump,           # jump coefficient sees projected arguments
    int family,
    const double[::1] params,
    double overflow_limit,
    cnp.uint8_t[::1] overflow,    # (P,) in/out halt flags
    double[::1] final,            # (P,) out: state at t_K
    traj=None,                    # optional (K+1, P) array: states at t_0..t_K
    moments=None,                 # optional (2, K+1): += sum_p |x|^q, |x|^(2q)
    double q=0.0,
):
    cdef Py_ssize_t m_steps = hist.shape[0] - 1
    cdef Py_ssize_t n_paths = hist.shape[1]
    cdef Py_ssize_t n_steps = d_brownian.shape[0]
    cdef Py_ssize_t k, p, cur, dly
    cdef double x, y, px, py, f, g, h, xn, aq
    cdef double p0, p1, p2, p3, p4, p5, p6, p7, p8
    cdef bint record = traj is not None
    cdef bint track = moments is not None
    cdef double[:, ::1] traj_v = traj if record else hist[:0, :]
    cdef double[:, ::1] mom_v = moments if track else hist[:0, :]

    p0 = params[0]; p1 = params[1]; p2 = params[2]
    if family == FAMILY_CUBIC:
        p3 = params[3]; p4 = params[4]; p5 = params[5]
        p6 = params[6]; p7 = params[7]; p8 = params[8]

    with nogil:
        if record:
            for p in range(n_paths):
                traj_v[0, p] = hist[m_steps, p]
        if track:
            for p in range(n_paths):
                aq = pow(fabs(hist[m_steps, p]), q)
                mom_v[0, 0] += aq
                mom_v[1, 0] += aq * aq
        for k in range(n_steps):
            cur = (k + m_steps) % (m_steps + 1)
            dly = k % (m_steps + 1)
            for p in range(n_paths):
                if overflow[p]:
                    if record:
                        traj_v[k + 1, p] = NAN
                    if track:
                        mom_v[0, k + 1] = NAN
                        mom_v[1, k + 1] = NAN
                    hist[dly, p] = NAN
                    continue
                x = hist[cur, p]
                y = hist[dly, p]
                px = _clip(x, radius)
                py = _clip(y, radius)
                if family == FAMILY_LINEAR:
                    f = p0 * px
                    g = p1 * px
                    h = p2 * (px if truncate_jump else x)
                else:
                    f = p0 * px * px * px + p1 * pow(fabs(py), p2) + p3 * px
                    g = p4 * pow(fabs(px), p5) + p6 * py
                    if truncate_jump:
                        h = p7 * px + p8 * py
                    else:
                        h = p7 * x + p8 * y
                xn = x + f * dt + g * d_brownian[k, p] + h * d_jumps[k, p]
                if not (fabs(xn) <= overflow_limit):
                    overflow[p] = 1
                    xn = NAN
                hist[dly, p] = xn
                if record:
                    traj_v[k + 1, p] = xn
                if track:
                    aq = pow(fabs(xn), q)
                    mom_v[0, k + 1] += aq
                    mom_v[1, k + 1] += aq * aq
        for p in range(n_paths):
            final[p] = hist[(n_steps + m_steps) % (m_steps + 1), p]
