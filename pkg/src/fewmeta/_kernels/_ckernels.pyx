# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled numerical kernels; see ``_pykernels`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, exp, sqrt, erfc, fabs, INFINITY, M_PI

cnp.import_array()

ML = 0
REML = 1
STATUS_OK = 0
STATUS_UPPER_BOUND = 1
STATUS_MAXITER = 2

cdef double _INVPHI = 0.6180339887498949
cdef double _LOG2PI = 1.8378770664093453
cdef double _SQRT1_2 = 0.7071067811865476
cdef double _INV_SQRT2PI = 0.3989422804014327


cdef inline void _q(const double[::1] y, const double[::1] s2, double tau,
                    double* q, double* mu, double* wsum) noexcept nogil:
    cdef Py_ssize_t j, k = y.shape[0]
    cdef double w, sw = 0.0, swy = 0.0, m, r, acc = 0.0, t2 = tau * tau
    for j in range(k):
        w = 1.0 / (s2[j] + t2)
        sw += w
        swy += w * y[j]
    m = swy / sw
    for j in range(k):
        r = y[j] - m
        acc += r * r / (s2[j] + t2)
    q[0] = acc
    mu[0] = m
    wsum[0] = sw


def q_stat(const double[::1] y, const double[::1] s2, double tau):
    cdef double q, mu, wsum
    _q(y, s2, tau, &q, &mu, &wsum)
    return q, mu, wsum


cdef double _objective(const double[::1] y, const double[::1] s2, double tau, int kind,
                       double shape, double rate) noexcept nogil:
    cdef Py_ssize_t j, k = y.shape[0]
    cdef double v, sw = 0.0, swy = 0.0, slv = 0.0, m, r, acc = 0.0, t2 = tau * tau, val
    for j in range(k):
        v = s2[j] + t2
        sw += 1.0 / v
        swy += y[j] / v
        slv += log(v)
    m = swy / sw
    for j in range(k):
        r = y[j] - m
        acc += r * r / (s2[j] + t2)
    val = -0.5 * slv - 0.5 * acc
    if kind == 1:
        val -= 0.5 * log(sw)
    if shape != 1.0:
        if tau <= 0.0:
            return -INFINITY if shape > 1.0 else INFINITY
        val += (shape - 1.0) * log(tau)
    if rate != 0.0:
        val -= rate * tau
    return val


def objective(const double[::1] y, const double[::1] s2, double tau, int kind,
              double shape, double rate):
    return _objective(y, s2, tau, kind, shape, rate)


cdef double _boundary_slope(const double[::1] y, const double[::1] s2, int kind,
                           double rate) noexcept nogil:
    cdef Py_ssize_t j, k = y.shape[0]
    cdef double w, sw = 0.0, swy = 0.0, sw2 = 0.0, m, r, acc = 0.0, val
    if rate > 0.0:
        return -INFINITY
    for j in range(k):
        w = 1.0 / s2[j]
        sw += w
        swy += w * y[j]
        sw2 += w * w
    m = swy / sw
    for j in range(k):
        r = (y[j] - m) / s2[j]
        acc += r * r
    val = 0.5 * (acc - sw)
    if kind == 1:
        val += 0.5 * sw2 / sw
    return val


def boundary_slope(const double[::1] y, const double[::1] s2, int kind, double rate):
    return _boundary_slope(y, s2, kind, rate)


def maximize_tau(const double[::1] y, const double[::1] s2, int kind, double shape,
                 double rate, double tau_max, double tol, int n_grid=96, int max_iter=500):
    cdef int i, n = n_grid, best_i = 0, it = 0, status = 0
    cdef double t, f, best_f = -INFINITY, a, b, c, d, fc, fd, ft, lo, hi, x, f0
    cdef bint at_zero = False
    with nogil:
        for i in range(n + 1):
            x = <double>i / n
            t = tau_max * x * x
            f = _objective(y, s2, t, kind, shape, rate)
            if f > best_f:
                best_f = f
                best_i = i
        x = <double>(best_i - 1 if best_i > 0 else 0) / n
        lo = tau_max * x * x
        x = <double>(best_i + 1 if best_i < n else n) / n
        hi = tau_max * x * x
        a = lo
        b = hi
        c = b - _INVPHI * (b - a)
        d = a + _INVPHI * (b - a)
        fc = _objective(y, s2, c, kind, shape, rate)
        fd = _objective(y, s2, d, kind, shape, rate)
        while b - a > tol and it < max_iter:
            if fc >= fd:
                b = d
                d = c
                fd = fc
                c = b - _INVPHI * (b - a)
                fc = _objective(y, s2, c, kind, shape, rate)
            else:
                a = c
                c = d
                fc = fd
                d = a + _INVPHI * (b - a)
                fd = _objective(y, s2, d, kind, shape, rate)
            it += 1
        if fc >= fd:
            t = c
            ft = fc
        else:
            t = d
            ft = fd
        status = 0 if it < max_iter else 2
        if shape <= 1.0:
            f0 = _objective(y, s2, 0.0, kind, shape, rate)
            at_zero = f0 >= ft or (ft - f0 <= 1e-12 * (fabs(f0) if fabs(f0) > 1.0 else 1.0)
                                   and _boundary_slope(y, s2, kind, rate) <= 0.0)
        if at_zero:
            t = 0.0
        elif best_i == n and hi - t <= 2.0 * tol:
            status = 1
    return t, status


def solve_q(const double[::1] y, const double[::1] s2, double target, double lo,
            double hi, double tol, int max_iter=400):
    cdef int it = 0
    cdef double mid, q, mu, wsum
    with nogil:
        while hi - lo > tol and it < max_iter:
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            _q(y, s2, mid, &q, &mu, &wsum)
            if q > target:
                lo = mid
            else:
                hi = mid
            it += 1
    return 0.5 * (lo + hi)


def marginal_grid(const double[::1] y, const double[::1] s2, taus_in):
    cdef const double[::1] taus = np.ascontiguousarray(taus_in, dtype=np.float64)
    cdef Py_ssize_t n = taus.shape[0], k = y.shape[0], i, j
    cdef cnp.ndarray[cnp.float64_t, ndim=1] logl_a = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dlogl_a = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] mu_a = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] wsum_a = np.empty(n)
    cdef double[::1] logl = logl_a, dlogl = dlogl_a, mus = mu_a, wsums = wsum_a
    cdef double t2, v, w, sw, swy, sw2, slv, m, r, q, qw
    with nogil:
        for i in range(n):
            t2 = taus[i] * taus[i]
            sw = 0.0
            swy = 0.0
            sw2 = 0.0
            slv = 0.0
            for j in range(k):
                v = s2[j] + t2
                w = 1.0 / v
                sw += w
                swy += w * y[j]
                sw2 += w * w
                slv += log(v)
            m = swy / sw
            q = 0.0
            qw = 0.0
            for j in range(k):
                w = 1.0 / (s2[j] + t2)
                r = y[j] - m
                q += w * r * r
                qw += w * w * r * r
            logl[i] = -0.5 * slv - 0.5 * log(sw) - 0.5 * q - 0.5 * (k - 1) * _LOG2PI
            dlogl[i] = taus[i] * (-sw + sw2 / sw + qw)
            mus[i] = m
            wsums[i] = sw
    return logl_a, dlogl_a, mu_a, wsum_a


cdef inline double _mix_cdf(double x, const double[::1] means, const double[::1] sds,
                            const double[::1] weights) noexcept nogil:
    cdef Py_ssize_t i, n = means.shape[0]
    cdef double acc = 0.0
    for i in range(n):
        acc += weights[i] * 0.5 * erfc(-(x - means[i]) / sds[i] * _SQRT1_2)
    return acc


cdef inline double _mix_pdf(double x, const double[::1] means, const double[::1] sds,
                            const double[::1] weights) noexcept nogil:
    cdef Py_ssize_t i, n = means.shape[0]
    cdef double acc = 0.0, z
    for i in range(n):
        z = (x - means[i]) / sds[i]
        acc += weights[i] * exp(-0.5 * z * z) / sds[i]
    return acc * _INV_SQRT2PI


def mixture_cdf(double x, const double[::1] means, const double[::1] sds,
                const double[::1] weights):
    return _mix_cdf(x, means, sds, weights)


def mixture_pdf(double x, const double[::1] means, const double[::1] sds,
                const double[::1] weights):
    return _mix_pdf(x, means, sds, weights)


def mixture_quantile(double p, const double[::1] means, const double[::1] sds,
                     const double[::1] weights, double tol=1e-13, int max_iter=200):
    cdef Py_ssize_t i, n = means.shape[0]
    cdef double lo = INFINITY, hi = -INFINITY, x = 0.0, f, d, xn
    cdef int it
    with nogil:
        for i in range(n):
            if means[i] - 12.0 * sds[i] < lo:
                lo = means[i] - 12.0 * sds[i]
            if means[i] + 12.0 * sds[i] > hi:
                hi = means[i] + 12.0 * sds[i]
            x += weights[i] * means[i]
        for it in range(max_iter):
            if not (lo < x < hi):
                x = 0.5 * (lo + hi)
            f = _mix_cdf(x, means, sds, weights) - p
            if f == 0.0:
                break
            if f > 0.0:
                hi = x
            else:
                lo = x
            d = _mix_pdf(x, means, sds, weights)
            if d > 0.0:
                xn = x - f / d
            else:
                xn = INFINITY
            if not (lo < xn < hi):
                xn = 0.5 * (lo + hi)
            if fabs(xn - x) <= tol * (1.0 + fabs(x)) or hi - lo <= tol * (1.0 + fabs(x)):
                x = xn
                break
            x = xn
    return x
