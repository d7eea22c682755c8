"""Pure numpy implementation of the numerical kernels.

Mirrors ``_ckernels.pyx`` function for function; used when the compiled
extension is missing or ``FEWMETA_PURE_PYTHON=1`` is set.
"""

import math

import numpy as np
from scipy.special import ndtr

ML = 0
REML = 1

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
_LOG2PI = math.log(2.0 * math.pi)
STATUS_OK = 0
STATUS_UPPER_BOUND = 1
STATUS_MAXITER = 2


def q_stat(y, s2, tau):
    """Return (Q, mu_hat, w_plus) at heterogeneity ``tau``."""
    w = 1.0 / (s2 + tau * tau)
    wsum = w.sum()
    mu = (w * y).sum() / wsum
    r = y - mu
    return float((w * r * r).sum()), float(mu), float(wsum)


def objective(y, s2, tau, kind, shape, rate):
    """Profile (kind=ML) or restricted (kind=REML) log-likelihood in tau.

    A gamma-type penalty ``(shape - 1) log tau - rate tau`` is added when
    ``shape != 1`` or ``rate != 0``.
    """
    v = s2 + tau * tau
    w = 1.0 / v
    wsum = w.sum()
    mu = (w * y).sum() / wsum
    r = y - mu
    val = -0.5 * np.log(v).sum() - 0.5 * (w * r * r).sum()
    if kind == REML:
        val -= 0.5 * math.log(wsum)
    if shape != 1.0:
        if tau <= 0.0:
            return -math.inf if shape > 1.0 else math.inf
        val += (shape - 1.0) * math.log(tau)
    if rate != 0.0:
        val -= rate * tau
    return float(val)


def boundary_slope(y, s2, kind, rate):
    """Derivative of :func:`objective` (shape 1) with respect to tau^2 at tau = 0."""
    if rate > 0.0:
        return -math.inf
    w = 1.0 / s2
    wsum = w.sum()
    r = y - (w * y).sum() / wsum
    val = 0.5 * ((w * w * r * r).sum() - wsum)
    if kind == REML:
        val += 0.5 * (w * w).sum() / wsum
    return float(val)


def maximize_tau(y, s2, kind, shape, rate, tau_max, tol, n_grid=96, max_iter=500):
    """Maximize :func:`objective` over [0, tau_max].

    A quadratic grid ``tau_max * (i/n)^2`` locates the best cell, then golden
    section refines inside its neighbours. Returns (tau, status); tau is an
    exact 0.0 whenever the boundary beats the interior candidate, or ties
    it to rounding while the slope at 0 is not positive.
    """
    n = n_grid
    best_i = 0
    best_f = -math.inf
    for i in range(n + 1):
        t = tau_max * (i / n) ** 2
        f = objective(y, s2, t, kind, shape, rate)
        if f > best_f:
            best_f = f
            best_i = i
    lo = tau_max * (max(best_i - 1, 0) / n) ** 2
    hi = tau_max * (min(best_i + 1, n) / n) ** 2
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc = objective(y, s2, c, kind, shape, rate)
    fd = objective(y, s2, d, kind, shape, rate)
    it = 0
    while b - a > tol and it < max_iter:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = objective(y, s2, c, kind, shape, rate)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = objective(y, s2, d, kind, shape, rate)
        it += 1
    t, ft = (c, fc) if fc >= fd else (d, fd)
    status = STATUS_OK if it < max_iter else STATUS_MAXITER
    if shape <= 1.0:
        f0 = objective(y, s2, 0.0, kind, shape, rate)
        # The objective is flat in tau at 0, so near-boundary candidates differ
        # from f0 by rounding only; the slope in tau^2 settles those.
        if f0 >= ft or (ft - f0 <= 1e-12 * max(1.0, abs(f0))
                        and boundary_slope(y, s2, kind, rate) <= 0.0):
            return 0.0, status
    if best_i == n and hi - t <= 2.0 * tol:
        status = STATUS_UPPER_BOUND
    return float(t), status


def solve_q(y, s2, target, lo, hi, tol, max_iter=400):
    """Bisection for Q(tau) = target given Q(lo) >= target >= Q(hi)."""
    it = 0
    while hi - lo > tol and it < max_iter:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if q_stat(y, s2, mid)[0] > target:
            lo = mid
        else:
            hi = mid
        it += 1
    return 0.5 * (lo + hi)


def marginal_grid(y, s2, taus):
    """Log marginal likelihood (mu integrated under a flat prior) on a tau grid.

    Returns arrays (log_l, dlog_l/dtau, mu_hat, w_plus).
    """
    taus = np.asarray(taus, dtype=float)
    k = y.shape[0]
    v = s2[None, :] + (taus * taus)[:, None]
    w = 1.0 / v
    wsum = w.sum(axis=1)
    mu = (w * y[None, :]).sum(axis=1) / wsum
    r = y[None, :] - mu[:, None]
    wr2 = w * r * r
    q = wr2.sum(axis=1)
    w2 = w * w
    logl = (-0.5 * np.log(v).sum(axis=1) - 0.5 * np.log(wsum) - 0.5 * q
            - 0.5 * (k - 1) * _LOG2PI)
    dlogl = taus * (-wsum + w2.sum(axis=1) / wsum + (w * wr2).sum(axis=1))
    return logl, dlogl, mu, wsum


def mixture_cdf(x, means, sds, weights):
    return float((weights * ndtr((x - means) / sds)).sum())


def mixture_pdf(x, means, sds, weights):
    z = (x - means) / sds
    return float((weights * np.exp(-0.5 * z * z) / sds).sum() / math.sqrt(2.0 * math.pi))


def mixture_quantile(p, means, sds, weights, tol=1e-13, max_iter=200):
    """Safeguarded Newton solve of mixture_cdf(x) = p."""
    lo = float((means - 12.0 * sds).min())
    hi = float((means + 12.0 * sds).max())
    x = float((weights * means).sum())
    for _ in range(max_iter):
        if not (lo < x < hi):
            x = 0.5 * (lo + hi)
        f = mixture_cdf(x, means, sds, weights) - p
        if f == 0.0:
            return x
        if f > 0.0:
            hi = x
        else:
            lo = x
        d = mixture_pdf(x, means, sds, weights)
        step = f / d if d > 0.0 else math.inf
        xn = x - step
        if not (lo < xn < hi):
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= tol * (1.0 + abs(x)) or hi - lo <= tol * (1.0 + abs(x)):
            return xn
        x = xn
    return x
