"""Brute-force reference computations written independently of the package."""

import math

import numpy as np
from scipy import stats

GRID_STEP = 1e-4


def q_generalized(y, se, tau):
    y = np.asarray(y, float)
    w = 1.0 / (np.asarray(se, float) ** 2 + tau * tau)
    mu = (w * y).sum() / w.sum()
    return float((w * (y - mu) ** 2).sum())


def dl_closed_form(y, se):
    y = np.asarray(y, float)
    w = 1.0 / np.asarray(se, float) ** 2
    mu = (w * y).sum() / w.sum()
    q = (w * (y - mu) ** 2).sum()
    c = w.sum() - (w * w).sum() / w.sum()
    return math.sqrt(max(0.0, (q - (len(y) - 1)) / c))


def _loglik_on_grid(y, se, taus, restricted):
    y = np.asarray(y, float)[None, :]
    v = np.asarray(se, float)[None, :] ** 2 + taus[:, None] ** 2
    w = 1.0 / v
    mu = (w * y).sum(1, keepdims=True) / w.sum(1, keepdims=True)
    ll = -0.5 * np.log(v).sum(1) - 0.5 * (w * (y - mu) ** 2).sum(1)
    if restricted:
        ll -= 0.5 * np.log(w.sum(1))
    return ll


def grid_argmax(y, se, kind, tau_max=10.0, step=GRID_STEP, shape=2.0, rate=0.0):
    """Maximizer of ML, REML or BM (ML base) over ``0, step, 2 step, ..., tau_max``."""
    taus = np.arange(0.0, tau_max + step / 2, step)
    if kind == "ML":
        f = _loglik_on_grid(y, se, taus, False)
    elif kind == "REML":
        f = _loglik_on_grid(y, se, taus, True)
    elif kind == "BM":
        with np.errstate(divide="ignore"):
            f = _loglik_on_grid(y, se, taus, False) + (shape - 1.0) * np.log(taus) - rate * taus
    else:
        raise ValueError(kind)
    return float(taus[int(np.argmax(f))])


def reml_slope_at_zero(y, se, h=1e-7):
    """One-sided difference of the restricted log-likelihood in tau^2 at 0."""
    taus = np.array([0.0, math.sqrt(h), math.sqrt(2 * h)])
    f = _loglik_on_grid(y, se, taus, True)
    return float((-3 * f[0] + 4 * f[1] - f[2]) / (2 * h))


def bayes_2d(y, se, log_prior, cut, level=0.95, n_tau=4001, n_mu=16001):
    """Posterior summaries from a dense (tau, mu) rectangle with trapezoid weights.

    The joint density is evaluated directly from the two-level normal model;
    nothing is integrated analytically.
    """
    y = np.asarray(y, float)
    s2 = np.asarray(se, float) ** 2
    taus = np.linspace(0.0, cut, n_tau)
    half = 0.5 * (y.max() - y.min()) + 8.0 * math.sqrt(s2.max() + cut * cut)
    mid = 0.5 * (y.max() + y.min())
    mus = np.linspace(mid - half, mid + half, n_mu)
    dt, dm = taus[1] - taus[0], mus[1] - mus[0]
    lp = log_prior(taus)

    # sum_j (y_j - mu)^2 / v_j expanded as a quadratic in mu, per tau row
    v = s2[None, :] + taus[:, None] ** 2
    a = (1.0 / v).sum(1)
    b = (y / v).sum(1)
    c = (y * y / v).sum(1)
    row = -0.5 * np.log(2 * np.pi * v).sum(1) + lp

    def log_joint(rows):
        return (row[rows, None] - 0.5 * (a[rows, None] * mus * mus
                                         - 2.0 * b[rows, None] * mus + c[rows, None]))

    offset = max(float(log_joint(slice(i, i + 1)).max()) for i in range(0, n_tau, 50))
    wt = np.full(n_tau, dt)
    wt[[0, -1]] *= 0.5
    wm = np.full(n_mu, dm)
    wm[[0, -1]] *= 0.5
    p_tau = np.empty(n_tau)
    p_mu = np.zeros(n_mu)
    for i in range(0, n_tau, 200):
        rows = slice(i, i + 200)
        joint = np.exp(log_joint(rows) - offset)
        p_tau[rows] = joint @ wm
        p_mu += wt[rows] @ joint
    cdf_tau = np.concatenate(([0.0], np.cumsum(0.5 * (p_tau[1:] + p_tau[:-1]) * dt)))
    cdf_tau /= cdf_tau[-1]
    cdf_mu = np.concatenate(([0.0], np.cumsum(0.5 * (p_mu[1:] + p_mu[:-1]) * dm)))
    cdf_mu /= cdf_mu[-1]

    def q_tau(p):
        return float(np.interp(p, cdf_tau, taus))

    def q_mu(p):
        return float(np.interp(p, cdf_mu, mus))

    a = 0.5 * (1.0 - level)
    u = np.linspace(0.0, 1.0 - level, 4001)
    lo = np.interp(u, cdf_tau, taus)
    hi = np.interp(u + level, cdf_tau, taus)
    j = int(np.argmin(hi - lo))
    return {
        "tau_median": q_tau(0.5),
        "tau_interval": (float(lo[j]), float(hi[j])),
        "mu_median": q_mu(0.5),
        "mu_mean": float((wm * p_mu * mus).sum() / (wm * p_mu).sum()),
        "mu_interval": (q_mu(a), q_mu(1.0 - a)),
    }


def log_half_normal(scale):
    return lambda t: stats.halfnorm.logpdf(t, scale=scale)


def log_uniform(upper):
    return lambda t: np.where(t <= upper, -math.log(upper), -np.inf)


def log_half_cauchy(scale):
    return lambda t: stats.halfcauchy.logpdf(t, scale=scale)
