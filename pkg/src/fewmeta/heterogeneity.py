"""Between-study heterogeneity: point estimators, Q-profile interval and I^2.

All estimators work on the tau scale (not tau^2). DL and MP are moment
estimators; ML, REML and BM maximize a (penalized) profile likelihood with a
bracketed golden-section search. Boundary solutions are returned as exact
zeros so that the proportion of zero estimates can be counted without a
tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.special import chdtri

from . import _kernels
from .model import ConvergenceError, Dataset, HeterogeneityEstimate, MetaAnalysisError, require_pooled


@dataclass(frozen=True)
class EstimatorConfig:
    tau_max: float = 10.0
    abs_tol: float = 1e-8
    bm_shape: float = 2.0
    bm_rate: float = 0.0
    bm_likelihood: str = "ML"

    def __post_init__(self):
        if not self.tau_max > 0:
            raise MetaAnalysisError("tau_max must be > 0")
        if not self.abs_tol > 0:
            raise MetaAnalysisError("abs_tol must be > 0")
        if not self.bm_shape > 1:
            raise MetaAnalysisError("bm_shape must exceed 1")
        if self.bm_rate < 0:
            raise MetaAnalysisError("bm_rate must be >= 0")
        if self.bm_likelihood not in ("ML", "REML"):
            raise MetaAnalysisError("bm_likelihood must be 'ML' or 'REML'")

    @property
    def bm_kind(self) -> int:
        return _kernels.ML if self.bm_likelihood == "ML" else _kernels.REML


DEFAULT_CONFIG = EstimatorConfig()


def generalized_q(dataset: Dataset, tau: float) -> float:
    """Weighted sum of squares ``sum w_j (y_j - mu_hat)^2`` with ``w_j = 1/(s_j^2 + tau^2)``."""
    require_pooled(dataset, "generalized Q")
    if tau < 0:
        raise MetaAnalysisError("tau must be >= 0")
    return _kernels.q_stat(dataset.y, dataset.s2, float(tau))[0]


def tau_dl(dataset: Dataset) -> HeterogeneityEstimate:
    require_pooled(dataset, "DerSimonian-Laird")
    u = 1.0 / dataset.s2
    q0 = _kernels.q_stat(dataset.y, dataset.s2, 0.0)[0]
    denom = u.sum() - (u * u).sum() / u.sum()
    excess = q0 - (dataset.k - 1)
    tau2 = excess / denom if excess > 0 else 0.0
    return HeterogeneityEstimate(math.sqrt(tau2), "DL")


def restricted_loglik(dataset: Dataset, tau: float) -> float:
    """Restricted log-likelihood of tau, up to an additive constant."""
    return _kernels.objective(dataset.y, dataset.s2, float(tau), _kernels.REML, 1.0, 0.0)


def profile_loglik(dataset: Dataset, tau: float) -> float:
    """Marginal log-likelihood with mu profiled out, up to an additive constant."""
    return _kernels.objective(dataset.y, dataset.s2, float(tau), _kernels.ML, 1.0, 0.0)


def bm_objective(dataset: Dataset, tau: float, cfg: EstimatorConfig = DEFAULT_CONFIG) -> float:
    """Penalized log-likelihood maximized by :func:`tau_bm`."""
    return _kernels.objective(dataset.y, dataset.s2, float(tau), cfg.bm_kind,
                              cfg.bm_shape, cfg.bm_rate)


def _maximize(dataset, kind, shape, rate, cfg, label):
    tau, status = _kernels.maximize_tau(dataset.y, dataset.s2, kind, shape, rate,
                                        cfg.tau_max, cfg.abs_tol)
    if status == _kernels.STATUS_UPPER_BOUND:
        raise ConvergenceError(
            f"{label}: maximum lies at tau_max={cfg.tau_max}; increase tau_max", best=tau)
    if status != _kernels.STATUS_OK:
        raise ConvergenceError(f"{label}: optimizer did not converge", best=tau)
    return HeterogeneityEstimate(tau, label)


def tau_reml(dataset: Dataset, cfg: EstimatorConfig = DEFAULT_CONFIG) -> HeterogeneityEstimate:
    require_pooled(dataset, "REML")
    return _maximize(dataset, _kernels.REML, 1.0, 0.0, cfg, "REML")


def tau_ml(dataset: Dataset, cfg: EstimatorConfig = DEFAULT_CONFIG) -> HeterogeneityEstimate:
    require_pooled(dataset, "ML")
    return _maximize(dataset, _kernels.ML, 1.0, 0.0, cfg, "ML")


def tau_bm(dataset: Dataset, cfg: EstimatorConfig = DEFAULT_CONFIG) -> HeterogeneityEstimate:
    """Bayes-modal estimate: profile log-likelihood plus a Gamma(shape, rate)
    log-density on tau (``cfg.bm_likelihood`` switches the base to REML).

    With ``shape > 1`` the penalty is ``-inf`` at zero, so the estimate is
    strictly positive.
    """
    require_pooled(dataset, "Bayes-modal")
    return _maximize(dataset, cfg.bm_kind, cfg.bm_shape, cfg.bm_rate, cfg, "BM")


def _q_root(dataset: Dataset, target: float, cfg: EstimatorConfig, what: str) -> float:
    """Smallest tau with Q(tau) <= target (0 if Q(0) <= target)."""
    y, s2 = dataset.y, dataset.s2
    if _kernels.q_stat(y, s2, 0.0)[0] <= target:
        return 0.0
    if _kernels.q_stat(y, s2, cfg.tau_max)[0] > target:
        raise ConvergenceError(
            f"{what}: root of Q(tau) = {target:.6g} lies beyond tau_max={cfg.tau_max}; "
            "increase tau_max", best=cfg.tau_max)
    tol = min(cfg.abs_tol, 1e-12 * max(1.0, cfg.tau_max))
    return _kernels.solve_q(y, s2, target, 0.0, cfg.tau_max, tol)


def tau_mp(dataset: Dataset, cfg: EstimatorConfig = DEFAULT_CONFIG) -> HeterogeneityEstimate:
    """Mandel-Paule: solve Q(tau) = k - 1, or 0 when Q(0) <= k - 1."""
    require_pooled(dataset, "Mandel-Paule")
    return HeterogeneityEstimate(_q_root(dataset, dataset.k - 1.0, cfg, "MP"), "MP")


def tau_q_profile_ci(dataset: Dataset, level: float = 0.95,
                     cfg: EstimatorConfig = DEFAULT_CONFIG,
                     open_upper: bool = False) -> tuple[float, float]:
    """Q-profile confidence interval for tau.

    The lower bound solves ``Q(tau) = chi2_{k-1}(1 - alpha/2)``, the upper
    bound ``Q(tau) = chi2_{k-1}(alpha/2)``; bounds without a nonnegative
    solution are 0. A bound beyond ``cfg.tau_max`` raises
    :class:`ConvergenceError`, or becomes ``inf`` when ``open_upper`` is set.
    """
    require_pooled(dataset, "Q-profile interval")
    if not 0 < level < 1:
        raise MetaAnalysisError("level must lie in (0, 1)")
    alpha = 1.0 - level
    df = dataset.k - 1
    # chdtri gives upper-tail quantiles.
    q_hi = chdtri(df, alpha / 2.0)
    q_lo = chdtri(df, 1.0 - alpha / 2.0)
    bounds = []
    for target, what in ((q_hi, "Q-profile lower bound"), (q_lo, "Q-profile upper bound")):
        try:
            bounds.append(_q_root(dataset, target, cfg, what))
        except ConvergenceError:
            if not open_upper:
                raise
            bounds.append(math.inf)
    return bounds[0], bounds[1]


def i_squared(dataset: Dataset) -> float:
    require_pooled(dataset, "I^2")
    q0 = _kernels.q_stat(dataset.y, dataset.s2, 0.0)[0]
    if q0 <= 0.0:
        return 0.0
    return max(0.0, (q0 - (dataset.k - 1)) / q0)


ESTIMATORS = {
    "DL": lambda d, cfg: tau_dl(d),
    "REML": tau_reml,
    "ML": tau_ml,
    "MP": tau_mp,
    "BM": tau_bm,
}
# Paule-Mandel coincides with the empirical-Bayes estimator in this model.
ALIASES = {"EB": "MP", "PM": "MP"}


def estimate_tau(dataset: Dataset, method: str,
                 cfg: EstimatorConfig = DEFAULT_CONFIG) -> HeterogeneityEstimate:
    key = ALIASES.get(method.upper(), method.upper())
    try:
        fn = ESTIMATORS[key]
    except KeyError:
        raise MetaAnalysisError(f"unknown heterogeneity estimator {method!r}") from None
    return fn(dataset, cfg)
