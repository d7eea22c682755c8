"""Inverse-variance pooling and confidence intervals for the overall effect."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri, stdtrit

from .model import Dataset, IntervalEstimate, MetaAnalysisError, PooledResult, require_pooled


@dataclass(frozen=True)
class KnappHartungStats:
    q: float
    q_star: float
    df: int


def weights(dataset: Dataset, tau: float) -> np.ndarray:
    if tau < 0:
        raise MetaAnalysisError("tau must be >= 0")
    return 1.0 / (dataset.s2 + tau * tau)


def pooled_estimate(dataset: Dataset, tau: float) -> PooledResult:
    w = weights(dataset, tau)
    wsum = w.sum()
    mu = float((w * dataset.y).sum() / wsum)
    return PooledResult(mu, math.sqrt(1.0 / wsum), tuple(w.tolist()), float(tau))


def _check_level(level: float) -> None:
    if not 0 < level < 1:
        raise MetaAnalysisError(f"level must lie in (0, 1), got {level}")


def normal_quantile(p: float) -> float:
    return float(ndtri(p))


def t_quantile(df: float, p: float) -> float:
    return float(stdtrit(df, p))


def ci_normal(pooled: PooledResult, level: float = 0.95) -> IntervalEstimate:
    _check_level(level)
    half = normal_quantile(0.5 + level / 2.0) * pooled.se_mu
    return IntervalEstimate(pooled.mu_hat - half, pooled.mu_hat + half, level, "NORM")


def ci_knapp_hartung(dataset: Dataset, tau: float, level: float = 0.95,
                     modified: bool = True) -> tuple[IntervalEstimate, KnappHartungStats]:
    """Knapp-Hartung interval; ``modified`` floors the variance factor q at 1."""
    require_pooled(dataset, "Knapp-Hartung interval")
    _check_level(level)
    pooled = pooled_estimate(dataset, tau)
    w = np.asarray(pooled.weights)
    df = dataset.k - 1
    r = dataset.y - pooled.mu_hat
    q = float((w * r * r).sum()) / df
    q_star = max(1.0, q)
    factor = q_star if modified else q
    half = t_quantile(df, 0.5 + level / 2.0) * math.sqrt(factor) * pooled.se_mu
    interval = IntervalEstimate(pooled.mu_hat - half, pooled.mu_hat + half, level,
                                "KH-MOD" if modified else "KH")
    return interval, KnappHartungStats(q, q_star, df)
