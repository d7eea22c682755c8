"""Bayesian random-effects meta-analysis without MCMC.

The overall effect ``mu`` gets a flat prior and is integrated out
analytically, which leaves a one-dimensional posterior for ``tau``. That
posterior is tabulated on a uniform grid, refined by doubling until the
normalizing constant settles, and the posterior of ``mu`` is the resulting
mixture of conditional normals ``N(mu_hat(tau), 1/w_plus(tau))``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtri, stdtr, stdtrit

from . import _kernels
from .model import ConvergenceError, Dataset, IntervalEstimate, MetaAnalysisError, require_pooled

HALF_NORMAL = "HALF-NORMAL"
HALF_CAUCHY = "HALF-CAUCHY"
HALF_T = "HALF-T"
UNIFORM = "UNIFORM"
POINT = "POINT"

_LOG_SQRT_2_OVER_PI = 0.5 * math.log(2.0 / math.pi)


@dataclass(frozen=True)
class PriorSpec:
    """Prior on tau. ``params`` holds the family's named parameters in order:

    ``HALF-NORMAL``: (scale,); ``HALF-CAUCHY``: (scale,); ``HALF-T``: (df, scale);
    ``UNIFORM``: (upper,) for U(0, upper); ``POINT``: (tau0,) for a point mass.
    """

    family: str
    params: tuple[float, ...]

    def __post_init__(self):
        fam = self.family.upper()
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        expected = {HALF_NORMAL: 1, HALF_CAUCHY: 1, HALF_T: 2, UNIFORM: 1, POINT: 1}
        if fam not in expected:
            raise MetaAnalysisError(f"unknown prior family {self.family!r}")
        if len(self.params) != expected[fam]:
            raise MetaAnalysisError(f"{fam} takes {expected[fam]} parameter(s)")
        if fam == POINT:
            if not self.params[0] >= 0:
                raise MetaAnalysisError("point mass location must be >= 0")
        elif not all(p > 0 and math.isfinite(p) for p in self.params):
            raise MetaAnalysisError(f"{fam} parameters must be positive and finite")
        if fam == HALF_T and self.params[0] < 1:
            raise MetaAnalysisError("half-t degrees of freedom must be >= 1")

    @classmethod
    def half_normal(cls, scale: float) -> "PriorSpec":
        return cls(HALF_NORMAL, (scale,))

    @classmethod
    def half_cauchy(cls, scale: float) -> "PriorSpec":
        return cls(HALF_CAUCHY, (scale,))

    @classmethod
    def half_t(cls, df: float, scale: float) -> "PriorSpec":
        return cls(HALF_T, (df, scale))

    @classmethod
    def uniform(cls, upper: float) -> "PriorSpec":
        return cls(UNIFORM, (upper,))

    @classmethod
    def point_mass(cls, tau0: float) -> "PriorSpec":
        return cls(POINT, (tau0,))

    @property
    def label(self) -> str:
        p = [_fmt(x) for x in self.params]
        if self.family == UNIFORM:
            return f"Uniform(0,{self.params[0]:g})"
        return {
            HALF_NORMAL: "half-Normal({})",
            HALF_CAUCHY: "half-Cauchy({})",
            HALF_T: "half-t({},{})",
            POINT: "Point({})",
        }[self.family].format(*p)

    @classmethod
    def parse(cls, text: str) -> "PriorSpec":
        """Parse labels such as ``half-Normal(0.5)``, ``HN(1)``, ``Uniform(0,4)``."""
        m = re.fullmatch(r"\s*([A-Za-z\-]+)\s*\(([^)]*)\)\s*", text)
        if not m:
            raise MetaAnalysisError(f"cannot parse prior {text!r}")
        name = m.group(1).lower().replace("_", "-")
        try:
            args = [float(a) for a in m.group(2).split(",") if a.strip()]
        except ValueError:
            raise MetaAnalysisError(f"cannot parse prior {text!r}") from None
        try:
            return cls._from_name(name, args)
        except TypeError:
            raise MetaAnalysisError(f"wrong number of parameters in prior {text!r}") from None

    @classmethod
    def _from_name(cls, name: str, args: list[float]) -> "PriorSpec":
        if name in ("half-normal", "hn", "halfnormal"):
            return cls.half_normal(*args)
        if name in ("half-cauchy", "hc", "halfcauchy"):
            return cls.half_cauchy(*args)
        if name in ("half-t", "ht", "halft"):
            return cls.half_t(*args)
        if name in ("uniform", "u", "unif"):
            if len(args) == 2:
                if args[0] != 0:
                    raise MetaAnalysisError("uniform priors must start at 0")
                args = args[1:]
            return cls.uniform(*args)
        if name in ("point", "pointmass", "point-mass"):
            return cls.point_mass(*args)
        raise MetaAnalysisError(f"unknown prior family {name!r}")


def _fmt(x: float) -> str:
    if float(x).is_integer() and abs(x) < 1e6:
        return f"{x:.1f}" if x < 10 else f"{int(x)}"
    return f"{x:g}"


def _log_prior_and_slope(spec: PriorSpec, tau: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Log density and its derivative in tau, for tau inside the support."""
    fam = spec.family
    if fam == HALF_NORMAL:
        (s,) = spec.params
        return _LOG_SQRT_2_OVER_PI - math.log(s) - 0.5 * (tau / s) ** 2, -tau / (s * s)
    if fam == HALF_CAUCHY:
        (s,) = spec.params
        return (math.log(2.0 / (math.pi * s)) - np.log1p((tau / s) ** 2),
                -2.0 * tau / (s * s + tau * tau))
    if fam == HALF_T:
        nu, s = spec.params
        const = (math.lgamma((nu + 1) / 2) - math.lgamma(nu / 2)
                 - 0.5 * math.log(nu * math.pi) + math.log(2.0 / s))
        return (const - 0.5 * (nu + 1) * np.log1p((tau / s) ** 2 / nu),
                -(nu + 1) * tau / (nu * s * s + tau * tau))
    if fam == UNIFORM:
        (c,) = spec.params
        return np.full_like(tau, -math.log(c)), np.zeros_like(tau)
    raise MetaAnalysisError(f"{fam} has no density")


def prior_density(spec: PriorSpec, tau: float) -> float:
    if tau < 0:
        raise MetaAnalysisError("tau must be >= 0")
    if spec.family == POINT:
        raise MetaAnalysisError("a point mass has no density")
    if spec.family == UNIFORM and tau > spec.params[0]:
        return 0.0
    lp, _ = _log_prior_and_slope(spec, np.array([float(tau)]))
    return float(np.exp(lp[0]))


def prior_quantile(spec: PriorSpec, p: float) -> float:
    if not 0 < p < 1:
        raise MetaAnalysisError("p must lie in (0, 1)")
    fam = spec.family
    if fam == HALF_NORMAL:
        return spec.params[0] * float(ndtri(0.5 + p / 2.0))
    if fam == HALF_CAUCHY:
        return spec.params[0] * math.tan(math.pi * p / 2.0)
    if fam == HALF_T:
        nu, s = spec.params
        return s * float(stdtrit(nu, 0.5 + p / 2.0))
    if fam == UNIFORM:
        return spec.params[0] * p
    return spec.params[0]


def prior_cdf(spec: PriorSpec, tau: float) -> float:
    if tau <= 0:
        return 0.0
    fam = spec.family
    if fam == HALF_NORMAL:
        return math.erf(tau / (spec.params[0] * math.sqrt(2.0)))
    if fam == HALF_CAUCHY:
        return 2.0 / math.pi * math.atan(tau / spec.params[0])
    if fam == HALF_T:
        nu, s = spec.params
        return 2.0 * float(stdtr(nu, tau / s)) - 1.0
    if fam == UNIFORM:
        return min(1.0, tau / spec.params[0])
    return 1.0 if tau >= spec.params[0] else 0.0


def across_trial_or_interval(tau: float, level: float = 0.95) -> tuple[float, float]:
    """Central interval of exp(theta) for theta ~ N(0, tau^2)."""
    if tau < 0:
        raise MetaAnalysisError("tau must be >= 0")
    if not 0 < level < 1:
        raise MetaAnalysisError("level must lie in (0, 1)")
    z = float(ndtri(0.5 + level / 2.0))
    return math.exp(-z * tau), math.exp(z * tau)


def tau_log_marginal(dataset: Dataset, tau: float) -> float:
    """Log of ``integral prod_j N(y_j; mu, s_j^2 + tau^2) dmu`` (exact, constants included)."""
    require_pooled(dataset, "marginal likelihood")
    if tau < 0:
        raise MetaAnalysisError("tau must be >= 0")
    logl, _, _, _ = _kernels.marginal_grid(dataset.y, dataset.s2, np.array([float(tau)]))
    return float(logl[0])


@dataclass(frozen=True)
class BayesConfig:
    tau_max: float = 10.0
    n_start: int = 201
    rtol: float = 1e-8
    max_nodes: int = 2 ** 17 + 1
    cut_quantile: float = 1.0 - 1e-12


DEFAULT_BAYES = BayesConfig()


@dataclass(frozen=True, eq=False)
class TauPosterior:
    """Tabulated posterior of tau.

    ``density`` is normalized so that its trapezoid integral over ``grid`` is
    one. ``normalizer`` is the end-corrected trapezoid mass of ``exp(log posterior - ref)``
    and ``log_normalizer`` the log of the unscaled mass. For a point-mass
    prior the grid has a single node.
    """

    grid: np.ndarray
    density: np.ndarray
    log_marginals: np.ndarray
    normalizer: float
    log_normalizer: float
    prior: PriorSpec
    slopes: np.ndarray = field(repr=False)
    mu_hat: np.ndarray = field(repr=False)
    w_plus: np.ndarray = field(repr=False)
    _cum: np.ndarray = field(repr=False)

    @property
    def is_point_mass(self) -> bool:
        return self.grid.shape[0] == 1

    def quadrature_weights(self) -> np.ndarray:
        """Trapezoid weights times density, summing to one."""
        if self.is_point_mass:
            return np.ones(1)
        h = np.diff(self.grid)
        q = np.zeros_like(self.grid)
        q[:-1] += 0.5 * h
        q[1:] += 0.5 * h
        wts = q * self.density
        return wts / wts.sum()

    def cdf(self, tau: float) -> float:
        if self.is_point_mass:
            return 1.0 if tau >= self.grid[0] else 0.0
        g = self.grid
        if tau <= g[0]:
            return 0.0
        if tau >= g[-1]:
            return 1.0
        i = min(int(np.searchsorted(g, tau, side="right")) - 1, g.shape[0] - 2)
        return (self._cum[i] + self._cell_integral(i, tau - g[i])) / self._cum[-1]

    def _cell_integral(self, i: int, u: float) -> float:
        g, f, d = self.grid, self.density, self.slopes
        h = g[i + 1] - g[i]
        s = u / h
        s2, s3, s4 = s * s, s * s * s, s * s * s * s
        return h * (f[i] * (0.5 * s4 - s3 + s)
                    + h * d[i] * (0.25 * s4 - 2.0 / 3.0 * s3 + 0.5 * s2)
                    + f[i + 1] * (-0.5 * s4 + s3)
                    + h * d[i + 1] * (0.25 * s4 - s3 / 3.0))

    def quantile(self, p: float) -> float:
        if not 0 <= p <= 1:
            raise MetaAnalysisError("p must lie in [0, 1]")
        if self.is_point_mass:
            return float(self.grid[0])
        g, cum = self.grid, self._cum
        target = p * cum[-1]
        if target <= 0:
            return float(g[0])
        if target >= cum[-1]:
            return float(g[-1])
        i = int(np.searchsorted(cum, target, side="left")) - 1
        i = min(max(i, 0), g.shape[0] - 2)
        rest = target - cum[i]
        h = g[i + 1] - g[i]
        fn = lambda u: self._cell_integral(i, u) - rest
        f0, f1 = fn(0.0), fn(h)
        if f0 >= 0:
            return float(g[i])
        if f1 <= 0:
            return float(g[i + 1])
        return float(brentq(fn, 0.0, h, xtol=1e-15, rtol=1e-15)) + float(g[i])

    def median(self) -> float:
        return self.quantile(0.5)

    def shortest_interval(self, level: float = 0.95) -> tuple[float, float]:
        """Shortest connected interval holding posterior mass ``level``.

        The lower tail mass ``u`` is scanned over [0, 1 - level] and the width
        ``Q(u + level) - Q(u)`` minimized by golden section around the best
        scan point. A density with its mode at zero yields ``(0, Q(level))``.
        """
        if not 0 < level < 1:
            raise MetaAnalysisError("level must lie in (0, 1)")
        if self.is_point_mass:
            t = float(self.grid[0])
            return t, t
        umax = 1.0 - level
        width = lambda u: self.quantile(u + level) - self.quantile(u)
        us = np.linspace(0.0, umax, 101)
        ws = np.array([width(u) for u in us])
        i = int(np.argmin(ws))
        a, b = us[max(i - 1, 0)], us[min(i + 1, len(us) - 1)]
        invphi = (math.sqrt(5.0) - 1.0) / 2.0
        c, d = b - invphi * (b - a), a + invphi * (b - a)
        fc, fd = width(c), width(d)
        while b - a > 1e-12:
            if fc <= fd:
                b, d, fd = d, c, fc
                c = b - invphi * (b - a)
                fc = width(c)
            else:
                a, c, fc = c, d, fd
                d = a + invphi * (b - a)
                fd = width(d)
        u, wu = (c, fc) if fc <= fd else (d, fd)
        for cand in (0.0, umax):
            if width(cand) <= wu:
                u, wu = cand, width(cand)
        lo = 0.0 if u == 0.0 else self.quantile(u)
        return lo, self.quantile(u + level)


def _tau_cut(prior: PriorSpec, cfg: BayesConfig) -> tuple[float, bool]:
    if prior.family == UNIFORM:
        natural = prior.params[0]
    else:
        natural = prior_quantile(prior, cfg.cut_quantile)
    if natural > cfg.tau_max:
        return cfg.tau_max, True
    return natural, False


def _point_mass_posterior(dataset: Dataset, prior: PriorSpec) -> TauPosterior:
    t = np.array([prior.params[0]])
    logl, dlogl, mu, wsum = _kernels.marginal_grid(dataset.y, dataset.s2, t)
    return TauPosterior(t, np.ones(1), logl, 1.0, float(logl[0]), prior,
                        np.zeros(1), mu, wsum, np.array([0.0, 1.0]))


def posterior_tau(dataset: Dataset, prior: PriorSpec,
                  cfg: BayesConfig = DEFAULT_BAYES) -> TauPosterior:
    """Tabulate ``p(tau | y)`` on [0, tau_cut].

    ``tau_cut`` is the prior's upper bound (uniform) or its ``cut_quantile``
    quantile, capped at ``cfg.tau_max``. The grid starts at ``cfg.n_start``
    nodes and doubles until the log normalizer changes by less than
    ``cfg.rtol``.
    """
    require_pooled(dataset, "Bayesian analysis")
    if prior.family == POINT:
        return _point_mass_posterior(dataset, prior)
    y, s2 = dataset.y, dataset.s2
    cut, truncated = _tau_cut(prior, cfg)

    def evaluate(taus):
        logl, dlogl, mu, wsum = _kernels.marginal_grid(y, s2, taus)
        lp, dlp = _log_prior_and_slope(prior, taus)
        return logl, lp + logl, dlp + dlogl, mu, wsum

    grid = np.linspace(0.0, cut, cfg.n_start)
    logl, lpost, slope, mu, wsum = evaluate(grid)
    ref = float(lpost.max())
    if not math.isfinite(ref):
        raise ConvergenceError("posterior density is not finite on the grid")
    h = grid[1] - grid[0]

    def log_mass(lp, dlp, h):
        # trapezoid plus the end-slope correction, matching the Hermite CDF
        f = np.exp(lp - ref)
        ends = h * h / 12.0 * (f[0] * dlp[0] - f[-1] * dlp[-1])
        return math.log(h * (f.sum() - 0.5 * (f[0] + f[-1])) + ends)

    log_z = log_mass(lpost, slope, h)
    converged = False
    while grid.shape[0] * 2 - 1 <= cfg.max_nodes:
        mid = 0.5 * (grid[:-1] + grid[1:])
        m_logl, m_lpost, m_slope, m_mu, m_wsum = evaluate(mid)
        n = grid.shape[0] * 2 - 1

        def interleave(a, b):
            out = np.empty(n)
            out[0::2] = a
            out[1::2] = b
            return out

        grid = interleave(grid, mid)
        logl = interleave(logl, m_logl)
        lpost = interleave(lpost, m_lpost)
        slope = interleave(slope, m_slope)
        mu = interleave(mu, m_mu)
        wsum = interleave(wsum, m_wsum)
        h *= 0.5
        new_log_z = log_mass(lpost, slope, h)
        change = abs(new_log_z - log_z)
        log_z = new_log_z
        if change < cfg.rtol:
            converged = True
            break
    if not converged:
        raise ConvergenceError("tau grid did not converge; posterior is too concentrated")
    if not math.isfinite(log_z):
        raise ConvergenceError("posterior normalizer underflowed")
    if truncated and slope[-1] > 0:
        raise ConvergenceError(
            f"posterior mass extends beyond tau_max={cfg.tau_max}; increase tau_max",
            best=float(grid[-1]))
    density = np.exp(lpost - ref - log_z)
    density /= h * (density.sum() - 0.5 * (density[0] + density[-1]))
    dens_slope = density * slope
    cells = 0.5 * h * (density[:-1] + density[1:]) + h * h / 12.0 * (dens_slope[:-1] - dens_slope[1:])
    cum = np.concatenate(([0.0], np.cumsum(cells)))
    return TauPosterior(grid, density, logl, math.exp(log_z), log_z + ref, prior,
                        dens_slope, mu, wsum, cum)


@dataclass(frozen=True, eq=False)
class MuPosterior:
    """Posterior of mu as a finite normal mixture."""

    means: np.ndarray
    sds: np.ndarray
    weights: np.ndarray

    def cdf(self, x: float) -> float:
        return _kernels.mixture_cdf(float(x), self.means, self.sds, self.weights)

    def pdf(self, x: float) -> float:
        return _kernels.mixture_pdf(float(x), self.means, self.sds, self.weights)

    def quantile(self, p: float) -> float:
        if not 0 < p < 1:
            raise MetaAnalysisError("p must lie in (0, 1)")
        return _kernels.mixture_quantile(float(p), self.means, self.sds, self.weights)

    def median(self) -> float:
        return self.quantile(0.5)

    def mean(self) -> float:
        return float((self.weights * self.means).sum())

    def interval(self, level: float = 0.95) -> IntervalEstimate:
        a = (1.0 - level) / 2.0
        return IntervalEstimate(self.quantile(a), self.quantile(1.0 - a), level, "BAYES")


def posterior_mu(dataset: Dataset, tau_post: TauPosterior, prune: float = 1e-15) -> MuPosterior:
    """Mixture over the tau grid of the conditional normals of mu."""
    wts = tau_post.quadrature_weights()
    keep = wts > prune * wts.max()
    wts = wts[keep]
    return MuPosterior(np.ascontiguousarray(tau_post.mu_hat[keep]),
                       np.ascontiguousarray(1.0 / np.sqrt(tau_post.w_plus[keep])),
                       np.ascontiguousarray(wts / wts.sum()))


@dataclass(frozen=True)
class PosteriorSummary:
    mu_median: float
    mu_mean: float
    mu_interval: IntervalEstimate
    tau_median: float
    tau_interval: tuple[float, float]
    level: float
    prior: PriorSpec


def summarize_posterior(dataset: Dataset, prior: PriorSpec, level: float = 0.95,
                        cfg: BayesConfig = DEFAULT_BAYES) -> PosteriorSummary:
    """Posterior medians plus a central mu interval and a shortest tau interval."""
    tp = posterior_tau(dataset, prior, cfg)
    mp = posterior_mu(dataset, tp)
    return PosteriorSummary(
        mu_median=mp.median(),
        mu_mean=mp.mean(),
        mu_interval=mp.interval(level),
        tau_median=tp.median(),
        tau_interval=tp.shortest_interval(level),
        level=level,
        prior=prior,
    )
