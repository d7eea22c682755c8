"""Monte-Carlo harness for coverage, bias and interval-length studies.

Two generators are provided:

* normal: standard errors drawn Brockwell-Gordon style, study effects
  ``theta_j ~ N(mu, tau^2)`` and estimates ``y_j ~ N(theta_j, s_j^2)``;
* binomial: correlated arm log-odds per study, binomial event counts and
  log odds ratios (continuity-corrected where needed).

Each replication uses its own counter-based streams (see :mod:`fewmeta.rng`),
so metrics are identical for any number of worker processes.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import expit

from . import rng
from .bayes import DEFAULT_BAYES, BayesConfig, posterior_mu, posterior_tau
from .effects import TwoByTwoTable, dataset_from_tables
from .heterogeneity import DEFAULT_CONFIG, EstimatorConfig, estimate_tau, i_squared
from .methods import MethodSpec, parse_methods
from .model import ConvergenceError, Dataset, MetaAnalysisError
from .pooling import ci_knapp_hartung, ci_normal, pooled_estimate

# s_j^2 = 0.25 * chi2_1, kept only inside [0.009, 0.6]
BG_SCALE = 0.25
BG_LOWER = 0.009
BG_UPPER = 0.6

PAPER_K = (3, 5, 10)
PAPER_TAU2 = (0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0)

THREADS_ENV = "FEWMETA_THREADS"

# Estimators that can return exactly zero; BM and posterior medians cannot.
ZERO_CAPABLE = ("DL", "REML", "ML", "MP")


@dataclass(frozen=True)
class NormalScenario:
    k: int
    tau2: float
    n_reps: int = 10_000
    mu_true: float = 0.0
    seed: int = 20151001

    def __post_init__(self):
        if self.k < 2:
            raise MetaAnalysisError("k must be >= 2")
        if self.tau2 < 0:
            raise MetaAnalysisError("tau2 must be >= 0")
        if self.n_reps < 1:
            raise MetaAnalysisError("n_reps must be >= 1")

    @property
    def tau_true(self) -> float:
        return math.sqrt(self.tau2)

    @property
    def target(self) -> float:
        return self.mu_true

    @property
    def label(self) -> str:
        return f"normal:k={self.k}:tau2={self.tau2:g}"

    def key(self) -> int:
        # n_reps and seed are excluded: a shorter run is a prefix of a longer one.
        return rng.fingerprint("normal", self.k, float(self.tau2), float(self.mu_true))


@dataclass(frozen=True)
class BinomialScenario:
    arm_means: tuple[float, float]
    arm_var: float
    rho: float
    patient_counts: tuple[tuple[int, int], ...]
    n_reps: int = 10_000
    seed: int = 20151001
    name: str = "binomial"

    def __post_init__(self):
        object.__setattr__(self, "arm_means", tuple(float(m) for m in self.arm_means))
        object.__setattr__(self, "patient_counts",
                           tuple((int(a), int(b)) for a, b in self.patient_counts))
        if len(self.arm_means) != 2:
            raise MetaAnalysisError("arm_means needs (control, treatment)")
        if not abs(self.rho) < 1:
            raise MetaAnalysisError("rho must satisfy |rho| < 1")
        if not self.arm_var > 0:
            raise MetaAnalysisError("arm_var must be > 0")
        if len(self.patient_counts) < 2:
            raise MetaAnalysisError("need at least two studies")
        if any(n_t < 1 or n_c < 1 for n_t, n_c in self.patient_counts):
            raise MetaAnalysisError("patient counts must be >= 1")
        if self.n_reps < 1:
            raise MetaAnalysisError("n_reps must be >= 1")

    @property
    def k(self) -> int:
        return len(self.patient_counts)

    @property
    def tau_true(self) -> float:
        """Implied SD of the true log odds ratios, ``sqrt(2 var (1 - rho))``."""
        return math.sqrt(2.0 * self.arm_var * (1.0 - self.rho))

    @property
    def target(self) -> float:
        return self.arm_means[1] - self.arm_means[0]

    @property
    def label(self) -> str:
        return f"{self.name}:k={self.k}:tau={self.tau_true:.4g}"

    def key(self) -> int:
        return rng.fingerprint("binomial", self.arm_means, float(self.arm_var),
                               float(self.rho), self.patient_counts)


Scenario = Union[NormalScenario, BinomialScenario]

# Per-study (n_treatment, n_control). These are stand-ins, NOT the published
# trial sizes: totals lie in 30..108 and allocation ratios in 1:1..3:1.
STANDIN_AR_COUNTS = ((61, 47), (28, 32), (18, 12), (54, 54), (36, 36), (50, 17))
STANDIN_SRR_COUNTS = ((61, 47), (54, 54), (50, 17))


def case_scenario(arm: str, n_reps: int = 10_000, seed: int = 20151001,
                  patient_counts: Optional[Sequence[tuple[int, int]]] = None) -> BinomialScenario:
    """Acute rejection (``ar``) or steroid-resistant rejection (``srr``) setting."""
    arm = arm.lower()
    if arm == "ar":
        return BinomialScenario((0.0, -1.5), 1.0, 0.875,
                                tuple(patient_counts or STANDIN_AR_COUNTS), n_reps, seed, "AR")
    if arm == "srr":
        return BinomialScenario((-2.0, -3.0), 1.0, 0.719,
                                tuple(patient_counts or STANDIN_SRR_COUNTS), n_reps, seed, "SRR")
    raise MetaAnalysisError(f"unknown case {arm!r} (expected 'ar' or 'srr')")


def draw_standard_errors(k: int, gen: np.random.Generator) -> np.ndarray:
    """Standard errors with ``s^2 = 0.25 chi2_1`` truncated to [0.009, 0.6] by rejection."""
    if k < 1:
        raise MetaAnalysisError("k must be >= 1")
    out = np.empty(0)
    while out.shape[0] < k:
        s2 = BG_SCALE * gen.chisquare(1.0, size=2 * k + 4)
        s2 = s2[(s2 >= BG_LOWER) & (s2 <= BG_UPPER)]
        out = np.concatenate((out, s2))
    return np.sqrt(out[:k])


def _normal_arrays(scenario: NormalScenario, rep_index: int):
    key = scenario.key()
    se = draw_standard_errors(scenario.k,
                              rng.stream(scenario.seed, key, rep_index, rng.ROLE_STANDARD_ERRORS))
    if scenario.tau2 > 0:
        eff = rng.stream(scenario.seed, key, rep_index, rng.ROLE_EFFECTS)
        theta = scenario.mu_true + math.sqrt(scenario.tau2) * eff.standard_normal(scenario.k)
    else:
        theta = np.full(scenario.k, scenario.mu_true)
    noise = rng.stream(scenario.seed, key, rep_index, rng.ROLE_SAMPLING)
    y = theta + se * noise.standard_normal(scenario.k)
    return theta, y, se


def simulate_normal_replication(scenario: NormalScenario, rep_index: int) -> Dataset:
    _, y, se = _normal_arrays(scenario, rep_index)
    return Dataset.from_arrays(y, se)


def draw_arm_logodds(scenario: BinomialScenario, gen: np.random.Generator,
                     size: int) -> np.ndarray:
    """``size`` x 2 array of (control, treatment) log-odds."""
    z = gen.standard_normal((size, 2))
    sd = math.sqrt(scenario.arm_var)
    rho = scenario.rho
    lam_c = scenario.arm_means[0] + sd * z[:, 0]
    lam_t = scenario.arm_means[1] + sd * (rho * z[:, 0] + math.sqrt(1.0 - rho * rho) * z[:, 1])
    return np.column_stack((lam_c, lam_t))


def simulate_binomial_tables(scenario: BinomialScenario, rep_index: int) -> list[TwoByTwoTable]:
    key = scenario.key()
    lam = draw_arm_logodds(scenario,
                           rng.stream(scenario.seed, key, rep_index, rng.ROLE_ARM_LOGODDS),
                           scenario.k)
    counts = rng.stream(scenario.seed, key, rep_index, rng.ROLE_COUNTS)
    n_t = np.array([c[0] for c in scenario.patient_counts])
    n_c = np.array([c[1] for c in scenario.patient_counts])
    r_c = counts.binomial(n_c, expit(lam[:, 0]))
    r_t = counts.binomial(n_t, expit(lam[:, 1]))
    return [TwoByTwoTable(int(a), int(b), int(c), int(d))
            for a, b, c, d in zip(r_t, n_t, r_c, n_c)]


def simulate_binomial_replication(scenario: BinomialScenario, rep_index: int) -> Dataset:
    tables = simulate_binomial_tables(scenario, rep_index)
    return dataset_from_tables([(str(i + 1), t) for i, t in enumerate(tables)])


def population_i_squared(tau2: float, se) -> float:
    """``tau^2 / (tau^2 + mean s_j^2)`` at the true heterogeneity of a replication."""
    s2_bar = float(np.mean(np.square(se)))
    if tau2 <= 0.0:
        return 0.0
    return tau2 / (tau2 + s2_bar)


def simulate_replication(scenario: Scenario, rep_index: int) -> Dataset:
    if isinstance(scenario, NormalScenario):
        return simulate_normal_replication(scenario, rep_index)
    return simulate_binomial_replication(scenario, rep_index)


@dataclass(frozen=True)
class CampaignConfig:
    level: float = 0.95
    estimator: EstimatorConfig = DEFAULT_CONFIG
    bayes: BayesConfig = DEFAULT_BAYES
    threads: Optional[int] = None
    failure_budget: float = 0.01
    chunk_size: int = 250


@dataclass(frozen=True)
class SimulationMetrics:
    scenario: str
    method: str
    n_reps: int
    tau_bias: float
    tau_rmse: float
    zero_prop: float
    mu_rmse: float
    coverage: float
    mean_len: float
    median_i2: float
    failures: int

    CSV_HEADER = ("scenario,method,n_reps,tau_bias,tau_rmse,zero_prop,mu_rmse,"
                  "coverage,mean_len,median_i2,failures")

    def csv_row(self) -> str:
        vals = [self.scenario, self.method, str(self.n_reps)]
        vals += [repr(float(v)) for v in (self.tau_bias, self.tau_rmse, self.zero_prop,
                                          self.mu_rmse, self.coverage, self.mean_len,
                                          self.median_i2)]
        vals.append(str(self.failures))
        return ",".join(vals)


@dataclass
class ScenarioResult:
    """Per-replication draws for one scenario: arrays indexed [method, rep].

    ``i2`` is the population I^2 at the true tau (the ``median_i2`` metric);
    ``i2_higgins`` is the Q-based estimate from each simulated dataset.
    """

    scenario: Scenario
    methods: list[MethodSpec]
    tau_hat: np.ndarray
    mu_hat: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    failed: np.ndarray
    i2: np.ndarray
    i2_higgins: np.ndarray
    metrics: list[SimulationMetrics] = field(default_factory=list)


class FailureBudgetExceeded(MetaAnalysisError):
    def __init__(self, message: str, metrics: list[SimulationMetrics]):
        super().__init__(message)
        self.metrics = metrics


def _evaluate(dataset: Dataset, methods: Sequence[MethodSpec], cfg: CampaignConfig, out, col):
    tau_hat, mu_hat, lower, upper, failed = out
    taus: dict[str, Optional[float]] = {}
    for m, spec in enumerate(methods):
        try:
            if spec.is_bayes:
                tp = posterior_tau(dataset, spec.prior, cfg.bayes)
                mp = posterior_mu(dataset, tp)
                iv = mp.interval(cfg.level)
                tau_hat[m, col] = tp.median()
                mu_hat[m, col] = mp.median()
            else:
                key = spec.estimator_key
                if key not in taus:
                    try:
                        taus[key] = estimate_tau(dataset, key, cfg.estimator).tau
                    except ConvergenceError:
                        taus[key] = None
                tau = taus[key]
                if tau is None:
                    raise ConvergenceError(f"{key} failed")
                if spec.interval == "NORM":
                    pooled = pooled_estimate(dataset, tau)
                    iv = ci_normal(pooled, cfg.level)
                    mu_hat[m, col] = pooled.mu_hat
                else:
                    iv, _ = ci_knapp_hartung(dataset, tau, cfg.level,
                                             modified=spec.interval == "KH-MOD")
                    mu_hat[m, col] = 0.5 * (iv.lower + iv.upper)
                tau_hat[m, col] = tau
            lower[m, col] = iv.lower
            upper[m, col] = iv.upper
        except (ConvergenceError, FloatingPointError, ValueError):
            failed[m, col] = True


def _run_chunk(scenario: Scenario, methods: Sequence[MethodSpec], cfg: CampaignConfig,
               start: int, stop: int):
    n = stop - start
    nm = len(methods)
    tau_hat = np.full((nm, n), np.nan)
    mu_hat = np.full((nm, n), np.nan)
    lower = np.full((nm, n), np.nan)
    upper = np.full((nm, n), np.nan)
    failed = np.zeros((nm, n), dtype=bool)
    i2 = np.full(n, np.nan)
    i2_q = np.full(n, np.nan)
    tau2_true = scenario.tau_true ** 2
    for col, rep in enumerate(range(start, stop)):
        try:
            dataset = simulate_replication(scenario, rep)
        except MetaAnalysisError:
            failed[:, col] = True
            continue
        i2[col] = population_i_squared(tau2_true, dataset.se)
        i2_q[col] = i_squared(dataset)
        _evaluate(dataset, methods, cfg, (tau_hat, mu_hat, lower, upper, failed), col)
    return start, tau_hat, mu_hat, lower, upper, failed, i2, i2_q


def resolve_threads(threads: Optional[int]) -> int:
    if threads is None:
        env = os.environ.get(THREADS_ENV, "").strip()
        threads = int(env) if env else 1
    return max(1, int(threads))


def aggregate(result: ScenarioResult) -> list[SimulationMetrics]:
    sc = result.scenario
    tau_true = sc.tau_true
    target = sc.target
    valid_i2 = result.i2[np.isfinite(result.i2)]
    median_i2 = float(np.median(valid_i2)) if valid_i2.size else math.nan
    rows = []
    for m, spec in enumerate(result.methods):
        ok = ~result.failed[m]
        t = result.tau_hat[m, ok]
        mu = result.mu_hat[m, ok]
        lo = result.lower[m, ok]
        hi = result.upper[m, ok]
        nan_if_empty = lambda f: float(f()) if t.size else math.nan
        rows.append(SimulationMetrics(
            scenario=sc.label,
            method=spec.label,
            n_reps=sc.n_reps,
            tau_bias=nan_if_empty(lambda: t.mean() - tau_true),
            tau_rmse=nan_if_empty(lambda: math.sqrt(((t - tau_true) ** 2).mean())),
            zero_prop=(nan_if_empty(lambda: (t == 0.0).mean())
                       if spec.estimator_key in ZERO_CAPABLE else math.nan),
            mu_rmse=nan_if_empty(lambda: math.sqrt(((mu - target) ** 2).mean())),
            coverage=nan_if_empty(lambda: ((lo <= target) & (target <= hi)).mean()),
            mean_len=nan_if_empty(lambda: (hi - lo).mean()),
            median_i2=median_i2,
            failures=int((~ok).sum()),
        ))
    return rows


def run_scenario(scenario: Scenario, methods, cfg: CampaignConfig = CampaignConfig()) -> ScenarioResult:
    specs = parse_methods(methods) if not _is_specs(methods) else list(methods)
    if not specs:
        raise MetaAnalysisError("no methods requested")
    n = scenario.n_reps
    bounds = [(s, min(s + cfg.chunk_size, n)) for s in range(0, n, cfg.chunk_size)]
    threads = resolve_threads(cfg.threads)
    if threads == 1 or len(bounds) == 1:
        parts = [_run_chunk(scenario, specs, cfg, a, b) for a, b in bounds]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_run_chunk, scenario, specs, cfg, a, b) for a, b in bounds]
            parts = [f.result() for f in futures]
    nm = len(specs)
    arrays = [np.full((nm, n), np.nan) for _ in range(4)]
    failed = np.zeros((nm, n), dtype=bool)
    i2 = np.full(n, np.nan)
    i2_q = np.full(n, np.nan)
    for start, t, mu, lo, hi, fl, ii, iq in parts:
        stop = start + ii.shape[0]
        for dst, src in zip(arrays, (t, mu, lo, hi)):
            dst[:, start:stop] = src
        failed[:, start:stop] = fl
        i2[start:stop] = ii
        i2_q[start:stop] = iq
    result = ScenarioResult(scenario, specs, *arrays, failed, i2, i2_q)
    result.metrics = aggregate(result)
    return result


def _is_specs(methods) -> bool:
    return not isinstance(methods, str) and all(isinstance(m, MethodSpec) for m in methods)


def run_campaign(scenarios: Sequence[Scenario], methods,
                 cfg: CampaignConfig = CampaignConfig()) -> list[SimulationMetrics]:
    """Run every scenario with every method and return one metrics row per pair.

    Raises :class:`FailureBudgetExceeded` (carrying the rows computed so far)
    as soon as a method fails on more than ``cfg.failure_budget`` of a
    scenario's replications.
    """
    if not scenarios:
        raise MetaAnalysisError("no scenarios given")
    specs = parse_methods(methods) if not _is_specs(methods) else list(methods)
    rows: list[SimulationMetrics] = []
    for sc in scenarios:
        res = run_scenario(sc, specs, cfg)
        rows.extend(res.metrics)
        over = [r for r in res.metrics if r.failures > cfg.failure_budget * r.n_reps]
        if over:
            names = ", ".join(f"{r.method} ({r.failures})" for r in over)
            raise FailureBudgetExceeded(f"{sc.label}: failure budget exceeded by {names}", rows)
    return rows


def write_metrics_csv(rows: Sequence[SimulationMetrics], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(SimulationMetrics.CSV_HEADER + "\n")
        for r in rows:
            fh.write(r.csv_row() + "\n")
