"""Random-effects meta-analysis for a handful of small studies.

Heterogeneity estimators (DL, REML, ML, MP, Bayes-modal), normal and
Knapp-Hartung intervals, grid-based Bayesian posteriors and a reproducible
Monte-Carlo harness. ``fewmeta._kernels.BACKEND`` reports whether the
compiled kernels are in use.
"""

import types as _types

from ._kernels import BACKEND
from .bayes import (BayesConfig, MuPosterior, PosteriorSummary, PriorSpec, TauPosterior,
                    across_trial_or_interval, posterior_mu, posterior_tau, prior_cdf,
                    prior_density, prior_quantile, summarize_posterior, tau_log_marginal)
from .effects import TwoByTwoTable, dataset_from_tables, log_odds_ratio
from .heterogeneity import (EstimatorConfig, estimate_tau, generalized_q, i_squared, tau_bm,
                            tau_dl, tau_ml, tau_mp, tau_q_profile_ci, tau_reml)
from .methods import MethodSpec, parse_method, parse_methods
from .model import (ConvergenceError, Dataset, DatasetError, HeterogeneityEstimate,
                    IntervalEstimate, MetaAnalysisError, PooledResult, StudyResult,
                    validate_dataset)
from .pooling import ci_knapp_hartung, ci_normal, pooled_estimate
from .report import AnalysisReport, analyze
from .simulation import (BinomialScenario, CampaignConfig, NormalScenario, SimulationMetrics,
                         case_scenario, run_campaign, run_scenario)

__all__ = [name for name, obj in list(globals().items())
           if not name.startswith("_") and not isinstance(obj, _types.ModuleType)]
