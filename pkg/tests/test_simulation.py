import math

import numpy as np
import pytest

from fewmeta import BinomialScenario, CampaignConfig, MetaAnalysisError, NormalScenario
from fewmeta.simulation import (BG_LOWER, BG_UPPER, STANDIN_AR_COUNTS, STANDIN_SRR_COUNTS,
                                FailureBudgetExceeded, case_scenario, draw_arm_logodds,
                                draw_standard_errors, population_i_squared, run_campaign,
                                run_scenario, simulate_binomial_tables, simulate_replication,
                                write_metrics_csv)
from fewmeta.simulation import SimulationMetrics

METHODS = ["DL-norm", "REML-KnHa", "EB-norm", "BM-KnHa-raw", "half-Normal(0.5)"]


def test_standard_errors_truncated_and_median():
    s2 = draw_standard_errors(40_000, np.random.default_rng(1)) ** 2
    assert s2.min() >= BG_LOWER and s2.max() <= BG_UPPER
    assert np.median(np.sqrt(s2)) == pytest.approx(0.35, abs=0.01)


def test_arm_log_odds_moments():
    sc = case_scenario("ar")
    lam = draw_arm_logodds(sc, np.random.default_rng(2), 200_000)
    np.testing.assert_allclose(lam.mean(0), [0.0, -1.5], atol=0.01)
    np.testing.assert_allclose(lam.var(0), [1.0, 1.0], atol=0.02)
    assert np.corrcoef(lam.T)[0, 1] == pytest.approx(0.875, abs=0.003)
    assert np.std(lam[:, 1] - lam[:, 0]) == pytest.approx(0.5, abs=0.005)


def test_implied_tau():
    assert case_scenario("ar").tau_true == pytest.approx(0.5, abs=1e-12)
    assert case_scenario("srr").tau_true == pytest.approx(0.75, abs=1e-3)
    assert case_scenario("ar").target == -1.5
    assert case_scenario("srr").target == -1.0


def test_standin_counts_respect_documented_ranges():
    for counts, k in ((STANDIN_AR_COUNTS, 6), (STANDIN_SRR_COUNTS, 3)):
        assert len(counts) == k
        for nt, nc in counts:
            assert 30 <= nt + nc <= 108
            assert 1 <= max(nt, nc) / min(nt, nc) <= 3


def test_binomial_tables_use_patient_counts():
    sc = case_scenario("srr", n_reps=5)
    tables = simulate_binomial_tables(sc, 3)
    assert [(t.n_t, t.n_c) for t in tables] == list(STANDIN_SRR_COUNTS)


def test_replications_are_reproducible_and_distinct():
    sc = NormalScenario(5, 0.2, n_reps=10)
    a, b = simulate_replication(sc, 4), simulate_replication(sc, 4)
    assert a == b
    assert simulate_replication(sc, 5) != a
    other_seed = NormalScenario(5, 0.2, n_reps=10, seed=1)
    assert simulate_replication(other_seed, 4) != a


def test_short_run_is_prefix_of_long_run():
    short = run_scenario(NormalScenario(3, 0.1, n_reps=20), ["DL-norm"])
    long = run_scenario(NormalScenario(3, 0.1, n_reps=50), ["DL-norm"])
    np.testing.assert_array_equal(short.tau_hat, long.tau_hat[:, :20])


def test_zero_variance_scenario_has_no_effect_draws():
    sc = NormalScenario(3, 0.0, n_reps=1)
    d = simulate_replication(sc, 0)
    assert d.k == 3


def test_population_i_squared():
    assert population_i_squared(0.5, [0.5, 0.5]) == pytest.approx(0.5 / 0.75)
    assert population_i_squared(0.0, [0.5]) == 0.0


def test_metrics_by_hand():
    sc = NormalScenario(4, 0.3, n_reps=40)
    res = run_scenario(sc, ["DL-norm"])
    t, lo, hi = res.tau_hat[0], res.lower[0], res.upper[0]
    m = res.metrics[0]
    assert m.tau_bias == pytest.approx(t.mean() - math.sqrt(0.3))
    assert m.zero_prop == pytest.approx((t == 0).mean())
    assert m.coverage == pytest.approx(((lo <= 0) & (0 <= hi)).mean())
    assert m.mean_len == pytest.approx((hi - lo).mean())
    assert m.median_i2 == pytest.approx(np.median(res.i2))
    assert m.failures == 0


def test_zero_proportion_only_for_zero_capable_estimators():
    res = run_scenario(NormalScenario(3, 0.1, n_reps=10), ["BM-norm", "half-Normal(0.5)", "ML-norm"])
    assert math.isnan(res.metrics[0].zero_prop) and math.isnan(res.metrics[1].zero_prop)
    assert not math.isnan(res.metrics[2].zero_prop)


@pytest.mark.parametrize("scenario", [
    NormalScenario(3, 0.5, n_reps=24),
    case_scenario("srr", n_reps=24),
], ids=["normal", "binomial"])
def test_results_independent_of_worker_count(scenario):
    one = run_scenario(scenario, METHODS, CampaignConfig(threads=1, chunk_size=5))
    two = run_scenario(scenario, METHODS, CampaignConfig(threads=2, chunk_size=7))
    for name in ("tau_hat", "mu_hat", "lower", "upper", "i2"):
        np.testing.assert_array_equal(getattr(one, name), getattr(two, name))
    assert [m.csv_row() for m in one.metrics] == [m.csv_row() for m in two.metrics]


def test_thread_count_from_environment(monkeypatch):
    from fewmeta.simulation import resolve_threads
    monkeypatch.setenv("FEWMETA_THREADS", "3")
    assert resolve_threads(None) == 3
    assert resolve_threads(1) == 1


def test_failure_budget(monkeypatch):
    import fewmeta.simulation as simmod
    from fewmeta.model import ConvergenceError

    def broken(*args, **kwargs):
        raise ConvergenceError("forced")

    monkeypatch.setattr(simmod, "estimate_tau", broken)
    with pytest.raises(FailureBudgetExceeded) as info:
        run_campaign([NormalScenario(3, 0.1, n_reps=10)], ["DL-norm", "half-Normal(1.0)"])
    rows = info.value.metrics
    assert [r.failures for r in rows] == [10, 0]


def test_csv_output(tmp_path):
    rows = run_campaign([NormalScenario(3, 0.1, n_reps=5)], ["DL-norm"])
    path = tmp_path / "m.csv"
    write_metrics_csv(rows, path)
    lines = path.read_text().splitlines()
    assert lines[0] == SimulationMetrics.CSV_HEADER
    assert float(lines[1].split(",")[7]) == rows[0].coverage


@pytest.mark.parametrize("kwargs", [
    dict(arm_means=(0.0,), arm_var=1.0, rho=0.5, patient_counts=((10, 10), (10, 10))),
    dict(arm_means=(0.0, 1.0), arm_var=1.0, rho=1.0, patient_counts=((10, 10), (10, 10))),
    dict(arm_means=(0.0, 1.0), arm_var=1.0, rho=0.5, patient_counts=((10, 10),)),
])
def test_invalid_binomial_scenarios(kwargs):
    with pytest.raises(MetaAnalysisError):
        BinomialScenario(**kwargs)


def test_invalid_normal_scenarios():
    with pytest.raises(MetaAnalysisError):
        NormalScenario(1, 0.1)
    with pytest.raises(MetaAnalysisError):
        NormalScenario(3, -0.1)
