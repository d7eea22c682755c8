import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from fewmeta import Dataset, MetaAnalysisError, ci_knapp_hartung, ci_normal, pooled_estimate


def test_pooled_estimate_by_hand(three_studies):
    tau = 0.3
    w = 1.0 / (np.array([0.16, 0.09, 0.25]) + tau ** 2)
    mu = (w * np.array([-1.2, -0.5, 0.1])).sum() / w.sum()
    p = pooled_estimate(three_studies, tau)
    assert p.mu_hat == pytest.approx(mu, abs=1e-14)
    assert p.se_mu == pytest.approx(1 / math.sqrt(w.sum()), abs=1e-14)
    assert p.w_plus == pytest.approx(w.sum(), rel=1e-14)


def test_normal_interval(three_studies):
    p = pooled_estimate(three_studies, 0.0)
    iv = ci_normal(p, 0.95)
    z = stats.norm.ppf(0.975)
    assert iv.lower == pytest.approx(p.mu_hat - z * p.se_mu, abs=1e-13)
    assert iv.upper == pytest.approx(p.mu_hat + z * p.se_mu, abs=1e-13)
    assert iv.method == "NORM"


def test_knapp_hartung_by_hand(three_studies):
    tau = 0.2
    p = pooled_estimate(three_studies, tau)
    w = np.asarray(p.weights)
    q = (w * (three_studies.y - p.mu_hat) ** 2).sum() / 2
    half_raw = stats.t.ppf(0.975, 2) * math.sqrt(q) * p.se_mu
    raw, st_raw = ci_knapp_hartung(three_studies, tau, modified=False)
    mod, st_mod = ci_knapp_hartung(three_studies, tau)
    assert st_raw.q == pytest.approx(q, rel=1e-13)
    assert raw.upper - p.mu_hat == pytest.approx(half_raw, rel=1e-12)
    assert st_mod.q_star == max(1.0, q)
    assert mod.method == "KH-MOD" and raw.method == "KH"


def test_kh_modified_widens_when_q_is_small():
    d = Dataset.from_arrays([0.1, 0.11, 0.09], [0.5, 0.5, 0.5])
    raw, s = ci_knapp_hartung(d, 0.0, modified=False)
    mod, _ = ci_knapp_hartung(d, 0.0)
    assert s.q < 1.0
    assert mod.width > raw.width


@pytest.mark.parametrize("level", [0.0, 1.0, -0.2, 1.5])
def test_bad_level(three_studies, level):
    with pytest.raises(MetaAnalysisError):
        ci_normal(pooled_estimate(three_studies, 0.1), level)


def test_oracle_example_kh_wider_than_normal(three_studies):
    from fewmeta import tau_dl
    tau = tau_dl(three_studies).tau
    norm = ci_normal(pooled_estimate(three_studies, tau))
    kh, _ = ci_knapp_hartung(three_studies, tau)
    assert kh.lower <= norm.lower and norm.upper <= kh.upper


studies = st.integers(2, 6).flatmap(lambda k: st.tuples(
    st.lists(st.floats(-3, 3), min_size=k, max_size=k),
    st.lists(st.floats(0.05, 1.5), min_size=k, max_size=k)))


@settings(max_examples=100, deadline=None)
@given(studies, st.floats(0, 3), st.floats(0.5, 0.99))
def test_kh_modified_contains_normal(data, tau, level):
    d = Dataset.from_arrays(*data)
    norm = ci_normal(pooled_estimate(d, tau), level)
    kh, _ = ci_knapp_hartung(d, tau, level)
    tol = 1e-12 * (1 + abs(norm.lower) + abs(norm.upper))
    assert kh.lower <= norm.lower + tol and norm.upper <= kh.upper + tol


@settings(max_examples=60, deadline=None)
@given(studies, st.floats(0, 2), st.floats(-4, 4), st.floats(0.2, 5))
def test_interval_equivariance(data, tau, shift, scale):
    d = Dataset.from_arrays(*data)
    for modified in (True, False):
        base, _ = ci_knapp_hartung(d, tau, modified=modified)
        sh, _ = ci_knapp_hartung(d.shifted(shift), tau, modified=modified)
        sc, _ = ci_knapp_hartung(d.scaled(scale), tau * scale, modified=modified)
        assert (sh.lower, sh.upper) == pytest.approx((base.lower + shift, base.upper + shift), abs=1e-9)
        assert (sc.lower, sc.upper) == pytest.approx((base.lower * scale, base.upper * scale), abs=1e-9 * scale)
    n = ci_normal(pooled_estimate(d.scaled(scale), tau * scale))
    n0 = ci_normal(pooled_estimate(d, tau))
    assert n.width == pytest.approx(scale * n0.width, rel=1e-10)
