import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from minprof.exceptions import DataError
from minprof.score import (K_WARN, gpd_fit, kld_gaussian, kld_samples, log_predictive_score,
                           psis_loo, psis_smooth)
from oracles import gaussian_regression_loo


# KL divergence ---------------------------------------------------------------

def test_kld_examples():
    assert kld_gaussian(0, 1, 0, 1) == 0.0
    assert kld_gaussian(0, 1, 1, 1) == 0.5
    assert kld_gaussian(0, 1, 0, 2) == pytest.approx(math.log(2) + 1 / 8 - 1 / 2, abs=1e-15)
    with pytest.raises(ValueError):
        kld_gaussian(0, 0, 0, 1)


@settings(max_examples=200)
@given(st.floats(-5, 5), st.floats(0.05, 5), st.floats(-5, 5), st.floats(0.05, 5))
def test_kld_nonnegative(m1, s1, m2, s2):
    v = kld_gaussian(m1, s1, m2, s2)
    assert v >= -1e-15
    if (m1, s1) != (m2, s2):
        assert v > 0 or abs(m1 - m2) < 1e-7 and abs(s1 - s2) < 1e-7


def test_kld_samples_oracle(rng):
    f = rng.normal(0, 1, 100_000)
    g = rng.normal(1, 1, 100_000)
    assert abs(kld_samples(f, g) - 0.5) <= 0.05


def test_kld_samples_self(rng):
    f = rng.normal(0, 1, 5000)
    assert kld_samples(f, f) <= 1e-6


def test_kld_samples_nonnegative(rng):
    for _ in range(100):
        f = rng.normal(rng.normal(), rng.uniform(0.2, 2), 150)
        g = rng.standard_t(3, 150) * rng.uniform(0.2, 2)
        assert kld_samples(f, g) >= 0


def test_kld_samples_needs_draws():
    with pytest.raises(DataError):
        kld_samples(np.zeros(50), np.zeros(500))


# log predictive score --------------------------------------------------------

def test_lps_examples():
    s = 1 / math.sqrt(2 * math.pi)
    assert log_predictive_score(3.0, s, 3.0) == pytest.approx(0.0, abs=1e-15)
    base = log_predictive_score(0.0, 2.0, 0.0)
    assert log_predictive_score(0.0, 2.0, 2.0) == pytest.approx(base + 0.5, abs=1e-15)
    with pytest.raises(ValueError):
        log_predictive_score(0.0, 0.0, 1.0)


def test_lps_matches_independent_pdf(rng):
    for _ in range(100):
        m, s, y = rng.normal(), rng.uniform(0.1, 3), rng.normal(0, 2)
        pdf = math.exp(-((y - m) / s) ** 2 / 2) / (s * math.sqrt(2 * math.pi))
        assert log_predictive_score(m, s, y) == pytest.approx(-math.log(pdf), abs=1e-12)


# Pareto smoothing and LOO ----------------------------------------------------

@pytest.mark.parametrize("k", [0.3, -0.2, 0.7])
def test_gpd_fit_recovers_shape(k):
    x = stats.genpareto.rvs(k, scale=2.0, size=100_000, random_state=np.random.default_rng(1))
    k_hat, sigma = gpd_fit(x)
    assert abs(k_hat - k) < 0.1
    assert sigma == pytest.approx(2.0, rel=0.1)


def test_exact_loo_agreement():
    ll, exact = gaussian_regression_loo()
    res = psis_loo(ll)
    assert abs(res.elpd_loo - exact) <= 0.5
    assert res.n_bad_k == 0


def test_loo_identities(rng):
    ll, _ = gaussian_regression_loo(seed=3)
    res = psis_loo(ll)
    assert res.loo_ic == -2 * res.elpd_loo
    assert abs(res.pointwise.sum() - res.elpd_loo) < 1e-10
    perm = rng.permutation(ll.shape[1])
    assert psis_loo(ll[:, perm]).elpd_loo == pytest.approx(res.elpd_loo, abs=1e-10)


def test_constant_shift(rng):
    ll, _ = gaussian_regression_loo(seed=4)
    shifted = psis_loo(ll + 2.5)
    np.testing.assert_allclose(shifted.pointwise, psis_loo(ll).pointwise + 2.5, atol=1e-10)


def test_constant_ratios():
    ll = np.full((1000, 3), -1.3)
    res = psis_loo(ll)
    assert np.all(np.isnan(res.pareto_k))
    np.testing.assert_allclose(res.pointwise, -1.3, atol=1e-12)
    assert res.to_dict()["pareto_k"] == [None, None, None]


def test_heavy_tail_flagged(rng):
    # a few draws with tiny likelihood give importance ratios with a heavy tail
    ll = rng.normal(0, 0.1, (2000, 3))
    ll[:, 1] = -np.abs(rng.standard_t(2, 2000))
    ll[:, 2] = -np.abs(rng.standard_cauchy(2000)) * 5
    res = psis_loo(ll)
    assert res.pareto_k[0] < K_WARN < res.pareto_k[1]
    assert res.pareto_k[2] == np.inf and res.n_bad_k == 2
    assert np.all(np.isfinite(res.pointwise))


def test_truncation_at_cap():
    S = 1000
    lr = np.zeros(S)
    lr[-1] = 50.0
    lw, k = psis_smooth(lr)
    w_in = np.exp(lr - lr.max())
    assert np.isnan(k)
    assert math.exp(lw.max()) == pytest.approx(S ** 0.75 * w_in.mean(), rel=1e-12)
    np.testing.assert_array_equal(lw[:-1], lr[:-1] - 50.0)


@pytest.mark.parametrize("bad", [np.zeros((999, 3)), np.full((1000, 2), np.inf), np.zeros(1000)])
def test_loo_input_errors(bad):
    with pytest.raises(DataError):
        psis_loo(bad)


def test_loo_json(tmp_path):
    ll, _ = gaussian_regression_loo(seed=5)
    res = psis_loo(ll)
    res.to_json(tmp_path / "l.json")
    import json
    doc = json.loads((tmp_path / "l.json").read_text())
    assert doc["scale"] == "logit" and len(doc["pointwise"]) == 20
