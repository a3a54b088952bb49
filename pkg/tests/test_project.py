
import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minprof.bma import enumerate_bma
from minprof.exceptions import DataError
from minprof.lgcm import GrowthPosterior, LoadingSpec
from minprof.panel import inv_logit, logit
from minprof.project import (PROJECTION_COLUMNS, ProjectionResult, change_table,
                             plot_density, plot_trajectory, project_country, project_overall,
                             write_projection_csv)

YEARS = (2009, 2012, 2015, 2018, 2022)


def make_posterior(intercepts, slopes, countries=None):
    """Posterior with given (S, n) intercept/slope draws on the linear ladder."""
    pi0 = np.atleast_2d(np.asarray(intercepts, float))
    pi1 = np.atleast_2d(np.asarray(slopes, float))
    S, n = pi0.shape
    eta = np.stack([pi0, pi1], axis=-1)[None]                 # (1, S, n, 2)
    return GrowthPosterior(
        countries=countries or [f"c{i}" for i in range(n)], years=YEARS,
        spec=LoadingSpec.from_label("M0"), predictors=[],
        eta=eta, gamma=np.zeros((1, S, 2, 1)), sigma_eta=np.tile(np.eye(2), (1, S, 1, 1)),
        resid_sd=np.ones((1, S, 5)), loadings=np.tile(np.arange(5.0), (1, S, 1)))


def degenerate(p0=0.68, slope=-0.1, S=50):
    return make_posterior(np.full((S, 1), logit(p0)), np.full((S, 1), slope))


def test_zero_slope_is_flat():
    res = project_country(degenerate(slope=0.0))
    start = res.fitted[0][1]
    for _, mean, lo, hi in res.forecast:
        assert mean == pytest.approx(start, abs=1e-10) and lo <= mean <= hi


@pytest.mark.parametrize("ladder,index", [(None, 6), ({2033: 8.0}, 8)])
def test_degenerate_arithmetic(ladder, index):
    res = project_country(degenerate(), future_cycles=[2033], ladder=ladder)
    expect = 100 * inv_logit(logit(0.68) - 0.1 * index)
    year, mean, lo, hi = res.forecast[0]
    assert year == 2033
    assert abs(mean - expect) < 1e-10 and abs(lo - expect) < 1e-10 and abs(hi - expect) < 1e-10
    assert res.change_2009_2033 == pytest.approx(expect - 68.0, abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.floats(-40, 40), st.floats(0, 20), st.floats(-5, 5), st.floats(0, 5),
       st.integers(0, 2**31 - 1))
def test_bands_within_percentage_range(m0, s0, m1, s1, seed):
    rng = np.random.default_rng(seed)
    post = make_posterior(rng.normal(m0, s0, (200, 1)), rng.normal(m1, s1, (200, 1)))
    res = project_country(post)
    for _, mean, lo, hi in res.fitted + res.forecast:
        assert 0.0 <= lo <= mean <= hi <= 100.0


def test_quantiles_commute_with_back_transform(rng):
    post = make_posterior(rng.normal(0.8, 0.4, (999, 1)), rng.normal(-0.05, 0.03, (999, 1)))
    res = project_country(post)
    for (year, _, lo, hi), lf in zip(res.forecast, (5.0, 6.0)):
        z = post.intercept_draws()[:, 0] + post.slope_draws()[:, 0] * lf
        zlo, zhi = np.quantile(z, [0.025, 0.975], method="inverted_cdf")
        assert lo == pytest.approx(100 * inv_logit(zlo), abs=1e-12)
        assert hi == pytest.approx(100 * inv_logit(zhi), abs=1e-12)


def test_horizon_widening_with_bma(rng):
    n, S = 12, 2000
    X = rng.standard_normal((n, 2))
    slopes = -0.05 + 0.03 * X[:, 0] + 0.01 * rng.standard_normal(n)
    post = make_posterior(rng.normal(0.8, 0.05, (S, n)), slopes + 0.01 * rng.standard_normal((S, n)))
    bma = enumerate_bma(slopes, X)
    for i in range(n):
        res = project_country(post, bma, X[i], country=i, seed=i)
        widths = [logit(hi / 100) - logit(lo / 100) for _, _, lo, hi in res.forecast]
        last_fit = logit(res.fitted[-1][3] / 100) - logit(res.fitted[-1][2] / 100)
        assert last_fit <= widths[0] <= widths[1]


def test_bma_requires_predictors(rng):
    X = rng.standard_normal((10, 1))
    bma = enumerate_bma(rng.standard_normal(10), X)
    with pytest.raises(DataError):
        project_country(degenerate(), bma)


@pytest.mark.parametrize("years", [[2022], [2018, 2029], [2030]])
def test_invalid_future_years(years):
    with pytest.raises(DataError):
        project_country(degenerate(), future_cycles=years)


def test_value_at_prefers_history():
    res = project_country(degenerate(), history=[70.0, 69, 68, 67, 66])
    assert res.value_at(2009) == 70.0 and res.value_at(2022) == 66.0
    assert res.change_2009_2033 == pytest.approx(res.value_at(2033) - 70.0)
    with pytest.raises(DataError):
        res.value_at(2026)
    with pytest.raises(DataError):
        project_country(degenerate(), history=[70.0, 69])


def test_overall_identity():
    res = project_country(degenerate(), group="boys", domain="reading")
    out = project_overall([res])
    assert out.forecast == res.forecast and out.fitted == res.fitted


def test_overall_mean_of_constants():
    a = project_country(degenerate(p0=0.6, slope=0.0))
    b = project_country(degenerate(p0=0.7, slope=0.0))
    out = project_overall([a, b])
    assert out.country == "ALL"
    for _, mean, lo, hi in out.fitted + out.forecast:
        assert mean == pytest.approx(65.0, abs=1e-10)
        assert lo == pytest.approx(60.0, abs=1e-10) and hi == pytest.approx(70.0, abs=1e-10)


def test_overall_mismatch():
    a = project_country(degenerate())
    b = project_country(degenerate(), future_cycles=[2029])
    with pytest.raises(DataError, match="cycle sets"):
        project_overall([a, b])
    with pytest.raises(DataError):
        project_overall([])


def _fixed(base, target):
    return ProjectionResult("X", "girls", "reading", YEARS, None,
                            [(2009, base, base, base)] + [(y, base, base, base) for y in YEARS[1:]],
                            [(2033, target, target, target)])


@pytest.mark.parametrize("base,target,change", [(70.0, 70.0, 0), (88.0, 66.0, -22),
                                                (77.0, 82.0, 5), (67.6, 59.4, -9)])
def test_change_table(base, target, change):
    row = change_table([_fixed(base, target)], 2009, 2033).iloc[0]
    assert row.change_rounded == change
    assert row.change == pytest.approx(target - base)


def test_change_table_missing_year():
    with pytest.raises(DataError):
        change_table([_fixed(70, 60)], 2009, 2029)


def test_csv_layout(tmp_path):
    res = project_country(degenerate(), history=[68, 67, 66, 65, 64], group="boys",
                          domain="reading")
    write_projection_csv([res], tmp_path / "p.csv")
    frame = pd.read_csv(tmp_path / "p.csv")
    assert tuple(frame.columns) == PROJECTION_COLUMNS
    assert frame.kind.value_counts().to_dict() == {"observed": 5, "fitted": 5, "forecast": 2}


def test_plots_are_deterministic(tmp_path, rng):
    res = project_country(make_posterior(rng.normal(0.8, 0.1, (300, 1)),
                                         rng.normal(-0.05, 0.02, (300, 1))),
                          history=[68, 67, 66, 65, 64])
    plot_trajectory(res, tmp_path / "a.svg")
    plot_trajectory(res, tmp_path / "b.svg")
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
    X = rng.standard_normal((20, 2))
    y = X[:, 0] + rng.standard_normal(20)
    from minprof.bma import predictive_density
    curve = predictive_density(enumerate_bma(y, X), y, X, 0)
    plot_density(curve, rng.normal(0, 1, 500), tmp_path / "d.svg", title="c0")
    assert (tmp_path / "d.svg").read_text().lstrip().startswith("<?xml")
