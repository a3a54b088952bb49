import mpmath
import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from minprof.datasets import COLLINEAR_PAIRS, COUNTRIES, INDICATORS, indicator_metadata
from minprof.exceptions import DataError, DuplicateRowError, SchemaError
from minprof.panel import (CLAMP_N_EFF, CollinearityFilter, DesignMatrix, IndicatorMeta,
                           IndicatorTable, OutcomeSeries, clamp_proportion, drop_collinear,
                           inv_logit, load_indicator_meta, load_panel, logit, make_cycles,
                           make_difference_variables, read_indicators, read_outcomes,
                           standardize)

CYCLES = [2009, 2012, 2015, 2018, 2022]


class Cfg:
    cycles = CYCLES


def _outcome_frame(countries, pct=50.0):
    rows = [(c, y, g, d, pct) for c in countries for g in ("boys", "girls")
            for d in ("reading", "mathematics") for y in CYCLES]
    return pd.DataFrame(rows, columns=["country", "year", "group", "domain", "pct_min_prof"])


def _table(values: dict, meta: dict):
    """values: {(country, indicator, year): value}"""
    countries = sorted({k[0] for k in values})
    names = sorted({k[1] for k in values})
    years = sorted({k[2] for k in values})
    data = np.zeros((len(countries), len(names), len(years)))
    mask = np.ones_like(data, dtype=bool)
    for (c, n, y), v in values.items():
        if v is not None:
            idx = (countries.index(c), names.index(n), years.index(y))
            data[idx] = v
            mask[idx] = False
    return IndicatorTable(countries, names, years, np.ma.MaskedArray(data, mask=mask), meta)


# logit -----------------------------------------------------------------------

def test_logit_half_is_zero():
    assert logit(0.5) == 0.0


def test_logit_matches_high_precision():
    mpmath.mp.dps = 40
    ref = mpmath.log(mpmath.mpf("0.8245") / (1 - mpmath.mpf("0.8245")))
    assert abs(logit(0.8245) - float(ref)) < 1e-12


def test_round_trip_1000(rng):
    p = rng.uniform(1e-6, 1 - 1e-6, 1000)
    assert np.max(np.abs(inv_logit(logit(p)) - p)) < 1e-12


@pytest.mark.parametrize("bad", [-0.1, 1.2, np.nan])
def test_logit_rejects_out_of_range(bad):
    with pytest.raises(ValueError):
        logit(bad)


def test_clamping_of_extremes():
    p = clamp_proportion(np.array([0.0, 1.0, 0.3]))
    assert p[0] == 0.5 / CLAMP_N_EFF and p[1] == 1 - 0.5 / CLAMP_N_EFF and p[2] == 0.3
    s = OutcomeSeries.from_percentages("X", "boys", "reading", CYCLES, [0, 100, 50, 50, 50])
    assert np.all(np.isfinite(s.logit_values))


@given(st.lists(st.floats(0.0, 100.0), min_size=5, max_size=5))
def test_series_invariant(pct):
    s = OutcomeSeries.from_percentages("X", "girls", "mathematics", CYCLES, pct)
    assert np.all((s.values > 0) & (s.values < 1))
    assert np.max(np.abs(inv_logit(s.logit_values) - s.values)) < 1e-12


def test_cycles_are_contiguous():
    cyc = make_cycles(CYCLES)
    assert [c.index for c in cyc] == list(range(5))
    with pytest.raises(ValueError):
        make_cycles([2009, 2009, 2012])


# reading ---------------------------------------------------------------------

def test_single_country_fifty_percent(tmp_path):
    path = tmp_path / "o.csv"
    _outcome_frame(["Albania"]).to_csv(path, index=False)
    series, incomplete = read_outcomes(path, CYCLES)
    assert len(series) == 4 and not incomplete
    for s in series:
        assert np.all(s.logit_values == 0.0)


def test_duplicate_row_rejected(tmp_path):
    frame = _outcome_frame(["Albania", "Brazil"])
    dup = frame[(frame.country == "Albania") & (frame.year == 2012)].iloc[[0]]
    path = tmp_path / "o.csv"
    pd.concat([frame, dup]).to_csv(path, index=False)
    with pytest.raises(DuplicateRowError, match="Albania, 2012"):
        read_outcomes(path, CYCLES)


def test_percentage_out_of_range(tmp_path):
    frame = _outcome_frame(["Albania"])
    frame.loc[3, "pct_min_prof"] = 100.5
    path = tmp_path / "o.csv"
    frame.to_csv(path, index=False)
    with pytest.raises(DataError, match=r"o.csv:5"):
        read_outcomes(path, CYCLES)


def test_schema_errors(tmp_path):
    path = tmp_path / "o.csv"
    path.write_text("country,year,group,domain\nA,2009,boys,reading\n")
    with pytest.raises(SchemaError, match="pct_min_prof"):
        read_outcomes(path, CYCLES)
    path.write_text("country,year,group,domain,pct_min_prof\nA,twenty,boys,reading,50\n")
    with pytest.raises(SchemaError, match="not numeric"):
        read_outcomes(path, CYCLES)
    path.write_text("country,year,group,domain,pct_min_prof\nA,2009,men,reading,50\n")
    with pytest.raises(SchemaError, match="group"):
        read_outcomes(path, CYCLES)


def test_country_names_canonicalized(tmp_path):
    frame = _outcome_frame(["Café"])
    frame.loc[0, "country"] = "  Café "
    path = tmp_path / "o.csv"
    frame.to_csv(path, index=False)
    series, incomplete = read_outcomes(path, CYCLES)
    assert {s.country for s in series} == {"Café"} and not incomplete


def test_incomplete_country_excluded(tmp_path):
    frame = _outcome_frame(["Albania", "Brazil"])
    frame = frame[~((frame.country == "Brazil") & (frame.year == 2022) & (frame.group == "girls"))]
    path = tmp_path / "o.csv"
    frame.to_csv(path, index=False)
    series, incomplete = read_outcomes(path, CYCLES)
    assert {s.country for s in series} == {"Albania"}
    assert "Brazil" in incomplete


def test_fixture_loads_all_reference_countries(full_fixture_dir):
    meta = load_indicator_meta(full_fixture_dir / "indicator_meta.yaml")
    cfg = Cfg()
    cfg.indicator_meta = meta
    series, table = load_panel(full_fixture_dir / "outcomes.csv",
                               full_fixture_dir / "indicators.csv", cfg)
    assert len(series) == 53 * 2 * 2
    assert table.countries == list(COUNTRIES)
    assert list(dict.fromkeys(s.country for s in series)) == list(COUNTRIES)
    assert len(table.names) == 31 and not table.excluded


def test_missing_country_reported(tmp_path):
    _outcome_frame(["Albania", "Brazil"]).to_csv(tmp_path / "o.csv", index=False)
    pd.DataFrame([("Albania", "GDP", 2009, 1.0), ("Albania", "GDP", 2021, 2.0),
                  ("Chile", "GDP", 2009, 1.0)],
                 columns=["country", "indicator", "year", "value"]).to_csv(tmp_path / "i.csv",
                                                                           index=False)
    series, table = load_panel(tmp_path / "o.csv", tmp_path / "i.csv", Cfg())
    assert table.countries == ["Albania"]
    assert table.excluded["Brazil"] == "absent from indicator file"
    assert table.excluded["Chile"] == "absent from outcome file"


def test_indicator_duplicates_and_blanks(tmp_path):
    path = tmp_path / "i.csv"
    path.write_text("country,indicator,year,value\nA,GDP,2009,1\nA,GDP,2021,\n")
    table = read_indicators(path)
    assert table.value("A", "GDP", 2021) is None and table.value("A", "GDP", 2009) == 1.0
    path.write_text("country,indicator,year,value\nA,GDP,2009,1\nA,GDP,2009,2\n")
    with pytest.raises(DuplicateRowError):
        read_indicators(path)


def test_metadata_file(tmp_path):
    import yaml
    path = tmp_path / "m.yaml"
    path.write_text(yaml.safe_dump(indicator_metadata()))
    meta = load_indicator_meta(path)
    assert len(meta) == len(INDICATORS)
    assert meta["GDP (standardized)"] == IndicatorMeta(2021, 2009, None, "Context (SES)")
    assert meta["Gender gap index GEQ"].substitute_year == 2021


# differences -----------------------------------------------------------------

def test_difference_direct():
    meta = {"GDP": IndicatorMeta(2021, 2009)}
    t = _table({("A", "GDP", 2009): 1.0, ("A", "GDP", 2021): 1.2,
                ("B", "GDP", 2009): 1.0, ("B", "GDP", 2021): 1.5}, meta)
    X = make_difference_variables(t)
    assert X.X[0, 0] == pytest.approx(0.2, abs=1e-12)


def test_difference_with_substitution():
    meta = {"I": IndicatorMeta(2022, 2009, substitute_year=2021)}
    vals = {("A", "I", 2009): 3.0, ("A", "I", 2021): 5.0, ("A", "I", 2022): None,
            ("B", "I", 2009): 1.0, ("B", "I", 2021): 0.0, ("B", "I", 2022): 4.0,
            ("C", "I", 2009): 0.0, ("C", "I", 2021): 0.0, ("C", "I", 2022): 7.0}
    X = make_difference_variables(_table(vals, meta))
    assert X.X[0, 0] == 2.0 and X.X[1, 0] == 3.0
    X = make_difference_variables(_table(vals, meta), substitute=False)
    assert np.isnan(X.X[0, 0])


def test_difference_missing_without_imputation():
    meta = {"I": IndicatorMeta(2022, 2009, substitute_year=2021)}
    vals = {("A", "I", 2009): 3.0, ("A", "I", 2021): None, ("A", "I", 2022): None,
            ("B", "I", 2009): 1.0, ("B", "I", 2021): 2.0, ("B", "I", 2022): 4.0}
    with pytest.raises(DataError):
        make_difference_variables(_table(vals, meta), allow_missing=False)


def test_constant_indicator_dropped():
    meta = {"C": IndicatorMeta(2021, 2009), "V": IndicatorMeta(2021, 2009)}
    vals = {}
    for i, c in enumerate("ABC"):
        vals[(c, "C", 2009)], vals[(c, "C", 2021)] = 5.0, 5.0
        vals[(c, "V", 2009)], vals[(c, "V", 2021)] = 0.0, float(i)
    X = make_difference_variables(_table(vals, meta))
    assert X.columns == ["V"] and X.dropped == [("C", "zero variance")]


@settings(max_examples=50, deadline=None)
@given(st.integers(-8000, 8000), st.lists(st.integers(-800, 800), min_size=6, max_size=6))
def test_difference_translation_invariant(c, v):
    # eighths are exact in binary, so shifting cannot cancel digits
    c, v = c / 8, [x / 8 for x in v]
    meta = {"I": IndicatorMeta(2021, 2009)}
    base = {("A", "I", 2009): v[0], ("A", "I", 2021): v[1], ("B", "I", 2009): v[2],
            ("B", "I", 2021): v[3], ("C", "I", 2009): v[4], ("C", "I", 2021): v[5]}
    shifted = {k: x + c for k, x in base.items()}
    a = make_difference_variables(_table(base, meta))
    b = make_difference_variables(_table(shifted, meta))
    assert a.columns == b.columns
    if a.columns:
        np.testing.assert_allclose(a.X, b.X, atol=1e-9)


# collinearity and scaling ----------------------------------------------------

def _dm(X, names=None):
    X = np.asarray(X, dtype=float)
    return DesignMatrix([f"c{i}" for i in range(len(X))],
                        names or [f"x{j}" for j in range(X.shape[1])], X)


def test_duplicate_columns(rng):
    a = rng.standard_normal(30)
    out = drop_collinear(_dm(np.column_stack([a, a, rng.standard_normal(30)])), 0.95)
    assert out.columns == ["x0", "x2"]
    assert out.dropped[0][0] == "x1" and "collinear with x0" in out.dropped[0][1]


def test_orthogonal_columns():
    X = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=float)
    out = drop_collinear(_dm(X), 0.95)
    assert out.columns == ["x0", "x1"] and out.dropped == []


def test_collinear_idempotent(rng):
    a = rng.standard_normal((40, 5))
    a[:, 3] = a[:, 1] * 2 + 0.01 * rng.standard_normal(40)
    once = drop_collinear(_dm(a), 0.95)
    twice = drop_collinear(once, 0.95)
    assert once.columns == twice.columns
    np.testing.assert_array_equal(once.X, twice.X)


def test_reference_indicator_set_keeps_29(full_fixture_dir):
    meta = load_indicator_meta(full_fixture_dir / "indicator_meta.yaml")
    table = read_indicators(full_fixture_dir / "indicators.csv", meta)
    raw = make_difference_variables(table)
    from minprof.impute import pmm_impute
    filled, _ = pmm_impute(raw, 5, 0)
    out = drop_collinear(filled, 0.95)
    assert len(out.columns) == 29
    assert {n for n, _ in out.dropped} == {copy for copy, _ in COLLINEAR_PAIRS}


def test_standardize(rng):
    X = standardize(_dm(rng.normal(5, 3, (25, 4))))
    np.testing.assert_allclose(X.X.mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(X.X.std(axis=0), 1, atol=1e-12)
    with pytest.raises(DataError):
        standardize(_dm(np.ones((5, 2))))


def test_collinearity_filter_estimator(rng):
    a = rng.standard_normal((30, 3))
    a[:, 2] = a[:, 0]
    f = CollinearityFilter(threshold=0.9)
    assert clone(f).get_params() == {"threshold": 0.9}
    out = f.fit_transform(a)
    assert out.shape == (30, 2) and list(f.get_support()) == [True, True, False]
