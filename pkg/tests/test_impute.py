import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minprof.exceptions import DataError
from minprof.impute import PMMImputer, exclude_sparse_rows, pmm_impute
from minprof.panel import DesignMatrix


def _dm(X):
    X = np.asarray(X, dtype=float)
    return DesignMatrix([f"c{i}" for i in range(X.shape[0])],
                        [f"x{j}" for j in range(X.shape[1])], X)


def _toy(rng, n=30, q=4, n_missing=3):
    X = rng.standard_normal((n, q))
    X[:, 1] += 2 * X[:, 0]
    rows = rng.choice(n, n_missing, replace=False)
    X[rows, q - 1] = np.nan
    return X


def test_unique_nearest_neighbour():
    # x1 = 10 * x0 exactly; the incomplete row's fitted value equals row 2's
    x0 = np.array([0.0, 1.0, 2.0, 3.0, 2.05])
    x1 = np.array([0.0, 10.0, 20.0, 30.0, np.nan])
    out, rep = pmm_impute(_dm(np.column_stack([x0, x1])), k_neighbors=1, seed=3)
    assert out.X[4, 1] == 20.0
    assert rep.filled == [("c4", "x1", "c2", 20.0)]
    assert rep.n_missing_after == 0 and rep.converged


def test_complete_matrix_is_noop(rng):
    X = rng.standard_normal((12, 3))
    out, rep = pmm_impute(_dm(X), 5, 0)
    np.testing.assert_array_equal(out.X, X)
    assert rep.filled == [] and rep.n_missing_before == 0


def test_matches_normal_equations(rng):
    # donor set must be the k observed rows nearest under an independent OLS fit
    X = _toy(rng, n=25, q=3, n_missing=1)
    r = int(np.flatnonzero(np.isnan(X[:, 2]))[0])
    obs = np.flatnonzero(~np.isnan(X[:, 2]))
    A = np.column_stack([np.ones(25), X[:, 0], X[:, 1]])
    beta = np.linalg.solve(A[obs].T @ A[obs], A[obs].T @ X[obs, 2])
    fit = A @ beta
    nearest = obs[np.argsort(np.abs(fit[obs] - fit[r]))[:5]]
    seen = set()
    for seed in range(40):
        out, rep = pmm_impute(_dm(X), 5, seed)
        donor = int(rep.filled[0][2][1:])
        assert donor in nearest
        seen.add(donor)
    assert len(seen) > 1


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 6))
def test_values_come_from_observed_support(seed, n_missing):
    rng = np.random.default_rng(seed)
    X = _toy(rng, n_missing=n_missing)
    X[rng.integers(0, 30), 2] = np.nan
    out, rep = pmm_impute(_dm(X), 5, seed)
    assert not np.isnan(out.X).any()
    for j in range(X.shape[1]):
        observed = set(X[~np.isnan(X[:, j]), j])
        assert set(out.X[:, j]) <= observed
    np.testing.assert_array_equal(out.X[~np.isnan(X)], X[~np.isnan(X)])


def test_deterministic(rng):
    X = _toy(rng, n_missing=5)
    a, ra = pmm_impute(_dm(X), 5, 11)
    b, rb = pmm_impute(_dm(X), 5, 11)
    np.testing.assert_array_equal(a.X, b.X)
    assert ra.filled == rb.filled


def test_too_few_observed():
    X = np.array([[1.0, 1.0], [2.0, np.nan], [3.0, 3.0], [4.0, np.nan]])
    with pytest.raises(DataError, match="observed entries"):
        pmm_impute(_dm(X), 5, 0)


def test_needs_complete_column():
    X = np.arange(40, dtype=float).reshape(10, 4)
    X[0, :] = np.nan
    X[0, 0] = 1.0
    X[1, 0] = np.nan
    with pytest.raises(DataError, match="fully observed"):
        pmm_impute(_dm(X), 2, 0)


def test_singular_regression_falls_back(rng, caplog):
    # duplicated predictor columns make the regression rank deficient
    a = rng.standard_normal(20)
    y = rng.standard_normal(20)
    y[3] = np.nan
    out, rep = pmm_impute(_dm(np.column_stack([a, a, y])), 3, 0)
    assert rep.fallbacks == ["x2"]
    assert np.isfinite(out.X[3, 2])
    assert "singular" in caplog.text


def test_exclude_sparse_rows():
    X = np.ones((3, 4))
    X[1, :3] = np.nan
    kept, excluded = exclude_sparse_rows(_dm(X), 0.5)
    assert kept.countries == ["c0", "c2"] and list(excluded) == ["c1"]


def test_report_json(tmp_path, rng):
    import json
    _, rep = pmm_impute(_dm(_toy(rng)), 5, 0)
    rep.to_json(tmp_path / "r.json")
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["n_missing_after"] == 0
    assert set(doc["filled"][0]) == {"country", "indicator", "donor_country", "donated_value"}


def test_estimator_interface(rng):
    X = _toy(rng)
    imp = PMMImputer(k_neighbors=3, seed=1)
    out = imp.fit_transform(X)
    assert out.shape == X.shape and not np.isnan(out).any()
    assert imp.report_.k_neighbors == 3
