"""Single imputation of indicator differences by predictive mean matching."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import DataError
from .panel import DesignMatrix

logger = logging.getLogger(__name__)

MAX_SWEEPS = 10


@dataclass
class ImputationReport:
    filled: list[tuple[str, str, str, float]]
    n_missing_before: int
    n_missing_after: int
    seed: int
    k_neighbors: int = 5
    sweeps: int = 0
    converged: bool = True
    fallbacks: list[str] = field(default_factory=list)
    excluded: dict[str, str] = field(default_factory=dict)
    note: str = "single imputation (one donated value per cell); between-imputation variance is not represented"

    def to_json(self, path) -> None:
        doc = asdict(self)
        doc["filled"] = [
            {"country": c, "indicator": n, "donor_country": d, "donated_value": v}
            for c, n, d, v in self.filled
        ]
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


def exclude_sparse_rows(X: DesignMatrix, max_missing_fraction: float = 0.5):
    """Drop countries whose share of missing predictors exceeds the limit."""
    frac = np.isnan(X.X).mean(axis=1) if X.X.size else np.zeros(len(X.countries))
    excluded = {c: f"{f:.0%} of indicators missing"
                for c, f in zip(X.countries, frac) if f > max_missing_fraction}
    keep = [c for c in X.countries if c not in excluded]
    return X.rows(keep), excluded


def _fit_predict(A_obs, y_obs, A_all):
    beta, _, rank, _ = np.linalg.lstsq(A_obs, y_obs, rcond=None)
    if rank < A_obs.shape[1]:
        return None
    return A_all @ beta


def pmm_impute(X: DesignMatrix, k_neighbors: int = 5, seed: int = 0):
    """Fill missing cells by predictive mean matching with chained sweeps.

    Incomplete columns are visited in ascending order of missing count.  Each
    is regressed (least squares with intercept) on the other columns that are
    complete at that moment; every missing row receives the observed value of
    one of the ``k_neighbors`` observed rows whose fitted values are closest
    to its own.  Which of the k ranks a cell draws from is fixed per cell from
    ``seed``, so sweeps stop as soon as the donor assignment repeats (or after
    ten sweeps).

    Returns
    -------
    DesignMatrix, ImputationReport
    """
    if k_neighbors < 1:
        raise DataError("k_neighbors must be positive")
    data = np.asarray(X.X, dtype=float)
    miss = np.isnan(data)
    n_before = int(miss.sum())
    if n_before == 0:
        return replace(X, X=data.copy()), ImputationReport([], 0, 0, seed, k_neighbors)
    n_obs = (~miss).sum(axis=0)
    for j in np.flatnonzero(miss.any(axis=0)):
        if n_obs[j] < k_neighbors + 1:
            raise DataError(f"column {X.columns[j]!r} has {n_obs[j]} observed entries; "
                            f"need at least {k_neighbors + 1}")
    if not (~miss).all(axis=0).any():
        raise DataError("predictive mean matching needs at least one fully observed column")

    rng = np.random.default_rng(seed)
    # each missing cell draws its neighbour rank once
    pick = np.zeros(data.shape, dtype=int)
    pick[miss] = rng.integers(0, k_neighbors, size=n_before)

    order = sorted(np.flatnonzero(miss.any(axis=0)), key=lambda j: (miss[:, j].sum(), j))
    current = data.copy()
    donors: dict[tuple[int, int], int] = {}
    fallbacks: list[str] = []
    converged = False
    sweep = 0
    for sweep in range(1, MAX_SWEEPS + 1):
        previous = dict(donors)
        for j in order:
            complete = [c for c in range(data.shape[1])
                        if c != j and not np.isnan(current[:, c]).any()]
            obs = np.flatnonzero(~miss[:, j])
            mis = np.flatnonzero(miss[:, j])
            A = np.column_stack([np.ones(len(data))] + [current[:, c] for c in complete])
            fitted = _fit_predict(A[obs], data[obs, j], A)
            if fitted is None:
                # rank-deficient regression: match on distance to the column mean
                if sweep == 1:
                    fallbacks.append(X.columns[j])
                    logger.warning("singular PMM regression for %r; using column-mean matching",
                                   X.columns[j])
                fitted = np.full(len(data), data[obs, j].mean())
                fitted[obs] = data[obs, j]
            for r in mis:
                dist = np.abs(fitted[obs] - fitted[r])
                nearest = obs[np.argsort(dist, kind="stable")[:k_neighbors]]
                donor = int(nearest[min(pick[r, j], len(nearest) - 1)])
                donors[(r, j)] = donor
                current[r, j] = data[donor, j]
        if donors == previous:
            converged = True
            break
    n_after = int(np.isnan(current).sum())
    filled = [(X.countries[r], X.columns[j], X.countries[d], float(data[d, j]))
              for (r, j), d in sorted(donors.items())]
    report = ImputationReport(filled=filled, n_missing_before=n_before,
                              n_missing_after=n_after, seed=seed, k_neighbors=k_neighbors,
                              sweeps=sweep, converged=converged, fallbacks=fallbacks)
    if not converged:
        logger.warning("PMM donors still changing after %d sweeps", MAX_SWEEPS)
    return replace(X, X=current), report


class PMMImputer(TransformerMixin, BaseEstimator):
    """Array interface to :func:`pmm_impute`.

    Imputation is transductive: ``transform`` imputes the array it is given,
    drawing donors from that array's own observed cells.
    """

    def __init__(self, k_neighbors=5, seed=0):
        self.k_neighbors = k_neighbors
        self.seed = seed

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=float)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=float)
        dm = DesignMatrix([str(i) for i in range(X.shape[0])],
                          [str(j) for j in range(X.shape[1])], X)
        out, self.report_ = pmm_impute(dm, self.k_neighbors, self.seed)
        return out.X
