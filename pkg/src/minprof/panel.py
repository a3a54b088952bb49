"""Outcome panel and indicator ingestion, difference variables, transforms.

Percentages arrive on the 0-100 scale and are modelled as logits of
proportions.  Indicators arrive in long format (one row per country,
indicator and year) and are reduced to one difference variable per
indicator, which becomes a column of a :class:`DesignMatrix`.
"""

from __future__ import annotations

import logging
import unicodedata
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd
import yaml
from scipy.special import expit
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import DataError, DuplicateRowError, SchemaError

logger = logging.getLogger(__name__)

GROUPS = ("boys", "girls")
DOMAINS = ("reading", "mathematics")
OUTCOME_COLUMNS = ("country", "year", "group", "domain", "pct_min_prof")
INDICATOR_COLUMNS = ("country", "indicator", "year", "value")

#: Effective sample size used to pull 0% and 100% off the boundary.
CLAMP_N_EFF = 10_000


def canonical_country(name) -> str:
    return unicodedata.normalize("NFC", str(name)).strip()


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------

def logit(p):
    """Log-odds of a proportion.

    Parameters
    ----------
    p : float or array_like
        Proportion(s) in [0, 1].  The boundary values map to -inf/+inf, so
        callers should clamp first (see :func:`clamp_proportion`).

    Returns
    -------
    float or ndarray
    """
    arr = np.asarray(p, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any((arr < 0.0) | (arr > 1.0)):
        raise ValueError("logit is defined for proportions in [0, 1]")
    with np.errstate(divide="ignore"):
        out = np.log(arr) - np.log1p(-arr)
    return float(out) if out.ndim == 0 else out


def inv_logit(x):
    out = expit(np.asarray(x, dtype=float))
    return float(out) if out.ndim == 0 else out


def clamp_proportion(p, n_eff: int = CLAMP_N_EFF):
    """Move exact 0 and 1 to 0.5/n_eff and 1 - 0.5/n_eff."""
    arr = np.asarray(p, dtype=float)
    lo = 0.5 / n_eff
    out = np.where(arr <= 0.0, lo, np.where(arr >= 1.0, 1.0 - lo, arr))
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Cycle:
    year: int
    index: int


def make_cycles(years: Sequence[int]) -> tuple[Cycle, ...]:
    years = [int(y) for y in years]
    if any(b <= a for a, b in zip(years, years[1:])):
        raise DataError(f"cycle years must be strictly increasing, got {years}")
    return tuple(Cycle(year=y, index=i) for i, y in enumerate(years))


@dataclass(frozen=True)
class OutcomeSeries:
    """One country's outcome trajectory for a single group and domain."""

    country: str
    group: str
    domain: str
    years: tuple[int, ...]
    values: np.ndarray
    logit_values: np.ndarray = field(repr=False)

    @classmethod
    def from_percentages(cls, country, group, domain, years, pct) -> "OutcomeSeries":
        values = clamp_proportion(np.asarray(pct, dtype=float) / 100.0)
        values = np.atleast_1d(values)
        return cls(
            country=canonical_country(country),
            group=group,
            domain=domain,
            years=tuple(int(y) for y in years),
            values=values,
            logit_values=np.atleast_1d(logit(values)),
        )


@dataclass(frozen=True)
class IndicatorMeta:
    end_year: int
    start_year: int
    substitute_year: int | None = None
    group: str | None = None


@dataclass
class IndicatorTable:
    """Country x indicator x year values; masked cells are missing."""

    countries: list[str]
    names: list[str]
    years: list[int]
    raw: np.ma.MaskedArray
    meta: dict[str, IndicatorMeta]
    excluded: dict[str, str] = field(default_factory=dict)

    def value(self, country: str, name: str, year: int):
        """Observed value, or ``None`` when missing or never recorded."""
        if year not in self.years:
            return None
        cell = self.raw[self.countries.index(country), self.names.index(name),
                        self.years.index(year)]
        return None if cell is np.ma.masked else float(cell)

    def subset(self, countries: Sequence[str]) -> "IndicatorTable":
        rows = [self.countries.index(c) for c in countries]
        return replace(self, countries=list(countries), raw=self.raw[rows])


@dataclass
class DesignMatrix:
    """Country x predictor matrix.

    ``X`` may hold NaN only between difference construction and imputation;
    everything downstream of :func:`minprof.impute.pmm_impute` is complete.
    """

    countries: list[str]
    columns: list[str]
    X: np.ndarray
    dropped: list[tuple[str, str]] = field(default_factory=list)
    center: np.ndarray | None = None
    scale: np.ndarray | None = None

    @property
    def shape(self):
        return self.X.shape

    @property
    def n_missing(self) -> int:
        return int(np.isnan(self.X).sum())

    def select(self, columns: Sequence[str]) -> "DesignMatrix":
        idx = [self.columns.index(c) for c in columns]
        return replace(self, columns=list(columns), X=self.X[:, idx].copy(),
                       center=None if self.center is None else self.center[idx],
                       scale=None if self.scale is None else self.scale[idx])

    def rows(self, countries: Sequence[str]) -> "DesignMatrix":
        idx = [self.countries.index(c) for c in countries]
        return replace(self, countries=list(countries), X=self.X[idx].copy())

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.X, index=pd.Index(self.countries, name="country"),
                            columns=self.columns)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "DesignMatrix":
        return cls(countries=[canonical_country(c) for c in frame.index],
                   columns=[str(c) for c in frame.columns],
                   X=frame.to_numpy(dtype=float))


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------

def load_indicator_meta(path) -> dict[str, IndicatorMeta]:
    """Read the indicator metadata file.

    The file is YAML with one mapping per indicator::

        indicators:
          GDP (standardized): {end_year: 2021, start_year: 2009}
          Gender gap index GEQ:
            end_year: 2022
            substitute_year: 2021
            start_year: 2009
            group: Context (Gender Gap)
    """
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh) or {}
    entries = doc.get("indicators", doc)
    if not isinstance(entries, Mapping):
        raise SchemaError(f"{path}: expected a mapping of indicators")
    meta = {}
    for name, spec in entries.items():
        try:
            meta[str(name).strip()] = IndicatorMeta(
                end_year=int(spec["end_year"]),
                start_year=int(spec["start_year"]),
                substitute_year=(None if spec.get("substitute_year") is None
                                 else int(spec["substitute_year"])),
                group=spec.get("group"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"{path}: bad metadata for indicator {name!r}: {exc}") from exc
    return meta


def _read_csv(path, required: Sequence[str]) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise SchemaError(f"{path}: unreadable CSV: {exc}") from exc
    frame.columns = [c.strip() for c in frame.columns]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {missing}; header is {list(frame.columns)}")
    return frame


def _parse_numeric(frame, column, path, *, allow_empty=False, integer=False):
    out = np.empty(len(frame))
    for i, text in enumerate(frame[column]):
        text = text.strip()
        if text == "" and allow_empty:
            out[i] = np.nan
            continue
        try:
            val = float(text)
        except ValueError:
            raise SchemaError(f"{path}:{i + 2}: column {column!r} is not numeric: {text!r}") from None
        if not np.isfinite(val) or (integer and val != int(val)):
            raise SchemaError(f"{path}:{i + 2}: column {column!r} has invalid value {text!r}")
        out[i] = val
    return out


def read_outcomes(path, cycles: Sequence[int],
                  groups: Sequence[str] = GROUPS,
                  domains: Sequence[str] = DOMAINS):
    """Parse and validate an outcome CSV.

    Returns
    -------
    series : list of OutcomeSeries
        Complete series only, in order of first appearance of the country.
    incomplete : dict
        Country -> reason for countries lacking some selected cycle/series.
    """
    frame = _read_csv(path, OUTCOME_COLUMNS)
    frame["country"] = [canonical_country(c) for c in frame["country"]]
    frame["group"] = frame["group"].str.strip().str.lower()
    frame["domain"] = frame["domain"].str.strip().str.lower()
    years = _parse_numeric(frame, "year", path, integer=True).astype(int)
    pct = _parse_numeric(frame, "pct_min_prof", path)
    for i in range(len(frame)):
        where = f"{path}:{i + 2}"
        if frame["group"].iat[i] not in GROUPS:
            raise SchemaError(f"{where}: group must be one of {GROUPS}, got {frame['group'].iat[i]!r}")
        if frame["domain"].iat[i] not in DOMAINS:
            raise SchemaError(f"{where}: domain must be one of {DOMAINS}, got {frame['domain'].iat[i]!r}")
        if not 0.0 <= pct[i] <= 100.0:
            raise DataError(f"{where}: pct_min_prof {pct[i]} outside [0, 100]")
        if frame["country"].iat[i] == "":
            raise SchemaError(f"{where}: empty country")
    frame["year"] = years
    frame["pct"] = pct
    key = ["country", "year", "group", "domain"]
    dup = frame.duplicated(key, keep="first")
    if dup.any():
        i = int(np.flatnonzero(dup.to_numpy())[0])
        row = frame.iloc[i]
        raise DuplicateRowError(
            f"{path}:{i + 2}: duplicate row for ({row['country']}, {row['year']}, "
            f"{row['group']}, {row['domain']})")

    cycles = [int(c) for c in cycles]
    lookup = {(r.country, r.year, r.group, r.domain): r.pct
              for r in frame[key + ["pct"]].itertuples(index=False)}
    order = list(dict.fromkeys(frame["country"]))
    series, incomplete = [], {}
    for country in order:
        gaps = [(g, d, y) for g in groups for d in domains for y in cycles
                if (country, y, g, d) not in lookup]
        if gaps:
            g, d, y = gaps[0]
            incomplete[country] = f"missing outcome for {g}/{d} in {y} ({len(gaps)} gaps)"
            continue
        for g in groups:
            for d in domains:
                series.append(OutcomeSeries.from_percentages(
                    country, g, d, cycles, [lookup[(country, y, g, d)] for y in cycles]))
    return series, incomplete


def read_indicators(path, meta: Mapping[str, IndicatorMeta] | None = None) -> IndicatorTable:
    frame = _read_csv(path, INDICATOR_COLUMNS)
    frame["country"] = [canonical_country(c) for c in frame["country"]]
    frame["indicator"] = frame["indicator"].str.strip()
    frame["year"] = _parse_numeric(frame, "year", path, integer=True).astype(int)
    frame["num"] = _parse_numeric(frame, "value", path, allow_empty=True)
    dup = frame.duplicated(["country", "indicator", "year"], keep="first")
    if dup.any():
        i = int(np.flatnonzero(dup.to_numpy())[0])
        row = frame.iloc[i]
        raise DuplicateRowError(
            f"{path}:{i + 2}: duplicate row for ({row['country']}, {row['indicator']}, {row['year']})")
    countries = list(dict.fromkeys(frame["country"]))
    names = list(dict.fromkeys(frame["indicator"]))
    years = sorted(set(int(y) for y in frame["year"]))
    data = np.zeros((len(countries), len(names), len(years)))
    mask = np.ones_like(data, dtype=bool)
    ci = {c: i for i, c in enumerate(countries)}
    ni = {n: i for i, n in enumerate(names)}
    yi = {y: i for i, y in enumerate(years)}
    for r in frame[["country", "indicator", "year", "num"]].itertuples(index=False):
        if np.isfinite(r.num):
            idx = (ci[r.country], ni[r.indicator], yi[r.year])
            data[idx] = r.num
            mask[idx] = False
    meta = dict(meta or {})
    for name in names:
        if name not in meta:
            meta[name] = IndicatorMeta(end_year=years[-1], start_year=years[0])
            logger.info("indicator %r has no metadata; differencing %d-%d",
                        name, years[-1], years[0])
    return IndicatorTable(countries=countries, names=names, years=years,
                          raw=np.ma.MaskedArray(data, mask=mask),
                          meta={n: meta[n] for n in names})


def load_panel(outcome_csv_path, indicator_csv_path, config):
    """Load the outcome panel and indicator table for one pipeline run.

    ``config`` needs ``cycles`` and may provide ``countries`` (an explicit
    country list, order preserved), ``groups``, ``domains`` and
    ``indicator_meta``.  Countries missing from either source, or lacking a
    complete outcome series, are excluded and listed in
    ``table.excluded``.
    """
    groups = tuple(getattr(config, "groups", None) or GROUPS)
    domains = tuple(getattr(config, "domains", None) or DOMAINS)
    series, excluded = read_outcomes(outcome_csv_path, config.cycles, groups, domains)
    table = read_indicators(indicator_csv_path, getattr(config, "indicator_meta", None))

    outcome_countries = list(dict.fromkeys(s.country for s in series))
    wanted = getattr(config, "countries", None)
    if wanted:
        wanted = [canonical_country(c) for c in wanted]
        for c in outcome_countries:
            if c not in wanted:
                excluded.setdefault(c, "not in configured country list")
    else:
        wanted = outcome_countries
    in_table = set(table.countries)
    in_outcomes = set(outcome_countries)
    keep = []
    for c in wanted:
        if c in excluded:
            continue
        if c not in in_outcomes:
            excluded[c] = "absent from outcome file"
        elif c not in in_table:
            excluded[c] = "absent from indicator file"
        else:
            keep.append(c)
    for c in table.countries:
        if c not in keep and c not in excluded:
            excluded[c] = "absent from outcome file"
    for c, why in excluded.items():
        logger.warning("excluding %s: %s", c, why)
    kept = set(keep)
    series = sorted((s for s in series if s.country in kept),
                    key=lambda s: (keep.index(s.country), groups.index(s.group),
                                   domains.index(s.domain)))
    table = table.subset(keep)
    table.excluded = excluded
    return series, table


def select_series(series: Iterable[OutcomeSeries], group: str, domain: str) -> list[OutcomeSeries]:
    return [s for s in series if s.group == group and s.domain == domain]


# ---------------------------------------------------------------------------
# design matrix construction
# ---------------------------------------------------------------------------

def make_difference_variables(table: IndicatorTable, substitute: bool = True,
                              allow_missing: bool = True) -> DesignMatrix:
    """One column per indicator: value(end_year) - value(start_year).

    When the end year is missing and a substitute year is configured and
    observed, the substitute value is used.  Cells that still cannot be
    formed become NaN for downstream imputation (``allow_missing=True``) or
    raise :class:`DataError`.  Columns with zero variance over their
    observed entries are dropped.
    """
    n, q = len(table.countries), len(table.names)
    X = np.full((n, q), np.nan)
    for j, name in enumerate(table.names):
        meta = table.meta[name]
        for i, country in enumerate(table.countries):
            end = table.value(country, name, meta.end_year)
            if end is None and substitute and meta.substitute_year is not None:
                end = table.value(country, name, meta.substitute_year)
            start = table.value(country, name, meta.start_year)
            if end is None or start is None:
                if not allow_missing:
                    raise DataError(
                        f"cannot form difference for {country}/{name}: "
                        f"{'end' if end is None else 'start'} year missing")
                continue
            X[i, j] = end - start
    keep, dropped = [], []
    for j, name in enumerate(table.names):
        col = X[:, j]
        obs = col[~np.isnan(col)]
        if obs.size == 0:
            dropped.append((name, "no observed values"))
        elif np.ptp(obs) == 0.0:
            dropped.append((name, "zero variance"))
        else:
            keep.append(j)
    return DesignMatrix(countries=list(table.countries),
                        columns=[table.names[j] for j in keep],
                        X=X[:, keep], dropped=dropped)


def _pairwise_corr(a: np.ndarray, b: np.ndarray) -> float:
    ok = ~(np.isnan(a) | np.isnan(b))
    a, b = a[ok] - a[ok].mean(), b[ok] - b[ok].mean()
    denom = np.sqrt((a @ a) * (b @ b))
    return 0.0 if denom == 0 else float(a @ b / denom)


def drop_collinear(X: DesignMatrix, threshold: float = 0.95) -> DesignMatrix:
    """Greedy collinearity filter.

    Columns are visited left to right; a column is dropped when its absolute
    correlation with an already retained column exceeds ``threshold``.
    Each drop is recorded as ``(name, "collinear with <partner> (r=...)")``.
    """
    retained: list[int] = []
    dropped = list(X.dropped)
    for j in range(X.X.shape[1]):
        for i in retained:
            r = _pairwise_corr(X.X[:, i], X.X[:, j])
            if abs(r) > threshold:
                dropped.append((X.columns[j], f"collinear with {X.columns[i]} (r={r:.4f})"))
                break
        else:
            retained.append(j)
    if not retained:
        logger.warning("collinearity filter removed every column")
    out = X.select([X.columns[j] for j in retained])
    out.dropped = dropped
    return out


def standardize(X: DesignMatrix) -> DesignMatrix:
    """Z-score each column (population sd); stores center/scale for new rows."""
    if X.n_missing:
        raise DataError("standardize requires a complete design matrix")
    center = X.X.mean(axis=0)
    scale = X.X.std(axis=0)
    if np.any(scale == 0):
        bad = [c for c, s in zip(X.columns, scale) if s == 0]
        raise DataError(f"zero-variance column(s) cannot be standardized: {bad}")
    return replace(X, X=(X.X - center) / scale, center=center, scale=scale)


class CollinearityFilter(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`drop_collinear` for array inputs."""

    def __init__(self, threshold=0.95):
        self.threshold = threshold

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=float)
        names = [str(j) for j in range(X.shape[1])]
        kept = drop_collinear(DesignMatrix(list(map(str, range(len(X)))), names, X),
                              self.threshold)
        self.support_ = np.array([n in kept.columns for n in names])
        self.dropped_ = kept.dropped
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "support_")
        X = np.asarray(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        return X[:, self.support_]

    def get_support(self):
        check_is_fitted(self, "support_")
        return self.support_.copy()


def write_design_csv(X: DesignMatrix, path) -> None:
    X.to_frame().to_csv(path, float_format="%.17g")


def read_design_csv(path) -> DesignMatrix:
    frame = pd.read_csv(path, index_col=0)
    return DesignMatrix.from_frame(frame)


def write_outcomes_csv(series: Sequence[OutcomeSeries], path) -> None:
    rows = [(s.country, y, s.group, s.domain, repr(float(v) * 100.0))
            for s in series for y, v in zip(s.years, s.values)]
    pd.DataFrame(rows, columns=list(OUTCOME_COLUMNS)).to_csv(path, index=False)


def panel_arrays(series: Sequence[OutcomeSeries]):
    """Stack logit values into an (n_countries, n_cycles) array."""
    if not series:
        raise DataError("empty series set")
    years = series[0].years
    for s in series:
        if s.years != years:
            raise DataError(f"series for {s.country} has cycles {s.years}, expected {years}")
    Y = np.vstack([s.logit_values for s in series])
    if not np.all(np.isfinite(Y)):
        raise DataError("non-finite logit values")
    return [s.country for s in series], years, Y


def slug(name: str) -> str:
    return "".join(ch if ch.isalnum() else "_" for ch in name).strip("_")


__all__ = [
    "Cycle", "OutcomeSeries", "IndicatorMeta", "IndicatorTable", "DesignMatrix",
    "CollinearityFilter", "logit", "inv_logit", "clamp_proportion", "make_cycles",
    "load_panel", "load_indicator_meta", "read_outcomes", "read_indicators",
    "make_difference_variables", "drop_collinear", "standardize", "select_series",
    "panel_arrays", "write_design_csv", "read_design_csv", "write_outcomes_csv",
]
