"""Forward projection of minimum-proficiency trajectories to future cycles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .exceptions import DataError
from .lgcm import GrowthPosterior, LoadingSpec
from .panel import inv_logit

DEFAULT_LADDER = {2029: 5.0, 2033: 6.0}
PROJECTION_COLUMNS = ("country", "group", "domain", "year", "kind", "mean", "lo95", "hi95")


@dataclass
class ProjectionResult:
    """Percentage-scale trajectory of one country (or ``"ALL"``).

    ``fitted`` and ``forecast`` rows are ``(year, mean, lo95, hi95)``.  Means
    are averages of back-transformed draws; band limits are quantiles of the
    same draws.
    """

    country: str
    group: str
    domain: str
    years: tuple[int, ...]
    history: np.ndarray | None
    fitted: list[tuple[int, float, float, float]]
    forecast: list[tuple[int, float, float, float]]
    change_2009_2033: float | None = None
    draws: dict[int, np.ndarray] = field(repr=False, default_factory=dict)

    def value_at(self, year: int) -> float:
        for y, m, _, _ in self.forecast:
            if y == year:
                return m
        if year in self.years:
            t = self.years.index(year)
            if self.history is not None and np.isfinite(self.history[t]):
                return float(self.history[t])
            return self.fitted[t][1]
        raise DataError(f"year {year} not in history or forecast of {self.country}")

    def to_frame(self) -> pd.DataFrame:
        rows = []
        if self.history is not None:
            rows += [(self.country, self.group, self.domain, y, "observed", float(v), np.nan, np.nan)
                     for y, v in zip(self.years, self.history)]
        rows += [(self.country, self.group, self.domain, y, "fitted", m, lo, hi)
                 for y, m, lo, hi in self.fitted]
        rows += [(self.country, self.group, self.domain, y, "forecast", m, lo, hi)
                 for y, m, lo, hi in self.forecast]
        return pd.DataFrame(rows, columns=list(PROJECTION_COLUMNS))


def _quantiles(x):
    # order statistics, so quantiles commute with the monotone back-transform
    return np.quantile(x, [0.025, 0.975], method="inverted_cdf")


def _band(pct: np.ndarray) -> tuple[float, float, float]:
    lo, hi = _quantiles(pct)
    # summation rounding can push the mean of identical draws past a quantile
    return float(np.clip(pct.mean(), lo, hi)), float(lo), float(hi)


def _future_loadings(years, last_year: int, ladder: Mapping[int, float]) -> list[float]:
    out = []
    for y in years:
        if y <= last_year:
            raise DataError(f"future year {y} is not after the last observed cycle {last_year}")
        if y not in ladder:
            raise DataError(f"no slope loading configured for year {y}")
        out.append(float(ladder[y]))
    return out


def project_country(growth: GrowthPosterior, bma=None, x_country=None, spec: LoadingSpec | None = None,
                    future_cycles: Sequence[int] = (2029, 2033), country: str | int = 0,
                    ladder: Mapping[int, float] | None = None, history=None,
                    group: str = "", domain: str = "", seed: int = 0) -> ProjectionResult:
    """Project one country's trajectory.

    Each retained growth draw contributes one trajectory: the intercept is
    the country's pi0 draw and the future slope is a draw from the BMA
    predictive distribution at ``x_country`` (or, with ``bma=None``, the
    country's own pi1 draw).  Future points sit at ``intercept + slope *
    ladder[year]``; fitted points use the sampled loadings of the growth
    model.  Everything is summarized after ``100 * inv_logit``.

    Parameters
    ----------
    growth : GrowthPosterior
        Usually the unconditional fit of the selected loading model.
    bma : BmaResult, optional
    x_country : array_like, optional
        Standardized predictor row; required when ``bma`` is given.
    country : str or int
        Label or row index in ``growth.countries``.
    ladder : mapping, optional
        Year to slope loading for future cycles; defaults to 2029 -> 5,
        2033 -> 6.
    history : array_like, optional
        Observed percentages, one per growth cycle.
    """
    spec = spec or growth.spec
    if spec.n_cycles != len(growth.years):
        raise DataError(f"loading spec has {spec.n_cycles} cycles, growth fit has {len(growth.years)}")
    i = country if isinstance(country, (int, np.integer)) else growth.countries.index(country)
    label = growth.countries[i]
    ladder = dict(DEFAULT_LADDER if ladder is None else ladder)
    future = [int(y) for y in future_cycles]
    lam_future = _future_loadings(future, growth.years[-1], ladder)

    pi0 = growth.intercept_draws()[:, i]
    own_slope = growth.slope_draws()[:, i]
    S = pi0.size
    if bma is None:
        slope = own_slope
    else:
        if x_country is None:
            raise DataError("x_country is required with a BMA result")
        rng = np.random.default_rng(seed)
        slope = bma.sample_predictive(x_country, S, rng)

    lam = growth.loading_draws()
    fitted, draws = [], {}
    for t, y in enumerate(growth.years):
        pct = 100.0 * inv_logit(pi0 + own_slope * lam[:, t])
        fitted.append((y,) + _band(pct))
        draws[y] = pct
    forecast = []
    for y, lf in zip(future, lam_future):
        pct = 100.0 * inv_logit(pi0 + slope * lf)
        forecast.append((y,) + _band(pct))
        draws[y] = pct

    if history is not None:
        history = np.asarray(history, dtype=float)
        if history.shape != (len(growth.years),):
            raise DataError(f"history has {history.size} values, expected {len(growth.years)}")
    result = ProjectionResult(label, group, domain, tuple(growth.years), history, fitted, forecast,
                              draws=draws)
    if growth.years[0] == 2009 and 2033 in future:
        result.change_2009_2033 = result.value_at(2033) - result.value_at(2009)
    return result


def project_overall(per_country: Sequence[ProjectionResult]) -> ProjectionResult:
    """Unweighted cross-country mean trajectory with pooled-draw bands."""
    if not per_country:
        raise DataError("project_overall needs at least one country")
    first = per_country[0]
    if len(per_country) == 1:
        return replace(first)
    f_years = [y for y, *_ in first.forecast]
    for r in per_country[1:]:
        if r.years != first.years or [y for y, *_ in r.forecast] != f_years:
            raise DataError(f"cycle sets differ between {first.country} and {r.country}")

    def pooled(rows_of, years):
        out = []
        for k, y in enumerate(years):
            mean = float(np.mean([rows_of(r)[k][1] for r in per_country]))
            allv = np.concatenate([r.draws[y] for r in per_country])
            lo, hi = _quantiles(allv)
            out.append((y, float(np.clip(mean, lo, hi)), float(lo), float(hi)))
        return out

    hist = None
    if all(r.history is not None for r in per_country):
        hist = np.mean([r.history for r in per_country], axis=0)
    draws = {y: np.concatenate([r.draws[y] for r in per_country])
             for y in list(first.years) + f_years}
    result = ProjectionResult("ALL", first.group, first.domain, first.years, hist,
                              pooled(lambda r: r.fitted, first.years),
                              pooled(lambda r: r.forecast, f_years), draws=draws)
    if first.change_2009_2033 is not None:
        result.change_2009_2033 = result.value_at(2033) - result.value_at(2009)
    return result


def change_table(results: Sequence[ProjectionResult], base_year: int, target_year: int) -> pd.DataFrame:
    """Base, target and change per result, exact and rounded to integers.

    The rounded change is the difference of the rounded levels, so each
    presentation row is internally consistent.
    """
    rows = []
    for r in results:
        base, target = r.value_at(base_year), r.value_at(target_year)
        rb, rt = int(round(base)), int(round(target))
        rows.append({"country": r.country, "group": r.group, "domain": r.domain,
                     "base_year": base_year, "target_year": target_year,
                     "base": base, "target": target, "change": target - base,
                     "base_rounded": rb, "target_rounded": rt, "change_rounded": rt - rb})
    return pd.DataFrame(rows)


def write_projection_csv(results: Sequence[ProjectionResult], path) -> None:
    frame = pd.concat([r.to_frame() for r in results], ignore_index=True)
    frame.to_csv(path, index=False, float_format="%.10g")


# ---------------------------------------------------------------------------
# plots
# ---------------------------------------------------------------------------

def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    matplotlib.rcParams["svg.hashsalt"] = "minprof"
    return plt


def _save_svg(fig, path, note: str = "") -> None:
    meta = {"Date": None}
    if note:
        meta["Description"] = note
    fig.savefig(path, format="svg", metadata=meta)


def plot_trajectory(result: ProjectionResult, path) -> None:
    """History as a solid line, forecast dashed inside a shaded 95% band."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    yrs = list(result.years)
    if result.history is not None:
        ax.plot(yrs, result.history, "o-", color="C0", label="observed")
    fit_mean = [m for _, m, _, _ in result.fitted]
    ax.plot(yrs, fit_mean, "-", color="C1", alpha=0.7, label="fitted")
    fy = [yrs[-1]] + [y for y, *_ in result.forecast]
    fm = [fit_mean[-1]] + [m for _, m, _, _ in result.forecast]
    lo = [result.fitted[-1][2]] + [v for _, _, v, _ in result.forecast]
    hi = [result.fitted[-1][3]] + [v for _, _, _, v in result.forecast]
    ax.plot(fy, fm, "--", color="C1", label="forecast")
    ax.fill_between(fy, lo, hi, color="C1", alpha=0.2, label="95% band")
    ax.set_ylim(0, 100)
    ax.set_xlabel("year")
    ax.set_ylabel("% at or above minimum proficiency")
    ax.set_title(f"{result.country} {result.group} {result.domain}".strip())
    ax.legend(loc="lower left", fontsize=8)
    note = "band: quantiles of pooled country draws" if result.country == "ALL" else \
        "band: 2.5% and 97.5% posterior predictive quantiles"
    _save_svg(fig, path, note)
    plt.close(fig)


def plot_density(curve, unconditional_draws, path, title: str = "") -> None:
    """BMA predictive density of a slope against its unconditional posterior."""
    from scipy import stats
    plt = _pyplot()
    u = np.asarray(unconditional_draws, dtype=float).ravel()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(curve.grid, curve.density, color="C0", label="BMA predictive")
    sd = u.std(ddof=1)
    if sd > 0 and math.isfinite(sd):
        grid = np.linspace(min(curve.grid[0], u.mean() - 4 * sd),
                           max(curve.grid[-1], u.mean() + 4 * sd), 512)
        ax.plot(grid, stats.norm.pdf(grid, u.mean(), sd), color="C1", ls="--",
                label="unconditional")
    for v in (curve.lo95, curve.hi95):
        ax.axvline(v, color="C0", ls=":", lw=1)
    ax.axvline(curve.expected, color="C0", lw=1)
    if curve.observed is not None:
        ax.axvline(curve.observed, color="k", lw=1, label="estimated slope")
    ax.set_xlabel("rate of progress (logit per cycle)")
    ax.set_ylabel("density")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    _save_svg(fig, path)
    plt.close(fig)
