"""Predictive scoring: KL divergence, log predictive score and PSIS-LOO."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from .exceptions import DataError

DENSITY_FLOOR = 1e-12
TAIL_FRACTION = 0.2
K_WARN = 0.7
UNDERFLOW_LOG = -700.0


def kld_gaussian(f_mean, f_sd, g_mean, g_sd) -> float:
    """KL(f || g) for univariate normals f = N(f_mean, f_sd^2), g = N(g_mean, g_sd^2)."""
    if f_sd <= 0 or g_sd <= 0:
        raise ValueError("standard deviations must be positive")
    return float(math.log(g_sd / f_sd)
                 + (f_sd ** 2 + (f_mean - g_mean) ** 2) / (2.0 * g_sd ** 2) - 0.5)


def kld_samples(f_draws, g_draws, n_grid: int = 512) -> float:
    """KL(f || g) from two samples via Gaussian KDEs on a shared grid.

    Both densities are floored at 1e-12 and renormalized on the grid; the
    trapezoid estimate is clamped at zero.
    """
    f = np.asarray(f_draws, dtype=float).ravel()
    g = np.asarray(g_draws, dtype=float).ravel()
    if f.size < 100 or g.size < 100:
        raise DataError("kld_samples needs at least 100 draws from each distribution")
    kf = stats.gaussian_kde(f)
    kg = stats.gaussian_kde(g)
    pad = 4.0 * max(math.sqrt(kf.covariance[0, 0]), math.sqrt(kg.covariance[0, 0]))
    lo = min(f.min(), g.min()) - pad
    hi = max(f.max(), g.max()) + pad
    grid = np.linspace(lo, hi, n_grid)
    pf = np.maximum(kf(grid), DENSITY_FLOOR)
    pg = np.maximum(kg(grid), DENSITY_FLOOR)
    pf /= np.trapezoid(pf, grid)
    pg /= np.trapezoid(pg, grid)
    return max(0.0, float(np.trapezoid(pf * np.log(pf / pg), grid)))


def log_predictive_score(pred_mean, pred_sd, observed) -> float:
    """Negative log density of ``observed`` under N(pred_mean, pred_sd^2)."""
    if pred_sd <= 0:
        raise ValueError("pred_sd must be positive")
    z = (observed - pred_mean) / pred_sd
    return float(0.5 * z * z + math.log(pred_sd) + 0.5 * math.log(2.0 * math.pi))


# ---------------------------------------------------------------------------
# generalized Pareto tail fit
# ---------------------------------------------------------------------------

def gpd_fit(x) -> tuple[float, float]:
    """Estimate (k, sigma) of a zero-location generalized Pareto sample.

    Empirical-Bayes estimator of Zhang and Stephens (2009): a grid of
    candidate values of theta = -k/sigma weighted by profile likelihood.
    """
    x = np.sort(np.asarray(x, dtype=float))
    n = x.size
    m = 30 + int(math.sqrt(n))
    j = np.arange(1, m + 1, dtype=float)
    quartile = x[max(int(n / 4.0 + 0.5) - 1, 0)]
    if quartile <= 0 or x[-1] <= 0:
        return float("nan"), float("nan")
    theta = 1.0 / x[-1] + (1.0 - np.sqrt(m / (j - 0.5))) / (3.0 * quartile)
    k = np.mean(np.log1p(-theta[:, None] * x[None, :]), axis=1)
    loglik = n * (np.log(-theta / k) - k - 1.0)
    w = np.exp(loglik - logsumexp(loglik))
    theta_hat = float(w @ theta)
    k_hat = float(np.mean(np.log1p(-theta_hat * x)))
    return k_hat, -k_hat / theta_hat


def gpd_quantile(p, k: float, sigma: float):
    p = np.asarray(p, dtype=float)
    if abs(k) < 1e-12:
        return -sigma * np.log1p(-p)
    return sigma * np.expm1(-k * np.log1p(-p)) / k


def psis_smooth(log_ratios: np.ndarray) -> tuple[np.ndarray, float]:
    """Pareto-smooth one vector of log importance ratios.

    The largest 20% of ratios are replaced by expected order statistics of a
    generalized Pareto fit above the tail cutoff, then every weight is
    truncated at S^(3/4) times the mean weight.  Returns log weights and the
    shape estimate k-hat: NaN when the ratios are constant or tied, inf when
    the tail is too wide to represent.
    """
    lw = np.asarray(log_ratios, dtype=float).copy()
    S = lw.size
    lw -= lw.max()
    M = int(math.ceil(TAIL_FRACTION * S))
    order = np.argsort(lw, kind="stable")
    tail_idx = order[-M:]
    cutoff = lw[order[-M - 1]]
    k_hat = float("nan")
    if np.ptp(lw) > 0 and M >= 5:
        exceed = np.exp(lw[tail_idx]) - math.exp(cutoff)
        if cutoff < UNDERFLOW_LOG:
            # the tail spans more than the float range: far beyond any usable k
            k_hat = math.inf
        elif np.ptp(exceed) > 0:
            k_hat, sigma = gpd_fit(exceed)
            if np.isfinite(k_hat):
                probs = (np.arange(1, M + 1) - 0.5) / M
                smoothed = math.exp(cutoff) + gpd_quantile(probs, k_hat, sigma)
                lw[tail_idx] = np.log(np.minimum(smoothed, 1.0))
    log_cap = 0.75 * math.log(S) + logsumexp(lw) - math.log(S)
    lw = np.minimum(lw, log_cap)
    return lw, k_hat


@dataclass
class LooResult:
    elpd_loo: float
    loo_ic: float
    pointwise: np.ndarray
    pareto_k: np.ndarray
    n_bad_k: int
    scale: str = "logit"

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["pointwise"] = [float(v) for v in self.pointwise]
        doc["pareto_k"] = [None if not np.isfinite(v) else float(v) for v in self.pareto_k]
        return doc

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def psis_loo(log_lik, min_draws: int = 1000, scale: str = "logit") -> LooResult:
    """Leave-one-out expected log predictive density by Pareto-smoothed IS.

    Parameters
    ----------
    log_lik : array_like, shape (S, n)
        Pointwise log-likelihood of each of n observations at S posterior
        draws.

    Returns
    -------
    LooResult
        ``loo_ic = -2 * elpd_loo``; observations with k-hat > 0.7 are counted
        in ``n_bad_k`` but kept.
    """
    ll = np.asarray(log_lik, dtype=float)
    if ll.ndim != 2:
        raise DataError("log_lik must be a (draws, observations) matrix")
    if ll.shape[0] < min_draws:
        raise DataError(f"psis_loo needs at least {min_draws} draws, got {ll.shape[0]}")
    if not np.all(np.isfinite(ll)):
        raise DataError("log_lik has non-finite entries")
    n = ll.shape[1]
    elpd = np.empty(n)
    khat = np.empty(n)
    for i in range(n):
        lw, khat[i] = psis_smooth(-ll[:, i])
        elpd[i] = logsumexp(lw + ll[:, i]) - logsumexp(lw)
    total = float(elpd.sum())
    return LooResult(elpd_loo=total, loo_ic=-2.0 * total, pointwise=elpd, pareto_k=khat,
                     n_bad_k=int(np.sum(khat > K_WARN)), scale=scale)
