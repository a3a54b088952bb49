"""Bayesian hierarchical latent growth curve model on logit-scale panels.

Within country ``i``::

    y_i = L @ eta_i + e_i,        e_i ~ N(0, diag(resid_sd**2))

where ``L = [1, lambda]`` is the T x 2 basis (intercept column and slope
loadings) and ``eta_i = (pi0_i, pi1_i)``.  Between countries::

    eta_i ~ N(Gamma @ x_i, Sigma_eta),   x_i = (1, predictors...)
    vec(Gamma) ~ N(Omega, Sigma_Gamma),  Sigma_eta ~ IW(R_eta, nu_eta)
    resid_sd[t] ~ half-Cauchy(loc, scale)

Sampling is Gibbs for eta, Gamma, Sigma_eta and the free loadings, and
slice sampling (on log scale) for each residual sd.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd
from scipy import stats
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .diagnostics import ess, split_rhat
from .exceptions import DataError, NumericalError
from .panel import DesignMatrix, OutcomeSeries, inv_logit, panel_arrays

logger = logging.getLogger(__name__)

RHAT_WARN = 1.1
# residual sds below this are numerically indistinguishable from an exact fit;
# without a floor the collapsed likelihood of noiseless data is unbounded
RESID_SD_FLOOR = 1e-6


# ---------------------------------------------------------------------------
# configuration types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LoadingSpec:
    """Slope loadings with a fixed/free flag per cycle.

    ``values`` holds the fixed loadings; for free entries it holds the
    linear-ladder value used as prior mean and starting point.
    """

    values: tuple[float, ...]
    free: tuple[bool, ...]
    label: str = "custom"

    def __post_init__(self):
        if len(self.values) != len(self.free):
            raise ValueError("values and free must have the same length")
        fixed = [v for v, f in zip(self.values, self.free) if not f]
        if len(fixed) < 2:
            raise ValueError("at least two slope loadings must be fixed for identification")
        if any(b <= a for a, b in zip(fixed, fixed[1:])):
            raise ValueError("fixed loadings must be strictly increasing")

    @property
    def n_cycles(self) -> int:
        return len(self.values)

    @property
    def free_index(self) -> np.ndarray:
        return np.flatnonzero(self.free)

    @classmethod
    def linear(cls, n_cycles: int = 5, free: Sequence[int] = (), label: str = "custom"):
        free_set = {int(t) % n_cycles for t in free}
        return cls(values=tuple(float(t) for t in range(n_cycles)),
                   free=tuple(t in free_set for t in range(n_cycles)), label=label)

    @classmethod
    def from_label(cls, label: str, n_cycles: int = 5, free: Sequence[int] | None = None):
        """M0: all fixed; M1: last free; M2: last two free (override via ``free``)."""
        key = label.upper()
        defaults = {"M0": (), "M1": (-1,), "M2": (-2, -1)}
        if key not in defaults:
            raise ValueError(f"unknown loading model {label!r}; expected M0, M1 or M2")
        return cls.linear(n_cycles, defaults[key] if free is None else free, label=key)


@dataclass(frozen=True)
class GrowthPriors:
    """Hyperparameters.

    ``gamma_mean`` and ``gamma_cov`` apply to vec(Gamma) in column-major
    order, i.e. (beta_00, beta_10, beta_01, beta_11, ...).  Scalars broadcast
    (``gamma_cov`` scalar means that multiple of the identity).  ``eta_df``
    defaults to dim(eta) + 2.
    """

    gamma_mean: float | np.ndarray = 0.0
    gamma_cov: float | np.ndarray = 100.0
    resid_loc: float = 0.0
    resid_scale: float = 2.5
    eta_scale: np.ndarray | None = None
    eta_df: float | None = None
    loading_sd: float = 10.0

    def resolve(self, n_coef: int):
        k = 2 * n_coef
        mean = np.broadcast_to(np.asarray(self.gamma_mean, dtype=float), (k,)).copy()
        cov = np.asarray(self.gamma_cov, dtype=float)
        cov = cov * np.eye(k) if cov.ndim == 0 else cov
        if cov.shape != (k, k) or not np.allclose(cov, cov.T):
            raise ValueError("gamma_cov must be symmetric with shape (2K, 2K)")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ValueError("gamma_cov must be positive definite") from None
        R = np.eye(2) if self.eta_scale is None else np.asarray(self.eta_scale, dtype=float)
        nu = 4.0 if self.eta_df is None else float(self.eta_df)
        if nu < 2:
            raise ValueError("eta_df must be at least the dimension of Sigma_eta (2)")
        if self.resid_scale <= 0:
            raise ValueError("resid_scale must be positive")
        return mean, cov, R, nu


@dataclass(frozen=True)
class McmcConfig:
    n_chains: int = 4
    n_iter: int = 10_000
    burn_in: int = 5_000
    thin: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_iter <= self.burn_in or self.burn_in < 0:
            raise ValueError("need n_iter > burn_in >= 0")
        if self.thin < 1 or self.n_chains < 1:
            raise ValueError("thin and n_chains must be positive")


# ---------------------------------------------------------------------------
# posterior container
# ---------------------------------------------------------------------------

@dataclass
class GrowthPosterior:
    """Retained draws, shape (chains, draws, ...) per block."""

    countries: list[str]
    years: tuple[int, ...]
    spec: LoadingSpec
    predictors: list[str]
    eta: np.ndarray            # (C, S, n, 2)
    gamma: np.ndarray          # (C, S, 2, K)
    sigma_eta: np.ndarray      # (C, S, 2, 2)
    resid_sd: np.ndarray       # (C, S, T)
    loadings: np.ndarray       # (C, S, T)
    Y: np.ndarray = field(repr=False, default=None)
    Xd: np.ndarray = field(repr=False, default=None)
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_chains(self) -> int:
        return self.eta.shape[0]

    @property
    def n_draws(self) -> int:
        return self.eta.shape[0] * self.eta.shape[1]

    def scalar_draws(self) -> dict[str, np.ndarray]:
        """Monitored scalar parameters as (chains, draws) arrays."""
        out = {}
        names = ["0"] + [str(q + 1) for q in range(len(self.predictors))]
        for k, nm in enumerate(names):
            out[f"beta_0{nm}"] = self.gamma[:, :, 0, k]
            out[f"beta_1{nm}"] = self.gamma[:, :, 1, k]
        out["sigma2_eta0"] = self.sigma_eta[:, :, 0, 0]
        out["sigma_eta1eta0"] = self.sigma_eta[:, :, 1, 0]
        out["sigma2_eta1"] = self.sigma_eta[:, :, 1, 1]
        for t, y in enumerate(self.years):
            out[f"resid_sd[{y}]"] = self.resid_sd[:, :, t]
        for t in self.spec.free_index:
            out[f"lambda[{self.years[t]}]"] = self.loadings[:, :, t]
        return out

    def flat(self, name: str) -> np.ndarray:
        return self.scalar_draws()[name].reshape(-1)

    def slope_draws(self) -> np.ndarray:
        """pi1 draws, (total draws, n countries)."""
        return self.eta[..., 1].reshape(-1, len(self.countries))

    def intercept_draws(self) -> np.ndarray:
        return self.eta[..., 0].reshape(-1, len(self.countries))

    def loading_draws(self) -> np.ndarray:
        return self.loadings.reshape(-1, self.loadings.shape[-1])

    def summary(self, include_countries: bool = False) -> pd.DataFrame:
        draws = self.scalar_draws()
        if include_countries:
            for i, c in enumerate(self.countries):
                draws[f"pi0[{c}]"] = self.eta[:, :, i, 0]
                draws[f"pi1[{c}]"] = self.eta[:, :, i, 1]
        rows = []
        for name, d in draws.items():
            flat = d.reshape(-1)
            diag = self.diagnostics.get(name) or {"rhat": split_rhat(d), "ess": ess(d)}
            lo, hi = np.quantile(flat, [0.025, 0.975])
            rows.append({"parameter": name, "mean": flat.mean(), "sd": flat.std(ddof=1),
                         "lo95": lo, "hi95": hi, "rhat": diag["rhat"], "ess": diag["ess"]})
        return pd.DataFrame(rows)

    def percent_table(self) -> dict:
        """Starting percentage and rate of progress in percentage points.

        The rate is the change implied by one unit of slope loading at the
        grand-mean starting level: 100 * (inv_logit(b00 + b10) - inv_logit(b00)).
        """
        b00 = self.flat("beta_00")
        b10 = self.flat("beta_10")
        start = 100.0 * inv_logit(b00)
        rate = 100.0 * (inv_logit(b00 + b10) - inv_logit(b00))

        def summ(x):
            lo, hi = np.quantile(x, [0.025, 0.975])
            return {"mean": float(x.mean()), "lo95": float(lo), "hi95": float(hi)}

        return {"start_pct": summ(start), "rate_pct": summ(rate)}

    @property
    def converged(self) -> bool:
        return all(d["rhat"] <= RHAT_WARN for d in self.diagnostics.values()
                   if np.isfinite(d["rhat"]))

    def to_csv(self, path) -> None:
        """Flat export with columns chain,iter,parameter,value."""
        draws = self.scalar_draws()
        for i, c in enumerate(self.countries):
            draws[f"pi0[{c}]"] = self.eta[:, :, i, 0]
            draws[f"pi1[{c}]"] = self.eta[:, :, i, 1]
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("chain,iter,parameter,value\n")
            for name, d in draws.items():
                label = f'"{name}"' if "," in name else name
                for ch in range(d.shape[0]):
                    fh.writelines(f"{ch},{it},{label},{v!r}\n"
                                  for it, v in enumerate(d[ch].tolist()))

    def to_json(self, path) -> None:
        summ = self.summary()
        doc = {
            "model": self.spec.label,
            "years": list(self.years),
            "loadings": {"values": list(self.spec.values), "free": list(self.spec.free)},
            "n_chains": self.n_chains,
            "n_draws": self.n_draws,
            "converged": self.converged,
            "scale": "logit",
            "parameters": {r["parameter"]: {k: _num(r[k]) for k in
                                            ("mean", "sd", "lo95", "hi95", "rhat", "ess")}
                           for r in summ.to_dict("records")},
            "percent": self.percent_table(),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")

    def save(self, path) -> None:
        np.savez_compressed(
            path, eta=self.eta, gamma=self.gamma, sigma_eta=self.sigma_eta,
            resid_sd=self.resid_sd, loadings=self.loadings, Y=self.Y, Xd=self.Xd,
            countries=np.array(self.countries), years=np.array(self.years),
            predictors=np.array(self.predictors, dtype=str),
            spec_values=np.array(self.spec.values), spec_free=np.array(self.spec.free),
            spec_label=np.array(self.spec.label))

    @classmethod
    def load(cls, path) -> "GrowthPosterior":
        with np.load(path, allow_pickle=False) as z:
            spec = LoadingSpec(tuple(z["spec_values"].tolist()), tuple(z["spec_free"].tolist()),
                               str(z["spec_label"]))
            post = cls(countries=z["countries"].tolist(), years=tuple(z["years"].tolist()),
                       spec=spec, predictors=z["predictors"].tolist(), eta=z["eta"],
                       gamma=z["gamma"], sigma_eta=z["sigma_eta"], resid_sd=z["resid_sd"],
                       loadings=z["loadings"], Y=z["Y"], Xd=z["Xd"])
        post.diagnostics = _diagnose(post)
        return post


def _num(v):
    v = float(v)
    return v if math.isfinite(v) else None


# ---------------------------------------------------------------------------
# sampler
# ---------------------------------------------------------------------------

def _slice_log_sd(logp, x0: float, rng, width: float = 1.0, max_steps: int = 50) -> float:
    """One stepping-out slice update of a scalar on the log scale."""
    f0 = logp(x0)
    level = f0 + math.log(rng.random())
    left = x0 - width * rng.random()
    right = left + width
    j = int(rng.integers(max_steps))
    k = max_steps - 1 - j
    while j > 0 and logp(left) > level:
        left -= width
        j -= 1
    while k > 0 and logp(right) > level:
        right += width
        k -= 1
    while True:
        x1 = left + (right - left) * rng.random()
        if logp(x1) > level:
            return x1
        if x1 < x0:
            left = x1
        else:
            right = x1
        if right - left < 1e-14:
            return x0


def _chol_draw(prec: np.ndarray, rhs: np.ndarray, rng) -> np.ndarray:
    """Draw from N(prec^-1 rhs, prec^-1)."""
    try:
        U = np.linalg.cholesky(prec)
    except np.linalg.LinAlgError:
        jitter = 1e-10 * np.trace(prec) / len(prec)
        logger.warning("non-positive-definite precision; adding jitter %.3g", jitter)
        U = np.linalg.cholesky(prec + jitter * np.eye(len(prec)))
    mean = np.linalg.solve(U.T, np.linalg.solve(U, rhs))
    return mean + np.linalg.solve(U.T, rng.standard_normal(len(rhs)))


def _draw_inv_wishart(df: float, scale: np.ndarray, rng) -> np.ndarray:
    S = stats.invwishart.rvs(df=df, scale=scale, random_state=rng)
    S = 0.5 * (S + S.T)
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        logger.warning("inverse-Wishart draw not positive definite; jittering")
        S = S + 1e-10 * np.trace(S) * np.eye(len(S))
    return S


def _collapsed_logp(sd, t, C, L, sig_inv, logdet_sig, n, loc, scale):
    """Log posterior of log(resid_sd[t]) with growth factors integrated out.

    Uses the Woodbury identity on cov = D + L Sigma L'; ``C`` is R'R for the
    residuals R = Y - M about the population mean trajectories.
    """
    w = 1.0 / sd ** 2
    diagC = np.diag(C).copy()

    def logp(u):
        s = math.exp(u)
        if s <= loc or s < RESID_SD_FLOOR:
            return -math.inf
        w[t] = math.exp(-2.0 * u)
        M = L * w[:, None]
        A = sig_inv + L.T @ M
        a, b, d = A[0, 0], A[0, 1], A[1, 1]
        det = a * d - b * b
        if not det > 0:
            return -math.inf
        G = M.T @ C @ M
        tr = (d * G[0, 0] - 2.0 * b * G[0, 1] + a * G[1, 1]) / det
        quad = float(w @ diagC) - tr
        logdet = -float(np.log(w).sum()) + math.log(det) + logdet_sig
        z = (s - loc) / scale
        return -0.5 * quad - 0.5 * n * logdet - math.log1p(z * z) + u

    return logp


def _initial_state(Y, Xd, lam, rng, jitter: float):
    n, T = Y.shape
    L = np.column_stack([np.ones(T), lam])
    eta = np.linalg.lstsq(L, Y.T, rcond=None)[0].T
    eta = eta + jitter * rng.standard_normal(eta.shape) * (eta.std(axis=0) + 1e-3)
    gamma = np.linalg.lstsq(Xd, eta, rcond=None)[0].T
    E = eta - Xd @ gamma.T
    sig = np.cov(E.T) + 1e-2 * np.eye(2) if n > 2 else np.eye(2) * 0.1
    resid = Y - eta @ L.T
    sd = np.maximum(np.sqrt((resid ** 2).mean(axis=0)), 1e-4 + RESID_SD_FLOOR)
    return eta, gamma, sig, sd


def _run_chain(Y, Xd, spec: LoadingSpec, priors: GrowthPriors, n_iter, burn_in, thin, rng,
               jitter: float = 0.1):
    n, T = Y.shape
    K = Xd.shape[1]
    g_mean, g_cov, R, nu = priors.resolve(K)
    g_prec = np.linalg.inv(g_cov)
    g_prec_mean = g_prec @ g_mean
    XtX = Xd.T @ Xd
    lam = np.array(spec.values, dtype=float)
    free = spec.free_index
    lam_prior_mean = lam.copy()
    eta, gamma, sig, sd = _initial_state(Y, Xd, lam, rng, jitter)
    loc, scale = priors.resid_loc, priors.resid_scale

    n_keep = len(range(burn_in, n_iter, thin))
    out_eta = np.empty((n_keep, n, 2))
    out_gamma = np.empty((n_keep, 2, K))
    out_sig = np.empty((n_keep, 2, 2))
    out_sd = np.empty((n_keep, T))
    out_lam = np.empty((n_keep, T))
    keep = 0
    for it in range(n_iter):
        L = np.column_stack([np.ones(T), lam])
        sig_inv = np.linalg.inv(sig)

        # residual sds | Gamma, Sigma_eta, loadings with eta integrated out,
        # then eta | everything (a joint draw of (resid_sd, eta))
        R0 = Y - (Xd @ gamma.T) @ L.T
        C = R0.T @ R0
        logdet_sig = math.log(np.linalg.det(sig))
        for t in range(T):
            sd[t] = math.exp(_slice_log_sd(
                _collapsed_logp(sd, t, C, L, sig_inv, logdet_sig, n, loc, scale),
                math.log(sd[t]), rng))

        # eta_i | rest
        Dinv = 1.0 / sd ** 2
        prec = L.T @ (Dinv[:, None] * L) + sig_inv
        cov = np.linalg.inv(prec)
        cov = 0.5 * (cov + cov.T)
        B = (Y * Dinv) @ L + (Xd @ gamma.T) @ sig_inv
        mean = B @ cov
        chol = np.linalg.cholesky(cov)
        eta = mean + rng.standard_normal((n, 2)) @ chol.T

        # vec(Gamma) | eta, Sigma_eta   (column-major vec)
        prec_g = g_prec + np.kron(XtX, sig_inv)
        rhs_g = g_prec_mean + (sig_inv @ eta.T @ Xd).reshape(-1, order="F")
        gamma = _chol_draw(prec_g, rhs_g, rng).reshape((2, K), order="F")

        # Sigma_eta | eta, Gamma
        E = eta - Xd @ gamma.T
        sig = _draw_inv_wishart(nu + n, R + E.T @ E, rng)

        # free loadings | rest (conjugate normal)
        for t in free:
            r = Y[:, t] - eta[:, 0]
            p = (eta[:, 1] @ eta[:, 1]) / sd[t] ** 2 + 1.0 / priors.loading_sd ** 2
            m = ((eta[:, 1] @ r) / sd[t] ** 2 + lam_prior_mean[t] / priors.loading_sd ** 2) / p
            lam[t] = m + rng.standard_normal() / math.sqrt(p)

        if it >= burn_in and (it - burn_in) % thin == 0:
            out_eta[keep] = eta
            out_gamma[keep] = gamma
            out_sig[keep] = sig
            out_sd[keep] = sd
            out_lam[keep] = lam
            keep += 1
    return out_eta, out_gamma, out_sig, out_sd, out_lam


def _diagnose(post: GrowthPosterior) -> dict:
    diag = {}
    for name, d in post.scalar_draws().items():
        diag[name] = {"rhat": split_rhat(d), "ess": ess(d)}
    bad = [k for k, v in diag.items() if np.isfinite(v["rhat"]) and v["rhat"] > RHAT_WARN]
    if bad:
        logger.warning("R-hat above %.2f for %s", RHAT_WARN, ", ".join(bad))
    return diag


def _design(X, countries, n) -> tuple[np.ndarray, list[str]]:
    if X is None:
        return np.ones((n, 1)), []
    if isinstance(X, DesignMatrix):
        if list(X.countries) != list(countries):
            raise DataError("design matrix rows do not align with series countries")
        if X.n_missing:
            raise DataError("design matrix has missing cells; impute first")
        names, Xv = list(X.columns), X.X
    else:
        Xv = np.asarray(X, dtype=float)
        names = [f"x{q + 1}" for q in range(Xv.shape[1])]
    if Xv.shape[0] != n:
        raise DataError(f"design matrix has {Xv.shape[0]} rows for {n} countries")
    return np.column_stack([np.ones(n), Xv]), names


def fit_panel(Y, X=None, spec: LoadingSpec | None = None, priors: GrowthPriors | None = None,
              mcmc: McmcConfig | None = None, countries=None, years=None) -> GrowthPosterior:
    """Fit the growth model to an (n_countries, n_cycles) logit array."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or not np.all(np.isfinite(Y)):
        raise DataError("Y must be a finite 2-D array")
    n, T = Y.shape
    spec = spec or LoadingSpec.from_label("M0", T)
    if spec.n_cycles != T:
        raise DataError(f"loading spec has {spec.n_cycles} cycles, panel has {T}")
    priors = priors or GrowthPriors()
    mcmc = mcmc or McmcConfig()
    countries = list(countries) if countries is not None else [str(i) for i in range(n)]
    years = tuple(years) if years is not None else tuple(range(T))
    Xd, names = _design(X, countries, n)
    seeds = np.random.SeedSequence(mcmc.seed).spawn(mcmc.n_chains)
    chains = [_run_chain(Y, Xd, spec, priors, mcmc.n_iter, mcmc.burn_in, mcmc.thin,
                         np.random.default_rng(s)) for s in seeds]
    eta, gamma, sig, sd, lam = (np.stack(block) for block in zip(*chains))
    if not np.all(np.isfinite(eta)):
        raise NumericalError("sampler produced non-finite draws")
    post = GrowthPosterior(countries=countries, years=years, spec=spec, predictors=names,
                           eta=eta, gamma=gamma, sigma_eta=sig, resid_sd=sd, loadings=lam,
                           Y=Y, Xd=Xd)
    post.diagnostics = _diagnose(post)
    return post


def fit_growth(series_set: Sequence[OutcomeSeries], X=None, spec: LoadingSpec | None = None,
               priors: GrowthPriors | None = None, mcmc: McmcConfig | None = None) -> GrowthPosterior:
    """Fit the hierarchical growth model to one group x domain panel.

    Parameters
    ----------
    series_set : sequence of OutcomeSeries
        One series per country, all sharing the same cycles.
    X : DesignMatrix or array, optional
        Country-level predictors (rows aligned with ``series_set``).  When
        absent the between-country model reduces to grand means.
    spec : LoadingSpec
        Slope basis; defaults to the linear M0 ladder.
    priors, mcmc : optional
        Defaults are :class:`GrowthPriors` and :class:`McmcConfig`.
    """
    countries, years, Y = panel_arrays(list(series_set))
    return fit_panel(Y, X, spec, priors, mcmc, countries=countries, years=years)


def unconditional_growth(series_set, spec=None, priors=None, mcmc=None) -> GrowthPosterior:
    return fit_growth(series_set, None, spec, priors, mcmc)


def posterior_slopes(post: GrowthPosterior) -> pd.DataFrame:
    """Per-country posterior summary of the slope (rate of progress)."""
    d = post.slope_draws()
    lo, hi = np.quantile(d, [0.025, 0.975], axis=0)
    return pd.DataFrame({"country": post.countries, "mean": d.mean(axis=0),
                         "sd": d.std(axis=0, ddof=1), "lo95": lo, "hi95": hi})


def pointwise_log_lik(post: GrowthPosterior, max_draws: int | None = None) -> np.ndarray:
    """Per-country log-likelihood with the country's growth factors integrated out.

    Returns an (S, n) array whose column i is, for each retained draw,
    ``log N(y_i | L Gamma x_i, L Sigma_eta L' + diag(resid_sd**2))``.
    """
    lam = post.loading_draws()
    gam = post.gamma.reshape(-1, 2, post.gamma.shape[-1])
    sig = post.sigma_eta.reshape(-1, 2, 2)
    sd = post.resid_sd.reshape(-1, post.resid_sd.shape[-1])
    if max_draws is not None and len(lam) > max_draws:
        idx = np.linspace(0, len(lam) - 1, max_draws).round().astype(int)
        lam, gam, sig, sd = lam[idx], gam[idx], sig[idx], sd[idx]
    S, T = lam.shape
    L = np.stack([np.ones((S, T)), lam], axis=-1)                    # (S, T, 2)
    cov = L @ sig @ L.transpose(0, 2, 1)
    cov[:, np.arange(T), np.arange(T)] += sd ** 2
    chol = np.linalg.cholesky(cov)                                   # (S, T, T)
    mu = np.einsum("stk,skp,np->snt", L, gam, post.Xd)               # (S, n, T)
    resid = post.Y[None] - mu
    z = np.linalg.solve(chol[:, None], resid[..., None])[..., 0]     # (S, n, T)
    logdet = np.log(np.diagonal(chol, axis1=1, axis2=2)).sum(axis=1)
    return -0.5 * (z ** 2).sum(axis=-1) - logdet[:, None] - 0.5 * T * math.log(2 * math.pi)


def simulate_panel(n_countries=50, n_cycles=5, beta00=0.8, beta10=-0.05, eta_sd=(0.4, 0.05),
                   eta_corr=0.2, resid_sd=0.1, loadings=None, shock=0.0, X=None, gamma=None,
                   seed=0):
    """Draw a logit-scale panel from the growth model.

    ``shock`` is added to every country's final wave.  Returns ``(Y, eta)``.
    """
    rng = np.random.default_rng(seed)
    lam = np.arange(n_cycles, dtype=float) if loadings is None else np.asarray(loadings, float)
    sd0, sd1 = eta_sd
    cov = np.array([[sd0 ** 2, eta_corr * sd0 * sd1], [eta_corr * sd0 * sd1, sd1 ** 2]])
    mean = np.tile([beta00, beta10], (n_countries, 1))
    if X is not None:
        Xd = np.column_stack([np.ones(n_countries), X])
        mean = Xd @ np.asarray(gamma, dtype=float).T
    eta = mean + rng.multivariate_normal(np.zeros(2), cov, size=n_countries)
    L = np.column_stack([np.ones(n_cycles), lam])
    resid = np.broadcast_to(np.asarray(resid_sd, dtype=float), (n_cycles,))
    Y = eta @ L.T + rng.standard_normal((n_countries, n_cycles)) * resid
    Y[:, -1] += shock
    return Y, eta


class LatentGrowthCurve(RegressorMixin, BaseEstimator):
    """Estimator interface to the hierarchical growth model.

    ``fit(Y, X)`` takes an (n_countries, n_cycles) array of logit outcomes and
    optional country predictors; ``predict(X)`` returns posterior-mean
    trajectories for new predictor rows (population-level, no country effect).
    """

    def __init__(self, model="M0", free=None, n_chains=4, n_iter=10_000, burn_in=5_000,
                 thin=1, seed=0, priors=None):
        self.model = model
        self.free = free
        self.n_chains = n_chains
        self.n_iter = n_iter
        self.burn_in = burn_in
        self.thin = thin
        self.seed = seed
        self.priors = priors

    def fit(self, Y, X=None):
        Y = np.asarray(Y, dtype=float)
        spec = LoadingSpec.from_label(self.model, Y.shape[1], self.free)
        mcmc = McmcConfig(self.n_chains, self.n_iter, self.burn_in, self.thin, self.seed)
        self.posterior_ = fit_panel(Y, X, spec, self.priors, mcmc)
        self.n_features_in_ = 0 if X is None else np.asarray(X).shape[1]
        self.coef_ = self.posterior_.gamma.mean(axis=(0, 1))
        self.loadings_ = self.posterior_.loadings.mean(axis=(0, 1))
        self.slopes_ = self.posterior_.slope_draws().mean(axis=0)
        self.intercepts_ = self.posterior_.intercept_draws().mean(axis=0)
        return self

    def predict(self, X=None):
        check_is_fitted(self, "posterior_")
        n = 1 if X is None else np.asarray(X).shape[0]
        Xd = np.ones((n, 1)) if X is None else np.column_stack([np.ones(n), np.asarray(X, float)])
        eta = Xd @ self.coef_.T
        L = np.column_stack([np.ones(len(self.loadings_)), self.loadings_])
        return eta @ L.T
