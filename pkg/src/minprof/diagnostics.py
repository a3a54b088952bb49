"""Convergence diagnostics for multi-chain MCMC output."""

from __future__ import annotations

import numpy as np


def _split(draws: np.ndarray) -> np.ndarray:
    draws = np.asarray(draws, dtype=float)
    if draws.ndim == 1:
        draws = draws[None, :]
    n = draws.shape[1] // 2
    if n < 2:
        return draws
    return np.concatenate([draws[:, :n], draws[:, -n:]], axis=0)


def split_rhat(draws) -> float:
    """Split potential scale reduction factor for a (chains, draws) array."""
    x = _split(draws)
    m, n = x.shape
    if m < 2 or n < 2:
        return float("nan")
    chain_mean = x.mean(axis=1)
    W = x.var(axis=1, ddof=1).mean()
    B = n * chain_mean.var(ddof=1)
    if W == 0:
        return 1.0 if B == 0 else float("inf")
    var_plus = (n - 1) / n * W + B / n
    return float(np.sqrt(var_plus / W))


def _autocov(x: np.ndarray) -> np.ndarray:
    n = len(x)
    size = 2 ** int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(x - x.mean(), size)
    acov = np.fft.irfft(f * np.conjugate(f), size)[:n].real / n
    return acov


def ess(draws) -> float:
    """Effective sample size with Geyer's initial monotone sequence."""
    x = _split(draws)
    m, n = x.shape
    if n < 4:
        return float(m * n)
    acov = np.array([_autocov(c) for c in x])
    chain_var = acov[:, 0] * n / (n - 1)
    W = chain_var.mean()
    var_plus = W * (n - 1) / n
    if m > 1:
        var_plus += x.mean(axis=1).var(ddof=1)
    if var_plus <= 0:
        return float(m * n)
    rho = 1.0 - (W - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    # pair sums, truncated at the first negative pair, then made monotone
    total, prev = 0.0, np.inf
    for t in range(0, n - 1, 2):
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        pair = min(pair, prev)
        total += pair
        prev = pair
    tau = -1.0 + 2.0 * total
    tau = max(tau, 1.0 / np.log10(m * n))
    return float(m * n / tau)


def mcse_mean(draws) -> float:
    x = np.asarray(draws, dtype=float)
    return float(x.std(ddof=1) / np.sqrt(ess(x)))
