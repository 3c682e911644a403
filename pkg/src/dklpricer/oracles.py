"""Reference prices computed without Monte Carlo regression.

These are the independent checks the pricer is validated against: a
closed form for European geometric baskets, a CRR tree that only allows
exercise on the Bermudan dates, a quadrature backward induction for the
one-dimensional jump diffusion, and the deterministic zero-volatility case.
"""
from __future__ import annotations

import numpy as np
from scipy.stats import norm, poisson

from .sim import GbmParams, exercise_grid

__all__ = [
    "geometric_basket_moments", "bs_geometric_basket", "crr_bermudan",
    "mjd_bermudan_put_1d", "zero_vol_max_call",
]


def geometric_basket_moments(params: GbmParams):
    """Mean and variance of ``log G_T`` for the geometric mean ``G`` of GBM assets."""
    T, d = params.T, params.d
    mu = np.mean(np.log(params.s0)) + (params.r - np.mean(params.q) - 0.5 * np.mean(params.sigma ** 2)) * T
    cov = np.outer(params.sigma, params.sigma) * params.rho
    var = float(cov.sum()) / d ** 2 * T
    return float(mu), var


def bs_geometric_basket(params: GbmParams, strike: float, put: bool = True) -> float:
    """European option on the geometric mean: Black-Scholes on a log-normal ``G_T``."""
    mu, var = geometric_basket_moments(params)
    sd = np.sqrt(var)
    df = np.exp(-params.r * params.T)
    fwd = np.exp(mu + 0.5 * var)
    d1 = (mu + var - np.log(strike)) / sd
    d2 = d1 - sd
    if put:
        return float(df * (strike * norm.cdf(-d2) - fwd * norm.cdf(-d1)))
    return float(df * (fwd * norm.cdf(d1) - strike * norm.cdf(d2)))


def crr_bermudan(s0, strike, r, sigma, T, steps, n_exercise, q=0.0, put=True) -> float:
    """Cox-Ross-Rubinstein tree where early exercise is allowed only at ``t_i = i T / n``.

    ``steps`` must be a multiple of ``n_exercise``.
    """
    if steps % n_exercise:
        raise ValueError("steps must be a multiple of the number of exercise dates")
    dt = T / steps
    u = np.exp(sigma * np.sqrt(dt))
    dn = 1.0 / u
    p = (np.exp((r - q) * dt) - dn) / (u - dn)
    disc = np.exp(-r * dt)
    every = steps // n_exercise
    j = np.arange(steps + 1)
    S = s0 * u ** (steps - 2 * j)
    pay = (lambda s: np.maximum(strike - s, 0.0)) if put else (lambda s: np.maximum(s - strike, 0.0))
    V = pay(S)
    for k in range(steps - 1, -1, -1):
        V = disc * (p * V[:-1] + (1 - p) * V[1:])
        if k > 0 and k % every == 0:
            S = s0 * u ** (k - 2 * np.arange(k + 1))
            V = np.maximum(V, pay(S))
    return float(V[0])


def mjd_bermudan_put_1d(s0, strike, r, q, sigma, lam, mu_j, sigma_j, T, n,
                        points=1601, width=3.0, max_jumps=40) -> float:
    """Bermudan put on a one-asset Merton jump diffusion by quadrature.

    The log-price transition over one exercise interval is a Poisson mixture
    of Gaussians; the value function is propagated on a uniform log grid of
    half-width ``width`` around ``log s0``.
    """
    dt = T / n
    kappa = np.expm1(mu_j + 0.5 * sigma_j ** 2)
    drift = r - q - lam * kappa - 0.5 * sigma ** 2
    x0 = np.log(s0)
    x = np.linspace(x0 - width, x0 + width, points)
    h = x[1] - x[0]
    inc = x[None, :] - x[:, None]
    dens = np.zeros_like(inc)
    for k in range(max_jumps):
        var = sigma ** 2 * dt + k * sigma_j ** 2
        dens += poisson.pmf(k, lam * dt) * norm.pdf(inc, drift * dt + k * mu_j, np.sqrt(var))
    P = dens * h
    pay = np.maximum(strike - np.exp(x), 0.0)
    disc = np.exp(-r * dt)
    V = pay.copy()
    for _ in range(n - 1):
        V = np.maximum(pay, disc * (P @ V))
    return float(np.interp(x0, x, disc * (P @ V)))


def zero_vol_max_call(s0, strike, r, q, T, n) -> float:
    """Max call on deterministic paths ``S_t = s0 exp((r - q) t)``: best discounted exercise date."""
    t = exercise_grid(T, n)[1:]
    s0 = np.atleast_1d(np.asarray(s0, dtype=float))
    q = np.broadcast_to(np.asarray(q, dtype=float), s0.shape)
    S = s0[None, :] * np.exp((r - q)[None, :] * t[:, None])
    vals = np.exp(-r * t) * np.maximum(S.max(axis=1) - strike, 0.0)
    return float(vals.max())
