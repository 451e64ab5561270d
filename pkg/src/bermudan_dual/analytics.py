"""Closed-form Black-Scholes prices and the distribution functions used by the bases."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

#: Below this total standard deviation the deterministic-forward limit is used.
DEGENERATE_VOL = 1e-12


def norm_cdf(z):
    """Standard normal CDF (accurate to a few ulps over the whole real line)."""
    return ndtr(z)


def _bs_terms(t, x, strike, maturity, r, sigma, delta):
    tau = np.maximum(np.asarray(maturity, dtype=float) - np.asarray(t, dtype=float), 0.0)
    x = np.asarray(x, dtype=float)
    fwd = x * np.exp((r - delta) * tau)
    df = np.exp(-r * tau)
    sd = sigma * np.sqrt(tau)
    return tau, x, fwd, df, sd


def bs_call(t, x, strike, maturity, r, sigma, delta=0.0):
    """Time-``t`` price of a European call with continuous dividend yield ``delta``.

    Vectorised over ``t`` and ``x``.  At maturity or with zero volatility it
    reduces to the discounted intrinsic value on the forward.
    """
    tau, x, fwd, df, sd = _bs_terms(t, x, strike, maturity, r, sigma, delta)
    with np.errstate(divide="ignore", invalid="ignore"):
        safe_sd = np.where(sd > DEGENERATE_VOL, sd, 1.0)
        d1 = (np.log(fwd / strike) + 0.5 * safe_sd**2) / safe_sd
        price = df * (fwd * ndtr(d1) - strike * ndtr(d1 - safe_sd))
    limit = df * np.maximum(fwd - strike, 0.0)
    return np.where(sd > DEGENERATE_VOL, price, limit)


def bs_put(t, x, strike, maturity, r, sigma, delta=0.0):
    """Time-``t`` price of a European put; see :func:`bs_call`."""
    tau, x, fwd, df, sd = _bs_terms(t, x, strike, maturity, r, sigma, delta)
    with np.errstate(divide="ignore", invalid="ignore"):
        safe_sd = np.where(sd > DEGENERATE_VOL, sd, 1.0)
        d1 = (np.log(fwd / strike) + 0.5 * safe_sd**2) / safe_sd
        price = df * (strike * ndtr(safe_sd - d1) - fwd * ndtr(-d1))
    limit = df * np.maximum(strike - fwd, 0.0)
    return np.where(sd > DEGENERATE_VOL, price, limit)


def bs_call_delta(t, x, strike, maturity, r, sigma, delta=0.0):
    tau, x, fwd, df, sd = _bs_terms(t, x, strike, maturity, r, sigma, delta)
    d1 = (np.log(fwd / strike) + 0.5 * sd**2) / sd
    return np.exp(-delta * tau) * ndtr(d1)


@dataclass(frozen=True)
class BsQuote:
    t: float
    x: float
    K: float
    T: float
    r: float
    sigma: float
    delta: float = 0.0

    def __post_init__(self):
        if not 0 <= self.t <= self.T:
            raise ValueError("need 0 <= t <= T")
        if self.x <= 0 or self.sigma < 0:
            raise ValueError("need x > 0 and sigma >= 0")

    def put(self) -> float:
        return float(bs_put(self.t, self.x, self.K, self.T, self.r, self.sigma, self.delta))

    def call(self) -> float:
        return float(bs_call(self.t, self.x, self.K, self.T, self.r, self.sigma, self.delta))


def lognormal_params(mean, variance):
    """``(mu, s2)`` of the lognormal law with the given first two moments."""
    mean = np.asarray(mean, dtype=float)
    if np.any(mean <= 0):
        raise ValueError("lognormal mean must be positive")
    s2 = np.log1p(np.asarray(variance, dtype=float) / mean**2)
    return np.log(mean) - 0.5 * s2, s2


def _is_point_mass(mean, variance):
    return np.asarray(variance) <= (1e-12 * np.abs(mean)) ** 2


def lognormal_cdf_from_moments(mean, variance, x):
    """CDF at ``x`` of the lognormal law matching ``mean`` and ``variance``.

    A (numerically) zero variance gives the step function that is 0 up to and
    including the mean, so a point mass lands on the lowest bin edge.
    """
    mu, s2 = lognormal_params(mean, variance)
    x = np.asarray(x, dtype=float)
    point = _is_point_mass(mean, variance)
    s = np.sqrt(np.where(point, 1.0, s2))
    with np.errstate(divide="ignore"):
        z = (np.log(np.maximum(x, 0.0)) - mu) / s
    step = (x > np.asarray(mean) * (1.0 + 1e-12)).astype(float)
    return np.where(point, step, ndtr(z))


def normal_cdf_from_moments(mean, variance, x):
    """Normal CDF with the given moments; same point-mass convention as the lognormal."""
    mean = np.asarray(mean, dtype=float)
    point = np.asarray(variance) <= (1e-12 * np.maximum(np.abs(mean), 1.0)) ** 2
    s = np.sqrt(np.where(point, 1.0, variance))
    step = (np.asarray(x) > mean + 1e-12 * np.maximum(np.abs(mean), 1.0)).astype(float)
    return np.where(point, step, ndtr((np.asarray(x) - mean) / s))
