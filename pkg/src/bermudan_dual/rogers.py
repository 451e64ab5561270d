"""One-parameter dual bound: a scalar multiple of a fixed reference martingale."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .analytics import bs_put
from .market import ModelParams, PathSet, chunks, mean_and_se
from .payoffs import PayoffSpec

BRACKET = (-1.0, 3.0)
XTOL = 1e-8


@dataclass
class RogersResult:
    alpha_star: float
    price: float
    se: float
    reference: str


def dual_objective(alpha: float, Z: np.ndarray, M: np.ndarray, chunk_size: int = 262144) -> np.ndarray:
    """Per-path ``max_j (Z_j - alpha M_j)`` where ``M`` is the cumulated reference, ``M_0 = 0``."""
    out = np.empty(Z.shape[0])
    for c in chunks(Z.shape[0], chunk_size):
        out[c] = np.max(Z[c] - alpha * M[c], axis=1)
    return out


def minimize_scalar_dual(Z: np.ndarray, dA: np.ndarray, weights=None, reference: str = "custom") -> RogersResult:
    """Minimise ``g(alpha) = mean max_j (Z_j - alpha sum_{i<=j} dA_i)`` over the scalar ``alpha``.

    ``dA`` has shape ``(Q, N)`` with ``dA[:, i]`` the reference increment from
    ``T_i`` to ``T_{i+1}``.  ``g`` is convex, so a golden-section search on a
    bracket that is widened until it encloses a minimum finds the optimum.
    """
    if dA.shape != (Z.shape[0], Z.shape[1] - 1):
        raise ValueError("reference increments do not match the rewards")
    M = np.concatenate([np.zeros((Z.shape[0], 1)), np.cumsum(dA, axis=1)], axis=1)

    def g(a):
        return mean_and_se(dual_objective(a, Z, M), weights)[0]

    lo, hi = BRACKET
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        g_lo, g_mid, g_hi = g(lo), g(mid), g(hi)
        if g_mid <= g_lo and g_mid <= g_hi:
            break
        width = hi - lo
        if g_lo < g_mid:
            lo -= width
        else:
            hi += width
    else:
        raise RuntimeError("could not bracket the minimum; objective looks unbounded")
    if g_mid < g_lo and g_mid < g_hi:
        res = minimize_scalar(g, bracket=(lo, mid, hi), method="golden", options={"xtol": XTOL})
    else:
        # flat stretch: golden section needs a strictly lower midpoint
        res = minimize_scalar(g, bounds=(lo, hi), method="bounded", options={"xatol": XTOL})
    a = float(res.x)
    price, se = mean_and_se(dual_objective(a, Z, M), weights)
    return RogersResult(a, price, se, reference)


def european_put_reference(paths: PathSet, params: ModelParams, strike: float) -> np.ndarray:
    """Increments of ``exp(-r t) P(t, S_t)`` between exercise dates, ``P`` the European put on ``T``."""
    return _reference(paths, params, lambda t, s: bs_put(t, s, strike, params.T, params.r, params.sigma[0], params.delta[0]))


def european_payoff_reference(paths: PathSet, params: ModelParams, payoff: PayoffSpec) -> np.ndarray:
    """Increments of the discounted European version of a put or butterfly payoff."""
    if payoff.kind == "put":
        return european_put_reference(paths, params, payoff.strike)
    if payoff.kind != "butterfly":
        raise ValueError(f"no closed-form European reference for {payoff.kind!r}")
    k1, k2 = payoff.strikes
    km = payoff.mid_strike
    args = (params.T, params.r, params.sigma[0], params.delta[0])

    def value(t, s):
        return bs_put(t, s, k1, *args) + bs_put(t, s, k2, *args) - 2 * bs_put(t, s, km, *args)

    return _reference(paths, params, value)


def _reference(paths: PathSet, params: ModelParams, value) -> np.ndarray:
    if paths.d != 1:
        raise ValueError("reference martingales are one-dimensional")
    t = paths.grid.exercise_times
    s = paths.exercise_spots()[:, :, 0]
    A = np.exp(-params.r * t)[None, :] * value(t[None, :], s)
    return np.diff(A, axis=1)
