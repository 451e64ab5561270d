"""Regression families for the hedging coefficients and their state mappings.

Three families are available:

``local_hypercube``
    indicators of the ``P**d`` cells of ``[0, 1)**d`` after mapping each asset
    through the lognormal CDF matched to its first two moments;
``local_signed_payoff``
    ``P`` indicators on ``[0, 1)`` after mapping the signed basket payoff
    ``K - w.S`` through a moment-matched normal CDF;
``polynomial``
    all monomials of total degree ``<= eta`` in the affinely rescaled spots.

Local families return one bin index per sample instead of a one-hot matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from math import comb

import numpy as np

from .analytics import lognormal_cdf_from_moments, normal_cdf_from_moments
from .market import ModelParams, PathSet
from .payoffs import PayoffSpec

FAMILIES = ("local_hypercube", "local_signed_payoff", "polynomial")


@dataclass(frozen=True)
class BasisSpec:
    family: str
    P: int = 1
    eta: int = 0
    d: int = 1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown basis family {self.family!r}")
        if self.P < 1 or self.eta < 0 or self.d < 1:
            raise ValueError("need P >= 1, eta >= 0, d >= 1")

    @property
    def is_local(self) -> bool:
        return self.family != "polynomial"

    @property
    def size(self) -> int:
        if self.family == "local_hypercube":
            return self.P**self.d
        if self.family == "local_signed_payoff":
            return self.P
        return comb(self.d + self.eta, self.eta)


def monomial_exponents(d: int, eta: int) -> np.ndarray:
    """Exponent table ``(n_monomials, d)`` ordered by total degree then lexicographically."""
    rows = []
    for degree in range(eta + 1):
        for combo in combinations_with_replacement(range(d), degree):
            e = np.zeros(d, dtype=int)
            for k in combo:
                e[k] += 1
            rows.append(e)
    return np.array(rows, dtype=int).reshape(-1, d)


@dataclass
class StateMapping:
    """Frozen per-time mapping parameters, indexed by fine-time index.

    ``mean``/``var`` hold the moment pairs of the local families and
    ``lo``/``hi`` the affine bounds of the polynomial family.
    """

    spec: BasisSpec
    times: np.ndarray
    mean: np.ndarray | None = None
    var: np.ndarray | None = None
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    strike: float | None = None
    weights: np.ndarray | None = None
    _exps: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.spec.family == "polynomial":
            self._exps = monomial_exponents(self.spec.d, self.spec.eta)

    def arrays(self) -> dict[str, np.ndarray]:
        out = {"times": np.asarray(self.times, dtype=float)}
        for name in ("mean", "var", "lo", "hi", "weights"):
            v = getattr(self, name)
            if v is not None:
                out[name] = np.asarray(v, dtype=float)
        return out

    def activations(self, m: int, spots: np.ndarray) -> np.ndarray:
        """Basis at fine time ``m`` for spots ``(n, d)``.

        Local families return integer bin indices ``(n,)``; the polynomial
        family returns the dense activation matrix ``(n, size)``.
        """
        spec = self.spec
        if spec.family == "local_hypercube":
            u = lognormal_cdf_from_moments(self.mean[m], self.var[m], spots)
            bins = _to_bins(u, spec.P)
            radix = spec.P ** np.arange(spec.d)
            return bins @ radix
        if spec.family == "local_signed_payoff":
            y = self.strike - spots @ self.weights
            return _to_bins(normal_cdf_from_moments(self.mean[m], self.var[m], y), spec.P)
        x = self.mapped(m, spots)
        exps = self._exps
        powers = [x[:, k, None] ** np.arange(spec.eta + 1) for k in range(spec.d)]
        out = np.ones((len(x), len(exps)))
        for k in range(spec.d):
            out *= powers[k][:, exps[:, k]]
        return out

    def mapped(self, m: int, spots: np.ndarray) -> np.ndarray:
        """Affine rescaling ``(S - C-)/(C+ - C-)``; zero where the bounds coincide."""
        lo, hi = self.lo[m], self.hi[m]
        width = hi - lo
        ok = width > 1e-12 * np.maximum(np.abs(hi), 1.0)
        return np.where(ok, (spots - lo) / np.where(ok, width, 1.0), 0.0)


def _to_bins(u: np.ndarray, P: int) -> np.ndarray:
    # values at 1.0 or outside [0, 1) go to the boundary bins
    return np.clip(np.floor(u * P), 0, P - 1).astype(np.int64)


def polynomial_bounds(params: ModelParams, times: np.ndarray, width: float = 4.0):
    """``C^{k,-}, C^{k,+}`` for each time: median path times ``exp(-/+ width sigma sqrt(t))``."""
    t = np.asarray(times, dtype=float)[:, None]
    sigma = np.asarray(params.sigma)
    centre = np.asarray(params.s0) * np.exp((params.r - np.asarray(params.delta) - 0.5 * sigma**2) * t)
    spread = width * sigma * np.sqrt(t)
    return centre * np.exp(-spread), centre * np.exp(spread)


def _weighted_moments(x: np.ndarray, w: np.ndarray | None):
    if w is None:
        return x.mean(axis=0), x.var(axis=0)
    p = w / w.sum()
    m = np.tensordot(p, x, axes=1)
    return m, np.tensordot(p, (x - m) ** 2, axes=1)


def calibrate_mapping(
    spec: BasisSpec,
    paths: PathSet,
    payoff: PayoffSpec | None = None,
    moments: str = "empirical",
) -> StateMapping:
    """Fit the mapping parameters at every fine time of ``paths.grid``.

    ``moments="closed_form"`` uses exact GBM moments instead of sample ones.
    The polynomial bounds are always closed form.
    """
    if spec.d != paths.d:
        raise ValueError("basis dimension does not match the paths")
    grid = paths.grid
    times = grid.times
    nb = grid.Nbar
    if spec.family == "polynomial":
        if paths.params is None:
            raise ValueError("polynomial bounds need model parameters")
        lo, hi = polynomial_bounds(paths.params, times)
        return StateMapping(spec, times, lo=lo, hi=hi)

    strike = weights = None
    if spec.family == "local_signed_payoff":
        if payoff is None or payoff.strike is None:
            raise ValueError("signed-payoff basis needs a payoff with a strike")
        strike = payoff.strike
        d = spec.d
        weights = np.full(d, 1.0 / d) if payoff.weights is None else np.asarray(payoff.weights)

    if moments == "closed_form":
        mean, var = _closed_form_moments(spec, paths.params, times, strike, weights)
        return StateMapping(spec, times, mean=mean, var=var, strike=strike, weights=weights)
    if moments != "empirical":
        raise ValueError(f"unknown moments mode {moments!r}")

    shape = (len(times), spec.d) if spec.family == "local_hypercube" else (len(times),)
    mean = np.empty(shape)
    var = np.empty(shape)
    for i, block in paths.iter_intervals():
        stop = nb + 1 if i == grid.N - 1 else nb
        for j in range(stop):
            s = block[:, j]
            x = s if spec.family == "local_hypercube" else strike - s @ weights
            mean[i * nb + j], var[i * nb + j] = _weighted_moments(x, paths.weights)
    return StateMapping(spec, times, mean=mean, var=var, strike=strike, weights=weights)


def _closed_form_moments(spec, params: ModelParams, times, strike, weights):
    t = np.asarray(times)[:, None]
    s0 = np.asarray(params.s0)
    sigma = np.asarray(params.sigma)
    m = s0 * np.exp((params.r - np.asarray(params.delta)) * t)
    if spec.family == "local_hypercube":
        return m, m**2 * np.expm1(sigma**2 * t)
    C = params.correlation_matrix() * np.outer(sigma, sigma)
    second = np.einsum("tk,tl,tkl->t", m * weights, m * weights, np.exp(C[None] * t[:, :, None]))
    mean_basket = (m * weights).sum(axis=1)
    return strike - mean_basket, np.maximum(second - mean_basket**2, 0.0)


def evaluate_basis(mapping: StateMapping, m: int, spot_vector) -> np.ndarray:
    """Activation vector of length ``spec.size`` for a single spot vector."""
    s = np.atleast_2d(np.asarray(spot_vector, dtype=float))
    act = mapping.activations(m, s)
    if mapping.spec.is_local:
        out = np.zeros(mapping.spec.size)
        out[act[0]] = 1.0
        return out
    return act[0]
