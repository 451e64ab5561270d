"""Bermudan payoff functions and discounted reward matrices."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .market import PathSet

logger = logging.getLogger(__name__)

KINDS = ("put", "call", "butterfly", "max_call", "min_put", "basket_put")

#: Number of negative payoff evaluations clamped to zero since import.
clamp_counter = {"count": 0}


@dataclass(frozen=True)
class PayoffSpec:
    """Payoff ``Psi`` of one of the supported contracts.

    ``strike`` is used by every kind except ``butterfly``, which takes
    ``strikes=(K1, K2)``.  ``weights`` only applies to ``basket_put`` and
    defaults to equal weights.
    """

    kind: str
    strike: float | None = None
    strikes: tuple[float, float] | None = None
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown payoff kind {self.kind!r}")
        if self.kind == "butterfly":
            if self.strikes is None or len(self.strikes) != 2:
                raise ValueError("butterfly needs strikes=(K1, K2)")
            k1, k2 = map(float, self.strikes)
            if not 0 < k1 < k2:
                raise ValueError("butterfly needs 0 < K1 < K2")
            object.__setattr__(self, "strikes", (k1, k2))
            grid = np.linspace(0.0, 2 * k2, 4001)
            if np.min(_butterfly(grid, k1, k2)) < 0:
                raise AssertionError("butterfly payoff negative on [0, 2 K2]")
        else:
            if self.strike is None or not self.strike > 0:
                raise ValueError(f"{self.kind} needs a positive strike")
            object.__setattr__(self, "strike", float(self.strike))
        if self.weights is not None:
            object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))

    @property
    def mid_strike(self) -> float:
        k1, k2 = self.strikes
        return 0.5 * (k1 + k2)

    def __call__(self, spots) -> np.ndarray:
        return evaluate_payoff(self, spots)


def _butterfly(s, k1, k2):
    km = 0.5 * (k1 + k2)
    out = np.maximum(k1 - s, 0) + np.maximum(k2 - s, 0) - 2 * np.maximum(km - s, 0)
    # cancellation below K1 leaves roundoff of either sign
    return np.where(np.abs(out) <= 1e-12 * k2, 0.0, out)


def _raw(spec: PayoffSpec, s: np.ndarray) -> np.ndarray:
    kind = spec.kind
    if kind == "put":
        return np.maximum(spec.strike - s[..., 0], 0.0)
    if kind == "call":
        return np.maximum(s[..., 0] - spec.strike, 0.0)
    if kind == "butterfly":
        return _butterfly(s[..., 0], *spec.strikes)
    if kind == "max_call":
        return np.maximum(s.max(axis=-1) - spec.strike, 0.0)
    if kind == "min_put":
        return np.maximum(spec.strike - s.min(axis=-1), 0.0)
    d = s.shape[-1]
    w = np.full(d, 1.0 / d) if spec.weights is None else np.asarray(spec.weights)
    return np.maximum(spec.strike - s @ w, 0.0)


def evaluate_payoff(spec: PayoffSpec, spot_vector) -> np.ndarray:
    """``Psi(S)`` for spots of shape ``(..., d)``; a 1-d input is one spot vector.

    Negative evaluations are clamped to zero and counted in ``clamp_counter``.
    """
    s = np.asarray(spot_vector, dtype=float)
    if s.ndim == 0:
        s = s[None]
    if spec.kind in ("put", "call", "butterfly") and s.shape[-1] != 1:
        raise ValueError(f"{spec.kind} payoff expects a single asset, got d={s.shape[-1]}")
    if spec.weights is not None and s.shape[-1] != len(spec.weights):
        raise ValueError("basket weights do not match the number of assets")
    out = _raw(spec, s)
    neg = out < 0
    if np.any(neg):
        clamp_counter["count"] += int(neg.sum())
        logger.warning("clamped %d negative payoff values", int(neg.sum()))
        out = np.where(neg, 0.0, out)
    return out


def reward_matrix(spec: PayoffSpec, paths: PathSet, r: float) -> np.ndarray:
    """Discounted exercise values ``Z[q, n] = exp(-r T_n) Psi(S_{T_n})``, shape ``(Q, N + 1)``."""
    spots = paths.exercise_spots()
    return reward_from_spots(spec, spots, paths.grid.exercise_times, r)


def reward_from_spots(spec: PayoffSpec, spots: np.ndarray, times: np.ndarray, r: float) -> np.ndarray:
    if spots.shape[1] != len(times):
        raise ValueError("spots and exercise times do not match")
    return np.exp(-r * np.asarray(times))[None, :] * evaluate_payoff(spec, spots)
