"""Hedging instruments and elementary martingale increments.

Each instrument is the discounted value process of something tradable: the
dividend-reinvested asset ``exp((delta - r) t) S_t`` or a European option
maturing at ``T`` priced in closed form, ``exp(-r t) BS(t, S_t)``.  Both are
exact martingales under the model, so products with time-``t_{i,j-1}``
basis functions give exact martingale increments.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analytics import bs_call, bs_put
from .basis import StateMapping
from .market import ModelParams, PathSet
from .payoffs import PayoffSpec

INSTRUMENT_KINDS = ("asset", "call", "put", "butterfly")


@dataclass(frozen=True)
class Instrument:
    kind: str
    asset: int = 0
    strike: float | None = None
    strikes: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in INSTRUMENT_KINDS:
            raise ValueError(f"unknown instrument kind {self.kind!r}")


@dataclass(frozen=True)
class InstrumentSet:
    items: tuple[Instrument, ...]

    @property
    def dbar(self) -> int:
        return len(self.items)

    @classmethod
    def assets(cls, d: int) -> "InstrumentSet":
        return cls(tuple(Instrument("asset", k) for k in range(d)))

    @classmethod
    def for_experiment(cls, payoff: PayoffSpec, params: ModelParams, vanilla: bool) -> "InstrumentSet":
        """Assets, plus the vanilla options used in the experiments when ``vanilla``.

        One asset: a put struck at ``K`` for puts, a call struck at the middle
        strike for butterflies.  Several assets: an at-the-money call per asset.
        """
        base = cls.assets(params.d)
        if not vanilla:
            return base
        if params.d == 1 and payoff.kind == "put":
            extra = (Instrument("put", 0, strike=payoff.strike),)
        elif params.d == 1 and payoff.kind == "butterfly":
            extra = (Instrument("call", 0, strike=payoff.mid_strike),)
        else:
            extra = tuple(Instrument("call", k, strike=params.s0[k]) for k in range(params.d))
        return cls(base.items + extra)

    def describe(self) -> list[dict]:
        return [
            {"kind": it.kind, "asset": it.asset, "strike": it.strike, "strikes": it.strikes}
            for it in self.items
        ]


def _european(inst: Instrument, params: ModelParams, t, x):
    k = inst.asset
    args = (params.T, params.r, params.sigma[k], params.delta[k])
    if inst.kind == "call":
        return bs_call(t, x, inst.strike, *args)
    if inst.kind == "put":
        return bs_put(t, x, inst.strike, *args)
    k1, k2 = inst.strikes
    km = 0.5 * (k1 + k2)
    return bs_put(t, x, k1, *args) + bs_put(t, x, k2, *args) - 2 * bs_put(t, x, km, *args)


def instrument_values(instruments: InstrumentSet, params: ModelParams, spots: np.ndarray, times) -> np.ndarray:
    """Discounted instrument values.

    ``spots`` has shape ``(n, L, d)`` and ``times`` length ``L``; the result
    has shape ``(n, L, dbar)``.
    """
    times = np.asarray(times, dtype=float)
    out = np.empty(spots.shape[:2] + (instruments.dbar,))
    for c, inst in enumerate(instruments.items):
        x = spots[:, :, inst.asset]
        if inst.kind == "asset":
            out[:, :, c] = np.exp((params.delta[inst.asset] - params.r) * times) * x
        else:
            out[:, :, c] = np.exp(-params.r * times) * _european(inst, params, times, x)
    return out


def instrument_value(instruments: InstrumentSet, params: ModelParams, paths: PathSet, time_index: int) -> np.ndarray:
    """Per-path, per-instrument discounted values at one fine time, shape ``(Q, dbar)``."""
    t = paths.grid.times[time_index : time_index + 1]
    return instrument_values(instruments, params, paths.spots(time_index)[:, None, :], t)[:, 0]


@dataclass
class IncrementBlock:
    """Factored increments over one subtick.

    ``act`` is the bin index per path (local bases) or the dense activation
    matrix; ``dA`` is the instrument increment ``(n, dbar)``.  The elementary
    increment for basis ``p`` and instrument ``k`` is ``u_p * dA_k``.
    """

    act: np.ndarray
    dA: np.ndarray
    size: int
    local: bool

    @property
    def n(self) -> int:
        return self.dA.shape[0]

    def dense(self) -> np.ndarray:
        """Explicit ``(n, size * dbar)`` matrix, basis-major."""
        if self.local:
            u = np.zeros((self.n, self.size))
            u[np.arange(self.n), self.act] = 1.0
        else:
            u = self.act
        return (u[:, :, None] * self.dA[:, None, :]).reshape(self.n, -1)

    def apply(self, alpha: np.ndarray) -> np.ndarray:
        """``alpha . dX`` per path for coefficients of shape ``(size, dbar)``."""
        if self.local:
            return np.einsum("nk,nk->n", alpha[self.act], self.dA)
        return np.einsum("nk,nk->n", self.act @ alpha, self.dA)


def interval_blocks(
    instruments: InstrumentSet,
    mapping: StateMapping,
    params: ModelParams,
    spots: np.ndarray,
    times: np.ndarray,
    i: int,
) -> list[IncrementBlock]:
    """Blocks for subticks ``j = 1..Nbar`` of interval ``i``.

    ``spots`` holds ``(n, Nbar + 1, d)`` values at ``t_{i,0..Nbar}``; the basis
    of subtick ``j`` is evaluated at ``t_{i,j-1}``.
    """
    nb = spots.shape[1] - 1
    A = instrument_values(instruments, params, spots, times)
    blocks = []
    for j in range(1, nb + 1):
        m = i * nb + j - 1
        act = mapping.activations(m, spots[:, j - 1])
        blocks.append(IncrementBlock(act, A[:, j] - A[:, j - 1], mapping.spec.size, mapping.spec.is_local))
    return blocks


def increment_block(instruments: InstrumentSet, mapping: StateMapping, paths: PathSet, i: int, j: int) -> IncrementBlock:
    """Increment block of subtick ``j`` (1-based) in interval ``i`` over all paths."""
    grid = paths.grid
    if not 1 <= j <= grid.Nbar:
        raise IndexError("subtick index must be in 1..Nbar")
    S = paths.interval(i)[:, j - 1 : j + 1]
    m = grid.fine_index(i, j - 1)
    A = instrument_values(instruments, paths.params, S, grid.times[m : m + 2])
    return IncrementBlock(mapping.activations(m, S[:, 0]), A[:, 1] - A[:, 0], mapping.spec.size, mapping.spec.is_local)
