"""Cox-Ross-Rubinstein tree: exact Bermudan values, Doob-Meyer split and deltas.

Values are stored discounted to time 0, level by level; level ``m`` has
``m + 1`` nodes indexed by the number of up moves.  Small trees can be
enumerated path by path to feed the Monte Carlo code with exact weights.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .market import ModelParams, PathSet, TimeGrid
from .payoffs import PayoffSpec, evaluate_payoff

#: Largest tree that may be enumerated path by path.
MAX_ENUM_STEPS = 12


@dataclass(frozen=True)
class BinomialModel:
    """Recombining CRR tree for one asset.

    ``exercise_steps`` lists the tree levels at which exercise is allowed,
    in increasing order; the last one must be ``steps``.
    """

    s0: float
    sigma: float
    r: float
    delta: float
    T: float
    steps: int
    exercise_steps: tuple[int, ...]

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("tree needs at least one step")
        ex = tuple(int(m) for m in self.exercise_steps)
        if list(ex) != sorted(set(ex)) or ex[-1] != self.steps or ex[0] < 0:
            raise ValueError("exercise steps must be increasing and end at the last level")
        object.__setattr__(self, "exercise_steps", ex)
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"risk-neutral probability {self.p} outside (0, 1); refine the tree")

    @classmethod
    def from_params(cls, params: ModelParams, steps: int, N: int, asset: int = 0) -> "BinomialModel":
        """Tree with exercise at the levels nearest to ``n T / N``, ``n = 0..N``."""
        ex = sorted({int(round(n * steps / N)) for n in range(N + 1)})
        return cls(params.s0[asset], params.sigma[asset], params.r, params.delta[asset], params.T, steps, tuple(ex))

    @property
    def dt(self) -> float:
        return self.T / self.steps

    @property
    def up(self) -> float:
        return float(np.exp(self.sigma * np.sqrt(self.dt)))

    @property
    def down(self) -> float:
        return 1.0 / self.up

    @property
    def p(self) -> float:
        if self.sigma == 0:
            return 0.5
        return float((np.exp((self.r - self.delta) * self.dt) - self.down) / (self.up - self.down))

    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt

    def level_spots(self, m: int) -> np.ndarray:
        """Spots at level ``m``, indexed by number of up moves."""
        k = np.arange(m + 1)
        if self.sigma == 0:
            return np.full(m + 1, self.s0 * np.exp((self.r - self.delta) * m * self.dt))
        return self.s0 * self.up**k * self.down ** (m - k)

    def discounted_asset(self, m: int) -> np.ndarray:
        return np.exp((self.delta - self.r) * m * self.dt) * self.level_spots(m)


@dataclass
class SnellTable:
    """Discounted tree values.

    ``U[m]``, ``Z[m]`` and ``cont[m]`` are arrays of length ``m + 1``.  ``Z[m]``
    is ``-inf`` where exercise is not allowed; ``cont[m]`` is the conditional
    expectation of ``U[m+1]`` (undefined at the last level, stored as ``nan``).
    """

    model: BinomialModel
    U: list[np.ndarray]
    Z: list[np.ndarray]
    cont: list[np.ndarray]

    @property
    def price(self) -> float:
        return float(self.U[0][0])

    def exercise_region(self, m: int) -> np.ndarray:
        """Nodes where stopping is optimal, ``U = Z``."""
        return np.isfinite(self.Z[m]) & (self.Z[m] >= self.U[m])


def snell_solve(model: BinomialModel, payoff: PayoffSpec, r: float | None = None) -> SnellTable:
    """Backward induction ``U_m = max(Z_m, E[U_{m+1} | node])`` on the tree."""
    r = model.r if r is None else r
    p = model.p
    ex = set(model.exercise_steps)
    Z = []
    for m in range(model.steps + 1):
        if m in ex:
            z = np.exp(-r * m * model.dt) * evaluate_payoff(payoff, model.level_spots(m)[:, None])
        else:
            z = np.full(m + 1, -np.inf)
        Z.append(z)
    U = [None] * (model.steps + 1)
    cont = [None] * (model.steps + 1)
    U[-1] = Z[-1].copy()
    cont[-1] = np.full(model.steps + 1, np.nan)
    for m in range(model.steps - 1, -1, -1):
        cont[m] = p * U[m + 1][1:] + (1 - p) * U[m + 1][:-1]
        U[m] = np.maximum(Z[m], cont[m])
    return SnellTable(model, U, Z, cont)


def european_value(model: BinomialModel, payoff: PayoffSpec) -> float:
    euro = BinomialModel(model.s0, model.sigma, model.r, model.delta, model.T, model.steps, (model.steps,))
    return snell_solve(euro, payoff).price


@dataclass
class DoobMeyer:
    """Per-transition increments from level ``m`` to ``m + 1``.

    ``dM_up[m][k]`` / ``dM_down[m][k]`` are the martingale increments leaving
    node ``(m, k)``; ``dA[m][k] = U_m - E[U_{m+1} | node]`` is the compensator
    increment, which is the same on both branches.
    """

    dM_up: list[np.ndarray]
    dM_down: list[np.ndarray]
    dA: list[np.ndarray]


def doob_meyer(table: SnellTable) -> DoobMeyer:
    up, down, dA = [], [], []
    for m in range(table.model.steps):
        c = table.cont[m]
        up.append(table.U[m + 1][1:] - c)
        down.append(table.U[m + 1][:-1] - c)
        dA.append(table.U[m] - c)
    return DoobMeyer(up, down, dA)


def delta(table: SnellTable, m: int, k: int) -> float:
    """Spot delta ``(U_up - U_down) / (S_up - S_down)`` at node ``(m, k)``, undiscounted values."""
    model = table.model
    if not 0 <= m < model.steps or not 0 <= k <= m:
        raise IndexError("delta needs a non-leaf node")
    s = model.level_spots(m + 1)
    if s[k + 1] == s[k]:
        return 0.0
    grow = np.exp(model.r * (m + 1) * model.dt)
    return float(grow * (table.U[m + 1][k + 1] - table.U[m + 1][k]) / (s[k + 1] - s[k]))


def hedge_ratios(table: SnellTable, m: int) -> np.ndarray:
    """Units of the discounted dividend-reinvested asset held over ``(m, m + 1)`` at each node."""
    model = table.model
    a = model.discounted_asset(m + 1)
    da = a[1:] - a[:-1]
    du = table.U[m + 1][1:] - table.U[m + 1][:-1]
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(da != 0, du / np.where(da != 0, da, 1.0), 0.0)


@dataclass
class TreePaths:
    """Every path of a small tree with its exact probability."""

    spots: np.ndarray
    ups: np.ndarray
    weights: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.spots.shape[0]


def tree_paths(model: BinomialModel) -> TreePaths:
    """Enumerate all ``2**steps`` paths (``steps <= MAX_ENUM_STEPS``)."""
    n = model.steps
    if n > MAX_ENUM_STEPS:
        raise ValueError(f"refusing to enumerate {n} steps; limit is {MAX_ENUM_STEPS}")
    codes = np.arange(2**n)
    moves = (codes[:, None] >> np.arange(n)[None, :]) & 1
    ups = np.concatenate([np.zeros((2**n, 1), dtype=np.int64), np.cumsum(moves, axis=1)], axis=1)
    levels = np.arange(n + 1)
    if model.sigma == 0:
        spots = model.s0 * np.exp((model.r - model.delta) * levels * model.dt)[None, :].repeat(2**n, axis=0)
    else:
        spots = model.s0 * model.up ** ups * model.down ** (levels[None, :] - ups)
    k = ups[:, -1]
    w = model.p**k * (1 - model.p) ** (n - k)
    return TreePaths(spots, ups, w)


@dataclass(frozen=True)
class NodeBasisSpec:
    """Indicator of each tree node at the evaluation level (``steps + 1`` functions)."""

    steps: int
    family: str = field(default="node_indicator", init=False)
    is_local: bool = field(default=True, init=False)
    d: int = field(default=1, init=False)

    @property
    def size(self) -> int:
        return self.steps + 1


@dataclass
class NodeMapping:
    """Maps a spot on level ``m`` of a tree back to its node index."""

    model: BinomialModel

    @property
    def spec(self) -> NodeBasisSpec:
        return NodeBasisSpec(self.model.steps)

    def activations(self, m: int, spots: np.ndarray) -> np.ndarray:
        model = self.model
        s = np.asarray(spots, dtype=float).reshape(len(spots), -1)[:, 0]
        if model.sigma == 0:
            return np.zeros(len(s), dtype=np.int64)
        k = (np.log(s / model.s0) / np.log(model.up) + m) / 2
        return np.clip(np.rint(k), 0, m).astype(np.int64)


def tree_pathset(model: BinomialModel, N: int, params: ModelParams | None = None) -> tuple[PathSet, TreePaths]:
    """Enumerated tree as a weighted :class:`PathSet` on an ``N``-date grid.

    Exercise levels must be every ``steps / N`` levels so the subtick grid
    coincides with the tree levels.
    """
    if model.steps % N:
        raise ValueError("tree steps must be a multiple of N")
    nb = model.steps // N
    if model.exercise_steps != tuple(range(0, model.steps + 1, nb)):
        raise ValueError("exercise levels must be every steps / N levels")
    tp = tree_paths(model)
    if params is None:
        params = ModelParams((model.s0,), (model.sigma,), (model.delta,), model.r, 0.0, model.T)
    grid = TimeGrid(N, nb, model.T)
    return PathSet.from_array(tp.spots, grid, weights=tp.weights, params=params), tp


def martingale_on_paths(table: SnellTable, tp: TreePaths) -> np.ndarray:
    """``M*`` along each enumerated path at every level, ``M*_0 = 0``."""
    dm = doob_meyer(table)
    n = table.model.steps
    inc = np.empty((tp.n_paths, n))
    for m in range(n):
        k = tp.ups[:, m]
        went_up = tp.ups[:, m + 1] > k
        inc[:, m] = np.where(went_up, dm.dM_up[m][k], dm.dM_down[m][k])
    return np.concatenate([np.zeros((tp.n_paths, 1)), np.cumsum(inc, axis=1)], axis=1)


def values_on_paths(levels: list[np.ndarray], tp: TreePaths) -> np.ndarray:
    """Gather a per-level node array along each path, shape ``(paths, steps + 1)``."""
    return np.stack([levels[m][tp.ups[:, m]] for m in range(len(levels))], axis=1)


def optimal_stopping_level(table: SnellTable, tp: TreePaths) -> np.ndarray:
    """First exercise level where ``U = Z`` on each path."""
    n = table.model.steps
    tau = np.full(tp.n_paths, n, dtype=np.int64)
    alive = np.ones(tp.n_paths, dtype=bool)
    for m in table.model.exercise_steps:
        stop = alive & table.exercise_region(m)[tp.ups[:, m]]
        tau[stop] = m
        alive &= ~stop
    return tau

