"""Correlated multi-asset Black-Scholes paths on the subtick grid.

Paths are drawn with counter-based Philox substreams: the normals for path
block ``b`` at fine step ``m`` come from a generator whose counter starts at
``(0, 0, m, b)`` under a key derived from the master seed.  Any slice of the
grid can therefore be regenerated independently, and a path's content does not
depend on ``Q``, on the chunking used downstream, or on the worker count.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from ._parallel import map_ordered

#: Paths per RNG block.  Part of the stream layout: changing it changes paths.
RNG_BLOCK = 8192

#: In-memory provider is used below this many bytes of spot storage.
MEMORY_BUDGET = 512 * 2**20


def _as_tuple(values, d: int | None = None) -> tuple[float, ...]:
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if d is not None and arr.size == 1 and d > 1:
        arr = np.full(d, float(arr[0]))
    return tuple(float(v) for v in arr)


@dataclass(frozen=True)
class ModelParams:
    """Black-Scholes market with ``d`` equicorrelated assets.

    Scalars passed for ``sigma`` or ``delta`` are broadcast to all assets.
    """

    s0: tuple[float, ...]
    sigma: tuple[float, ...]
    delta: tuple[float, ...]
    r: float
    rho: float
    T: float

    def __post_init__(self):
        s0 = _as_tuple(self.s0)
        d = len(s0)
        sigma = _as_tuple(self.sigma, d)
        delta = _as_tuple(self.delta, d)
        object.__setattr__(self, "s0", s0)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "rho", float(self.rho))
        object.__setattr__(self, "T", float(self.T))
        if len(sigma) != d or len(delta) != d:
            raise ValueError("s0, sigma and delta must have the same length")
        if any(s <= 0 for s in s0):
            raise ValueError("initial spots must be positive")
        if any(s < 0 for s in sigma):
            raise ValueError("volatilities must be nonnegative")
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        if d >= 2 and not (-1.0 / (d - 1) - 1e-12 <= self.rho <= 1.0 + 1e-12):
            raise ValueError(
                f"rho={self.rho} outside [-1/(d-1), 1] for d={d}; "
                "correlation matrix is not positive semidefinite"
            )
        # fails loudly on a non-factorisable matrix
        self.correlation_factor()

    @property
    def d(self) -> int:
        return len(self.s0)

    def correlation_matrix(self) -> np.ndarray:
        d = self.d
        return np.full((d, d), self.rho) + (1.0 - self.rho) * np.eye(d)

    def correlation_factor(self) -> np.ndarray:
        """Lower-triangular ``L`` with ``L @ L.T`` equal to the correlation matrix.

        Plain Cholesky recursion that tolerates zero pivots, so the boundary
        cases ``rho = 1`` and ``rho = -1/(d-1)`` still factor.
        """
        C = self.correlation_matrix()
        d = self.d
        L = np.zeros((d, d))
        for k in range(d):
            pivot = C[k, k] - L[k, :k] @ L[k, :k]
            if pivot < -1e-12:
                raise ValueError(f"correlation matrix not PSD (pivot {pivot:.3e})")
            if pivot <= 1e-14:
                continue
            L[k, k] = np.sqrt(pivot)
            for i in range(k + 1, d):
                L[i, k] = (C[i, k] - L[i, :k] @ L[k, :k]) / L[k, k]
        if not np.allclose(L @ L.T, C, atol=1e-10):
            raise ValueError("correlation matrix could not be factored")
        return L


@dataclass(frozen=True)
class TimeGrid:
    """``N`` exercise intervals on ``[0, T]``, each split into ``Nbar`` subticks."""

    N: int
    Nbar: int
    T: float

    def __post_init__(self):
        if self.N < 1 or self.Nbar < 1:
            raise ValueError("N and Nbar must be >= 1")
        if not self.T > 0:
            raise ValueError("T must be positive")

    @property
    def n_fine(self) -> int:
        return self.N * self.Nbar

    @property
    def dt(self) -> float:
        return self.T / self.n_fine

    @property
    def times(self) -> np.ndarray:
        i, j = np.divmod(np.arange(self.n_fine + 1), self.Nbar)
        t = i * (self.T / self.N) + (j / self.Nbar) * (self.T / self.N)
        t[-1] = self.T
        return t

    @property
    def exercise_times(self) -> np.ndarray:
        return self.times[:: self.Nbar]

    def fine_index(self, i: int, j: int) -> int:
        return i * self.Nbar + j


def discount_factor(r: float, t) -> np.ndarray | float:
    return np.exp(-r * np.asarray(t, dtype=float)) if np.ndim(t) else float(np.exp(-r * t))


def _stream_key(seed: int) -> np.ndarray:
    return np.random.SeedSequence(int(seed)).generate_state(2, dtype=np.uint64)


def _block_normals(key: np.ndarray, block: int, step: int, d: int) -> np.ndarray:
    counter = np.array([0, 0, step, block], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(counter=counter, key=key))
    return gen.standard_normal((RNG_BLOCK, d))


@dataclass
class PathSet:
    """Spot trajectories on the fine grid.

    ``provider_mode`` is ``"memory"`` (all spots held as an array) or
    ``"regenerate"`` (only exercise-date checkpoints are held; interval slices
    are rebuilt from the checkpoint on request).  Both modes return identical
    bits.  ``weights`` is ``None`` for Monte Carlo samples and holds exact
    probabilities for enumerated trees.
    """

    params: ModelParams | None
    grid: TimeGrid
    Q: int
    seed: int | None
    provider_mode: str
    weights: np.ndarray | None = None
    workers: int = 1
    _spots: np.ndarray | None = field(default=None, repr=False)
    _checkpoints: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_array(cls, spots, grid: TimeGrid, weights=None, params=None) -> "PathSet":
        spots = np.asarray(spots, dtype=float)
        if spots.ndim == 2:
            spots = spots[:, :, None]
        if spots.shape[1] != grid.n_fine + 1:
            raise ValueError("spots do not match the time grid")
        w = None if weights is None else np.asarray(weights, dtype=float)
        return cls(params, grid, spots.shape[0], None, "memory", w, _spots=spots)

    @property
    def d(self) -> int:
        if self._spots is not None:
            return self._spots.shape[2]
        return self.params.d

    def spots_all(self) -> np.ndarray:
        """Full ``(Q, n_fine + 1, d)`` array (materialised in regenerate mode)."""
        if self._spots is not None:
            return self._spots
        return np.concatenate(
            [self.interval(i)[:, :-1] for i in range(self.grid.N)]
            + [self._checkpoints[:, -1:]],
            axis=1,
        )

    def interval(self, i: int) -> np.ndarray:
        """Spots at ``t_{i,0}, ..., t_{i,Nbar}`` with shape ``(Q, Nbar + 1, d)``."""
        if not 0 <= i < self.grid.N:
            raise IndexError(f"interval {i} out of range")
        nb = self.grid.Nbar
        if self._spots is not None:
            return self._spots[:, i * nb : (i + 1) * nb + 1]
        out = np.empty((self.Q, nb + 1, self.d))
        out[:, 0] = self._checkpoints[:, i]
        steps = range(i * nb + 1, (i + 1) * nb + 1)

        def fill(b):
            lo, hi = b * RNG_BLOCK, min((b + 1) * RNG_BLOCK, self.Q)
            out[lo:hi, 1:] = _evolve(self.params, self.grid, self._key, b, steps, out[lo:hi, 0], hi - lo)

        map_ordered(fill, range(self._n_blocks), self.workers)
        return out

    def spots(self, m: int) -> np.ndarray:
        """Spots at fine-time index ``m``, shape ``(Q, d)``."""
        if not 0 <= m <= self.grid.n_fine:
            raise IndexError(f"time index {m} out of range")
        if self._spots is not None:
            return self._spots[:, m]
        i, j = divmod(m, self.grid.Nbar)
        if j == 0:
            return self._checkpoints[:, i]
        return self.interval(i)[:, j]

    def exercise_spots(self) -> np.ndarray:
        """Spots at the exercise dates, shape ``(Q, N + 1, d)``."""
        if self._spots is not None:
            return self._spots[:, :: self.grid.Nbar]
        return self._checkpoints

    def iter_intervals(self) -> Iterator[tuple[int, np.ndarray]]:
        for i in range(self.grid.N):
            yield i, self.interval(i)

    @property
    def _key(self) -> np.ndarray:
        return _stream_key(self.seed)

    @property
    def _n_blocks(self) -> int:
        return -(-self.Q // RNG_BLOCK)


def _evolve(params, grid, key, block, steps, start, n) -> np.ndarray:
    """Multiply ``start`` forward through ``steps`` for the first ``n`` rows of a block."""
    sigma = np.asarray(params.sigma)
    drift = (params.r - np.asarray(params.delta) - 0.5 * sigma**2) * grid.dt
    vol = sigma * np.sqrt(grid.dt)
    L = params.correlation_factor()
    out = np.empty((n, len(steps), params.d))
    s = start
    for col, m in enumerate(steps):
        g = _block_normals(key, block, m, params.d)[:n]
        # elementwise products keep each row's bits independent of n
        z = sum(g[:, k : k + 1] * L[:, k] for k in range(params.d))
        s = s * np.exp(drift + vol * z)
        out[:, col] = s
    return out


def simulate_paths(
    params: ModelParams,
    grid: TimeGrid,
    Q: int,
    seed: int,
    provider_mode: str = "auto",
    workers: int = 1,
) -> PathSet:
    """Exact lognormal sampling of the model on ``grid``.

    ``provider_mode="auto"`` keeps everything in memory when the spot array
    fits in ``MEMORY_BUDGET`` and falls back to regeneration otherwise.
    """
    if Q <= 0:
        raise ValueError("Q must be positive")
    if abs(grid.T - params.T) > 1e-12:
        raise ValueError("grid horizon does not match model horizon")
    if provider_mode == "auto":
        nbytes = 8 * Q * (grid.n_fine + 1) * params.d
        provider_mode = "memory" if nbytes <= MEMORY_BUDGET else "regenerate"
    if provider_mode not in ("memory", "regenerate"):
        raise ValueError(f"unknown provider_mode {provider_mode!r}")

    key = _stream_key(seed)
    s0 = np.asarray(params.s0)
    n_blocks = -(-Q // RNG_BLOCK)
    nb = grid.Nbar

    if provider_mode == "memory":
        spots = np.empty((Q, grid.n_fine + 1, params.d))
        spots[:, 0] = s0

        def fill(b):
            lo, hi = b * RNG_BLOCK, min((b + 1) * RNG_BLOCK, Q)
            start = np.broadcast_to(s0, (hi - lo, params.d))
            spots[lo:hi, 1:] = _evolve(params, grid, key, b, range(1, grid.n_fine + 1), start, hi - lo)

        map_ordered(fill, range(n_blocks), workers)
        return PathSet(params, grid, Q, seed, "memory", workers=workers, _spots=spots)

    checkpoints = np.empty((Q, grid.N + 1, params.d))
    checkpoints[:, 0] = s0

    def fill_checkpoints(b):
        lo, hi = b * RNG_BLOCK, min((b + 1) * RNG_BLOCK, Q)
        s = np.broadcast_to(s0, (hi - lo, params.d))
        for i in range(grid.N):
            seg = _evolve(params, grid, key, b, range(i * nb + 1, (i + 1) * nb + 1), s, hi - lo)
            s = seg[:, -1]
            checkpoints[lo:hi, i + 1] = s

    map_ordered(fill_checkpoints, range(n_blocks), workers)
    return PathSet(params, grid, Q, seed, "regenerate", workers=workers, _checkpoints=checkpoints)


def tradable_value(paths: PathSet, params: ModelParams, time_index: int, k: int) -> np.ndarray:
    """Discounted value ``exp((delta_k - r) t) S^k_t`` of the dividend-reinvested asset."""
    if not 0 <= k < params.d:
        raise IndexError(f"asset index {k} out of range")
    t = paths.grid.times[time_index]
    return np.exp((params.delta[k] - params.r) * t) * paths.spots(time_index)[:, k]


def asset_growth(params: ModelParams, times: np.ndarray) -> np.ndarray:
    """``exp((delta - r) t)`` for every time and asset, shape ``(len(times), d)``."""
    return np.exp(np.outer(times, np.asarray(params.delta) - params.r))


def mean_and_se(x: np.ndarray, weights: np.ndarray | None = None) -> tuple[float, float]:
    """Sample mean and its standard error (exact weighted mean when weights are given)."""
    x = np.asarray(x, dtype=float)
    if weights is not None:
        # exact probabilities: no sampling error
        return float((weights / weights.sum()) @ x), 0.0
    m = float(x.mean())
    if x.size < 2:
        return m, 0.0
    return m, float(x.std(ddof=1) / np.sqrt(x.size))


def chunks(Q: int, size: int) -> list[slice]:
    return [slice(lo, min(lo + size, Q)) for lo in range(0, Q, size)]


def check_seeds_distinct(seeds: Sequence[int | None]) -> None:
    s = [x for x in seeds if x is not None]
    if len(set(s)) != len(s):
        raise ValueError(f"seeds must be pairwise distinct, got {list(seeds)}")
