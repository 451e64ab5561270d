"""Backward least-squares construction of the hedging martingale.

Stage ``i`` (from ``N - 1`` down to ``0``) regresses the running dual target

    V_{i+1} = max_{m >= i+1} { Z_m - sum_{l=i+2}^{m} dM_l }

minus ``Z_i`` on the elementary increments of interval ``i``.  The subticks
are solved independently, one normal-equation system each, and the target is
then updated pathwise with ``V_i = max(Z_i, V_{i+1} - dM_{i+1})``.  With the
coefficients frozen, the same recursion evaluates the strategy on fresh paths.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ._parallel import map_ordered
from .basis import StateMapping
from .instruments import IncrementBlock, InstrumentSet, interval_blocks
from .market import ModelParams, PathSet, chunks, mean_and_se

#: Eigen-directions of a Gram block below ``RCOND * trace / dim`` are dropped.
RCOND = 1e-10

DEFAULT_CHUNK = 65536


@dataclass
class AlphaTensor:
    """Coefficients ``alpha[i, j-1, p, k]`` for interval ``i``, subtick ``j``, basis ``p``, instrument ``k``."""

    values: np.ndarray

    @classmethod
    def zeros(cls, N: int, Nbar: int, size: int, dbar: int) -> "AlphaTensor":
        return cls(np.zeros((N, Nbar, size, dbar)))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def __getitem__(self, i):
        return self.values[i]


@dataclass
class HedgeSetup:
    """Everything the recursion needs about one sample set."""

    paths: PathSet
    params: ModelParams
    Z: np.ndarray
    instruments: InstrumentSet
    mapping: StateMapping
    chunk_size: int = DEFAULT_CHUNK
    workers: int = 1

    def __post_init__(self):
        if self.Z.shape != (self.paths.Q, self.paths.grid.N + 1):
            raise ValueError("reward matrix does not match the paths")

    @property
    def weights(self):
        return self.paths.weights

    def blocks(self, i: int, spots: np.ndarray) -> list[IncrementBlock]:
        grid = self.paths.grid
        times = grid.times[i * grid.Nbar : (i + 1) * grid.Nbar + 1]
        return interval_blocks(self.instruments, self.mapping, self.params, spots, times, i)


@dataclass
class DualRun:
    """Result of one backward pass.

    ``target`` holds the pathwise maxima ``max_m {Z_m - M_m}`` and ``dM`` the
    per-path martingale increments ``dM[:, i] = M_{i+1} - M_i``.
    """

    alpha: AlphaTensor
    target: np.ndarray
    dM: np.ndarray
    weights: np.ndarray | None = None
    seed: int | None = None
    seconds: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def price(self) -> tuple[float, float]:
        return mean_and_se(self.target, self.weights)

    def martingale(self) -> np.ndarray:
        """``M`` at the exercise dates, shape ``(Q, N + 1)`` with ``M_0 = 0``."""
        Q = self.dM.shape[0]
        return np.concatenate([np.zeros((Q, 1)), np.cumsum(self.dM, axis=1)], axis=1)


def accumulate(block: IncrementBlock, y: np.ndarray, w: np.ndarray | None):
    """Gram matrices, moment vectors and sample counts of one block.

    Local blocks give per-bin ``(size, dbar, dbar)`` Gram matrices; dense
    blocks give a single ``(size*dbar, size*dbar)`` matrix.
    """
    dA = block.dA
    if block.local:
        idx, P, dbar = block.act, block.size, dA.shape[1]
        G = np.empty((P, dbar, dbar))
        wy = y if w is None else w * y
        for k in range(dbar):
            wk = dA[:, k] if w is None else w * dA[:, k]
            for l in range(k, dbar):
                G[:, k, l] = G[:, l, k] = np.bincount(idx, wk * dA[:, l], minlength=P)
        b = np.stack([np.bincount(idx, wy * dA[:, k], minlength=P) for k in range(dbar)], axis=1)
        counts = np.bincount(idx, minlength=P)
        return G, b, counts
    X = block.dense()
    Xw = X if w is None else X * w[:, None]
    return Xw.T @ X, Xw.T @ y, np.array([block.n])


def _pinv_solve(G: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched symmetric solve keeping eigen-directions above ``RCOND * trace / dim``."""
    G = 0.5 * (G + np.swapaxes(G, -1, -2))
    lam, vec = np.linalg.eigh(G)
    dim = G.shape[-1]
    cutoff = RCOND * np.trace(G, axis1=-2, axis2=-1)[..., None] / dim
    keep = (lam > cutoff) & (lam > 0)
    inv = np.where(keep, 1.0 / np.where(keep, lam, 1.0), 0.0)
    proj = np.einsum("...ji,...j->...i", vec, b)
    return np.einsum("...ij,...j->...i", vec, inv * proj)


def solve_normal(G: np.ndarray, b: np.ndarray, counts: np.ndarray, size: int, dbar: int, local: bool) -> np.ndarray:
    """Coefficients ``(size, dbar)`` from accumulated normal equations.

    Local bins with fewer than ``dbar + 1`` samples get zero coefficients.
    """
    if local:
        alpha = _pinv_solve(G, b)
        alpha[counts < dbar + 1] = 0.0
        return alpha
    return _pinv_solve(G, b).reshape(size, dbar)


def solve_stage(blocks: list[IncrementBlock], y: np.ndarray, weights: np.ndarray | None = None) -> np.ndarray:
    """Per-subtick least squares of ``y`` on the increments of each block.

    Returns coefficients of shape ``(Nbar, size, dbar)``.
    """
    out = []
    for blk in blocks:
        G, b, counts = accumulate(blk, y, weights)
        out.append(solve_normal(G, b, counts, blk.size, blk.dA.shape[1], blk.local))
    return np.stack(out)


def update_target(target: np.ndarray, Z_i: np.ndarray, dM: np.ndarray) -> np.ndarray:
    return np.maximum(Z_i, target - dM)


def run_backward(setup: HedgeSetup, alpha: AlphaTensor | None = None) -> DualRun:
    """Backward recursion over all stages.

    Without ``alpha`` the coefficients are fitted on ``setup``'s samples
    (in-sample run); with ``alpha`` they are only applied (out-of-sample run).
    Gram accumulation runs over fixed path chunks reduced in chunk order, so
    results do not depend on ``setup.workers``.
    """
    t0 = time.perf_counter()
    paths = setup.paths
    grid = paths.grid
    N, Nbar = grid.N, grid.Nbar
    size, dbar = setup.mapping.spec.size, setup.instruments.dbar
    local = setup.mapping.spec.is_local
    fit = alpha is None
    if fit:
        alpha = AlphaTensor.zeros(N, Nbar, size, dbar)
    elif alpha.shape != (N, Nbar, size, dbar):
        raise ValueError(f"alpha shape {alpha.shape} does not match setup {(N, Nbar, size, dbar)}")

    Z = setup.Z
    w = setup.weights
    Q = paths.Q
    target = Z[:, N].copy()
    dM = np.zeros((Q, N))
    parts = chunks(Q, setup.chunk_size)
    empty_bins = 0

    for i in range(N - 1, -1, -1):
        S = paths.interval(i)
        if fit:
            y = target - Z[:, i]

            def gram(c):
                wc = None if w is None else w[c]
                return [accumulate(blk, y[c], wc) for blk in setup.blocks(i, S[c])]

            acc = None
            for res in map_ordered(gram, parts, setup.workers):
                if acc is None:
                    acc = [list(r) for r in res]
                else:
                    for a, r in zip(acc, res):
                        for n in range(3):
                            a[n] = a[n] + r[n]
            for j, (G, b, counts) in enumerate(acc):
                alpha.values[i, j] = solve_normal(G, b, counts, size, dbar, local)
                if local:
                    empty_bins += int(np.sum(counts < dbar + 1))

        coef = alpha.values[i]

        def increment(c):
            return sum(blk.apply(coef[j]) for j, blk in enumerate(setup.blocks(i, S[c])))

        for c, inc in zip(parts, map_ordered(increment, parts, setup.workers)):
            dM[c, i] = inc
        target = update_target(target, Z[:, i], dM[:, i])
        del S

    return DualRun(
        alpha,
        target,
        dM,
        w,
        seed=paths.seed,
        seconds=time.perf_counter() - t0,
        diagnostics={"starved_bins": empty_bins, "fitted": fit},
    )


def dual_price_in_sample(run: DualRun) -> tuple[float, float]:
    """``U_0^Q``: mean of the stage-0 pathwise maxima and its standard error."""
    return run.price()


def dual_price_out_of_sample(alpha: AlphaTensor, fresh: HedgeSetup, train_seed: int | None) -> DualRun:
    """Apply frozen coefficients and mapping to an independent sample set."""
    if train_seed is not None and fresh.paths.seed == train_seed:
        raise ValueError("out-of-sample paths reuse the training seed")
    return run_backward(fresh, alpha)
