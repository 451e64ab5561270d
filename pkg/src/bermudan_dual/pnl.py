"""Seller's hedged P&L under the fitted strategy and under CRR delta hedging."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dual import AlphaTensor, HedgeSetup, run_backward
from .lattice import BinomialModel, hedge_ratios, snell_solve
from .market import PathSet, mean_and_se
from .payoffs import PayoffSpec
from .primal import ExercisePolicy, stopping_times

DEFAULT_BINS = 80

#: Samples spread over less than this are binned as a constant.
MIN_RANGE = 1e-9


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray

    def rows(self) -> list[tuple[float, float, int]]:
        return [(float(a), float(b), int(c)) for a, b, c in zip(self.edges[:-1], self.edges[1:], self.counts)]


def histogram(samples: np.ndarray, bins: int = DEFAULT_BINS) -> Histogram:
    """Equal-width bins over ``[min, max]``; a (numerically) constant sample fills one bin."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("cannot histogram an empty sample")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    lo, hi = float(x.min()), float(x.max())
    if hi - lo < MIN_RANGE:
        # roundoff-level spread counts as a constant sample
        lo = 0.5 * (lo + hi) - 0.5
        hi = lo + bins
    counts, edges = np.histogram(x, bins=bins, range=(lo, hi))
    return Histogram(edges, counts)


@dataclass
class PnlReport:
    """Per-path P&L with summary statistics.

    ``samples[q]`` is the seller's surplus on path ``q``: initial price plus
    accumulated hedging gains minus the discounted payoff at the exercise date.
    """

    samples: np.ndarray
    metadata: dict = field(default_factory=dict)
    bins: int = DEFAULT_BINS

    @property
    def Q(self) -> int:
        return self.samples.size

    @property
    def mean(self) -> float:
        return float(self.samples.mean())

    @property
    def se(self) -> float:
        return mean_and_se(self.samples)[1]

    @property
    def variance(self) -> float:
        return float(self.samples.var(ddof=1)) if self.Q > 1 else 0.0

    def quantile(self, q: float) -> float:
        return float(np.quantile(self.samples, q))

    def summary(self) -> dict[str, float]:
        return {
            "mean": self.mean,
            "variance": self.variance,
            "q05": self.quantile(0.05),
            "q95": self.quantile(0.95),
        }

    @property
    def histogram(self) -> Histogram:
        return histogram(self.samples, self.bins)


def pnl_from_martingale(price: float, M: np.ndarray, Z: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """``price + M_tau - Z_tau`` per path; ``M`` and ``Z`` have shape ``(Q, N + 1)``."""
    rows = np.arange(Z.shape[0])
    return price + M[rows, tau] - Z[rows, tau]


def simulate_pnl(
    alpha: AlphaTensor,
    policy: ExercisePolicy | None,
    fresh: HedgeSetup,
    price: float,
    tau: np.ndarray | None = None,
    train_seed: int | None = None,
    metadata: dict | None = None,
) -> PnlReport:
    """Hedge with frozen coefficients on ``fresh`` paths and stop with ``policy``.

    ``tau`` overrides the policy (for instance with an exact stopping rule).
    """
    if train_seed is not None and fresh.paths.seed == train_seed:
        raise ValueError("P&L paths reuse the training seed")
    if policy is not None and policy.seed is not None and fresh.paths.seed == policy.seed:
        raise ValueError("P&L paths reuse the policy training seed")
    if tau is None:
        if policy is None:
            raise ValueError("need a policy or explicit stopping times")
        tau = stopping_times(policy, fresh.paths, fresh.Z)
    tau = np.asarray(tau)
    if tau.shape != (fresh.paths.Q,):
        raise ValueError("stopping times do not match the paths")
    run = run_backward(fresh, alpha)
    samples = pnl_from_martingale(price, run.martingale(), fresh.Z, tau)
    meta = {"strategy": "dual", "seed": fresh.paths.seed, "Q": fresh.paths.Q, "price": price}
    meta.update(metadata or {})
    return PnlReport(samples, meta)


def tree_for_paths(paths: PathSet, min_steps: int = 500) -> BinomialModel:
    """CRR tree whose levels refine the subtick grid of ``paths``."""
    grid = paths.grid
    k = -(-min_steps // grid.n_fine)
    steps = grid.n_fine * k
    ex = tuple(range(0, steps + 1, grid.Nbar * k))
    p = paths.params
    return BinomialModel(p.s0[0], p.sigma[0], p.r, p.delta[0], p.T, steps, ex)


def delta_hedge_pnl(
    paths: PathSet,
    payoff: PayoffSpec,
    Z: np.ndarray,
    tau: np.ndarray,
    model: BinomialModel | None = None,
    price: float | None = None,
) -> PnlReport:
    """Self-financing hedge in the asset, rebalanced at every subtick.

    The holding over ``[t_m, t_{m+1}]`` is the tree hedge ratio at the level of
    ``t_m``, linearly interpolated in log-spot between nodes.  The initial
    capital defaults to the tree price.
    """
    if paths.d != 1:
        raise ValueError("delta hedging baseline is one-dimensional")
    params = paths.params
    grid = paths.grid
    if model is None:
        model = tree_for_paths(paths)
    if model.steps % grid.n_fine:
        raise ValueError("tree levels must refine the subtick grid")
    k = model.steps // grid.n_fine
    table = snell_solve(model, payoff)
    if price is None:
        price = table.price
    times = grid.times
    growth = np.exp((params.delta[0] - params.r) * times)
    tau_fine = np.asarray(tau) * grid.Nbar
    gains = np.zeros(paths.Q)
    for i, block in paths.iter_intervals():
        for j in range(grid.Nbar):
            m = i * grid.Nbar + j
            s0, s1 = block[:, j, 0], block[:, j + 1, 0]
            level = m * k
            h = hedge_ratios(table, level)
            nodes = np.log(model.level_spots(level))
            if model.sigma == 0:
                hold = np.full(paths.Q, h[0])
            else:
                hold = np.interp(np.log(s0), nodes, h)
            live = m < tau_fine
            gains += np.where(live, hold * (growth[m + 1] * s1 - growth[m] * s0), 0.0)
    samples = price + gains - Z[np.arange(paths.Q), tau]
    return PnlReport(samples, {"strategy": "crr_delta", "seed": paths.seed, "Q": paths.Q, "price": price, "tree_steps": model.steps})


def write_histogram_csv(report: PnlReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["edge_lo", "edge_hi", "count"])
        for lo, hi, c in report.histogram.rows():
            w.writerow([repr(lo), repr(hi), c])


def write_summary_csv(report: PnlReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "value"])
        for key, value in report.summary().items():
            w.writerow([key, repr(value)])
        w.writerow(["Q", report.Q])
