"""Train / price / hedge pipelines for one experiment configuration."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .basis import StateMapping, calibrate_mapping
from .config import ExperimentConfig
from .dual import AlphaTensor, DualRun, HedgeSetup, run_backward
from .market import PathSet, mean_and_se, simulate_paths
from .payoffs import reward_matrix
from .pnl import PnlReport, delta_hedge_pnl, simulate_pnl
from .primal import ExercisePolicy, fit_policy, price_lower_bound, stopping_times
from .rogers import RogersResult, european_payoff_reference, european_put_reference, minimize_scalar_dual


def paths_for(cfg: ExperimentConfig, seed: int, Q: int | None = None) -> PathSet:
    return simulate_paths(cfg.params, cfg.grid, Q or cfg.run.Q, seed, cfg.run.provider, cfg.run.workers)


def setup_for(cfg: ExperimentConfig, paths: PathSet, mapping: StateMapping) -> HedgeSetup:
    Z = reward_matrix(cfg.payoff, paths, cfg.params.r)
    return HedgeSetup(paths, cfg.params, Z, cfg.instruments(), mapping, cfg.run.chunk_size, cfg.run.workers)


@dataclass
class DualResult:
    alpha: AlphaTensor
    mapping: StateMapping
    train: DualRun
    oos: DualRun | None

    @property
    def u0(self) -> tuple[float, float]:
        return self.train.price()

    @property
    def u0_hat(self) -> tuple[float, float]:
        return self.oos.price()

    @property
    def seconds(self) -> float:
        return self.train.seconds + (self.oos.seconds if self.oos else 0.0)


def train_dual(cfg: ExperimentConfig) -> tuple[DualRun, StateMapping]:
    """Fit the coefficients on the training sample; the mapping is calibrated on the same sample."""
    paths = paths_for(cfg, cfg.run.seed_train)
    mapping = calibrate_mapping(cfg.basis, paths, cfg.payoff)
    return run_backward(setup_for(cfg, paths, mapping)), mapping


def price_oos(cfg: ExperimentConfig, alpha: AlphaTensor, mapping: StateMapping) -> DualRun:
    paths = paths_for(cfg, cfg.run.seed_oos)
    return run_backward(setup_for(cfg, paths, mapping), alpha)


def run_dual(cfg: ExperimentConfig, out_of_sample: bool = True) -> DualResult:
    train, mapping = train_dual(cfg)
    oos = price_oos(cfg, train.alpha, mapping) if out_of_sample else None
    return DualResult(train.alpha, mapping, train, oos)


def fit_ls(cfg: ExperimentConfig) -> ExercisePolicy:
    paths = paths_for(cfg, cfg.ls.seed, cfg.ls_Q)
    return fit_policy(paths, reward_matrix(cfg.payoff, paths, cfg.params.r), cfg.ls.degree)


def ls_price(cfg: ExperimentConfig, policy: ExercisePolicy) -> tuple[float, float]:
    """Lower bound on the out-of-sample pricing set."""
    paths = paths_for(cfg, cfg.run.seed_oos)
    return price_lower_bound(policy, paths, reward_matrix(cfg.payoff, paths, cfg.params.r))


def run_pnl(
    cfg: ExperimentConfig,
    alpha: AlphaTensor,
    mapping: StateMapping,
    policy: ExercisePolicy,
    price: float,
) -> dict[str, PnlReport]:
    """Dual-hedge P&L and, in one dimension when requested, the CRR delta-hedge P&L.

    The evaluation sample is the P&L seed, or the out-of-sample pricing seed
    when ``pnl.reuse_oos`` is set.
    """
    seed = cfg.run.seed_oos if cfg.pnl.reuse_oos else cfg.run.seed_pnl
    paths = paths_for(cfg, seed)
    setup = setup_for(cfg, paths, mapping)
    tau = stopping_times(policy, paths, setup.Z)
    reports = {
        "dual": simulate_pnl(
            alpha, policy, setup, price, tau=tau, train_seed=cfg.run.seed_train, metadata={"config": cfg.name}
        )
    }
    for rep in reports.values():
        rep.bins = cfg.pnl.bins
    if cfg.pnl.delta_hedge:
        rep = delta_hedge_pnl(paths, cfg.payoff, setup.Z, tau)
        rep.bins = cfg.pnl.bins
        reports["crr_delta"] = rep
    return reports


def run_rogers(cfg: ExperimentConfig) -> RogersResult:
    paths = paths_for(cfg, cfg.run.seed_oos)
    Z = reward_matrix(cfg.payoff, paths, cfg.params.r)
    ref = cfg.rogers.reference
    if ref == "payoff":
        dA = european_payoff_reference(paths, cfg.params, cfg.payoff)
        label = f"european_{cfg.payoff.kind}"
    elif ref == "put":
        strike = cfg.rogers.strike
        if strike is None:
            strike = cfg.payoff.mid_strike if cfg.payoff.kind == "butterfly" else cfg.payoff.strike
        dA = european_put_reference(paths, cfg.params, strike)
        label = f"european_put_{strike:g}"
    else:
        raise ValueError(f"unknown Rogers reference {ref!r}")
    res = minimize_scalar_dual(Z, dA)
    res.reference = label
    return res


def simulation_check(cfg: ExperimentConfig, Q: int | None = None) -> dict[str, float]:
    """Martingale and correlation diagnostics of the simulated model at maturity."""
    paths = paths_for(cfg, cfg.run.seed_train, Q)
    p = cfg.params
    s = paths.exercise_spots()[:, -1]
    out = {}
    for k in range(p.d):
        disc = np.exp((p.delta[k] - p.r) * p.T) * s[:, k]
        m, se = mean_and_se(disc)
        out[f"disc_asset_mean_{k}"] = m
        out[f"disc_asset_se_{k}"] = se
        out[f"s0_{k}"] = p.s0[k]
    if p.d > 1:
        logs = np.log(s)
        c = np.corrcoef(logs, rowvar=False)
        out["log_corr_01"] = float(c[0, 1])
        out["rho"] = p.rho
    return out


def table_row(cfg: ExperimentConfig) -> dict:
    t0 = time.perf_counter()
    res = run_dual(cfg)
    u0, se0 = res.u0
    u1, se1 = res.u0_hat
    return {
        "name": cfg.name,
        "Q": cfg.run.Q,
        "Nbar": cfg.grid.Nbar,
        "P": cfg.basis.P if cfg.basis.is_local else cfg.basis.eta,
        "Vanilla": cfg.vanilla,
        "U0": u0,
        "U0_se": se0,
        "U0hat": u1,
        "U0hat_se": se1,
        "wall_seconds": time.perf_counter() - t0,
    }
