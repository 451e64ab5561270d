"""Longstaff-Schwartz exercise policy and lower-bound price."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import BasisSpec, StateMapping, polynomial_bounds
from .dual import _pinv_solve
from .market import ModelParams, PathSet, chunks, mean_and_se

#: Fewer in-the-money samples than this and the regression uses all paths.
MIN_ITM = 100


@dataclass
class ExercisePolicy:
    """Continuation-value coefficients ``beta[n]`` for exercise dates ``0..N-1``.

    The regression state is the polynomial basis of the affinely rescaled
    spots at ``T_n``.
    """

    beta: np.ndarray
    degree: int
    mapping: StateMapping
    seed: int | None = None

    @property
    def N(self) -> int:
        return self.beta.shape[0]

    def continuation(self, n: int, spots: np.ndarray) -> np.ndarray:
        return self.mapping.activations(n, spots) @ self.beta[n]


def policy_mapping(params: ModelParams, exercise_times: np.ndarray, degree: int) -> StateMapping:
    spec = BasisSpec("polynomial", eta=degree, d=params.d)
    lo, hi = polynomial_bounds(params, exercise_times)
    return StateMapping(spec, np.asarray(exercise_times), lo=lo, hi=hi)


def fit_policy(paths: PathSet, rewards: np.ndarray, degree: int, chunk_size: int = 262144) -> ExercisePolicy:
    """Backward regression of realised discounted cash flows on in-the-money paths."""
    spots = paths.exercise_spots()
    N = paths.grid.N
    mapping = policy_mapping(paths.params, paths.grid.exercise_times, degree)
    nb = mapping.spec.size
    beta = np.zeros((N, nb))
    cash = rewards[:, N].copy()
    w = paths.weights
    for n in range(N - 1, -1, -1):
        z = rewards[:, n]
        itm = z > 0
        if itm.sum() < MIN_ITM:
            itm = np.ones_like(itm)
        G = np.zeros((nb, nb))
        b = np.zeros(nb)
        for c in chunks(paths.Q, chunk_size):
            sel = itm[c]
            X = mapping.activations(n, spots[c, n][sel])
            Xw = X if w is None else X * w[c][sel][:, None]
            G += Xw.T @ X
            b += Xw.T @ cash[c][sel]
        beta[n] = _pinv_solve(G, b)
        cont = _continuation(mapping, n, spots, beta[n], chunk_size)
        exercise = (z > 0) & (z >= cont)
        cash = np.where(exercise, z, cash)
    return ExercisePolicy(beta, degree, mapping, paths.seed)


def _continuation(mapping, n, spots, beta, chunk_size):
    out = np.empty(spots.shape[0])
    for c in chunks(spots.shape[0], chunk_size):
        out[c] = mapping.activations(n, spots[c, n]) @ beta
    return out


def stopping_times(policy: ExercisePolicy, paths: PathSet, rewards: np.ndarray, chunk_size: int = 262144) -> np.ndarray:
    """First date whose payoff is positive and at least the regressed continuation; else ``N``."""
    spots = paths.exercise_spots()
    N = paths.grid.N
    if policy.N != N:
        raise ValueError("policy and paths have different exercise dates")
    tau = np.full(paths.Q, N, dtype=np.int64)
    alive = np.ones(paths.Q, dtype=bool)
    for n in range(N):
        z = rewards[:, n]
        cont = _continuation(policy.mapping, n, spots, policy.beta[n], chunk_size)
        stop = alive & (z > 0) & (z >= cont)
        tau[stop] = n
        alive &= ~stop
    return tau


def price_lower_bound(policy: ExercisePolicy, paths: PathSet, rewards: np.ndarray) -> tuple[float, float]:
    """Mean of ``Z_tau`` under the fitted policy on independent paths."""
    if policy.seed is not None and paths.seed == policy.seed:
        raise ValueError("lower bound must be evaluated on paths independent of the fit")
    tau = stopping_times(policy, paths, rewards)
    return mean_and_se(rewards[np.arange(paths.Q), tau], paths.weights)
