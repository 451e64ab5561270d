# %% [markdown]
# # One-parameter dual bound
#
# The classical baseline scales a single reference martingale, the
# discounted value of a European option, and minimises the dual objective
# over the scale.  The objective is convex in the scale.

# %%
import numpy as np

from bermudan_dual.market import ModelParams, TimeGrid, simulate_paths
from bermudan_dual.payoffs import PayoffSpec, reward_matrix
from bermudan_dual.rogers import dual_objective, european_payoff_reference, european_put_reference, minimize_scalar_dual

params = ModelParams(95.0, 0.4, 0.0, 0.06, 0.0, 0.5)
payoff = PayoffSpec("butterfly", strikes=(90.0, 110.0))
paths = simulate_paths(params, TimeGrid(10, 1, 0.5), 200_000, seed=2)
Z = reward_matrix(payoff, paths, params.r)

# %%
for label, dA in [
    ("European butterfly", european_payoff_reference(paths, params, payoff)),
    ("European put K=100", european_put_reference(paths, params, 100.0)),
]:
    res = minimize_scalar_dual(Z, dA)
    print(f"{label:20s} alpha* = {res.alpha_star:+.4f}  bound = {res.price:.4f} (se {res.se:.4f})")

# %%
dA = european_payoff_reference(paths, params, payoff)
M = np.concatenate([np.zeros((paths.Q, 1)), np.cumsum(dA, axis=1)], axis=1)
for a in np.linspace(0, 5, 11):
    print(f"alpha {a:4.1f}  g = {dual_objective(a, Z, M).mean():.4f}")
