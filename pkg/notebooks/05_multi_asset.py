# %% [markdown]
# # Two- and three-asset options
#
# Min-put on two assets with a per-asset bin grid, and a basket put whose
# bins follow a one-dimensional projection of the state.  Adding European
# options on each asset to the hedge lowers both the price and the P&L
# spread.  With 100 bins and four instruments there are 400 coefficients
# per rebalancing date, so the vanilla hedge needs about a million paths:
# at 10^5 paths it overfits and its P&L variance exceeds the stock-only one.

# %%
from bermudan_dual.basis import BasisSpec
from bermudan_dual.config import ExperimentConfig, LsSection, RunSection
from bermudan_dual.experiment import fit_ls, ls_price, run_dual, run_pnl
from bermudan_dual.market import ModelParams, TimeGrid
from bermudan_dual.payoffs import PayoffSpec

minput = ModelParams((120.0, 100.0), (0.4, 0.8), 0.0, 0.06, 0.0, 0.5)
for vanilla in (False, True):
    cfg = ExperimentConfig(
        minput,
        TimeGrid(10, 1, 0.5),
        PayoffSpec("min_put", strike=100.0),
        BasisSpec("local_hypercube", P=10, d=2),
        vanilla,
        RunSection(Q=1_000_000),
        LsSection(degree=5, Q=200_000),
    )
    res = run_dual(cfg)
    policy = fit_ls(cfg)
    rep = run_pnl(cfg, res.alpha, res.mapping, policy, res.u0_hat[0])["dual"]
    print(f"min-put vanilla={vanilla!s:5s} U0^ = {res.u0_hat[0]:.3f}  LS = {ls_price(cfg, policy)[0]:.3f}  P&L var = {rep.variance:.2f}")

# %%
basket = ModelParams((100.0,) * 3, 0.2, 0.0, 0.05, 0.3, 1.0)
cfg = ExperimentConfig(
    basket,
    TimeGrid(10, 5, 1.0),
    PayoffSpec("basket_put", strike=100.0, weights=(1 / 3,) * 3),
    BasisSpec("local_signed_payoff", P=50, d=3),
    False,
    RunSection(Q=100_000),
)
res = run_dual(cfg)
print(f"basket put U0 = {res.u0[0]:.3f}  U0^ = {res.u0_hat[0]:.3f}")
