# %% [markdown]
# # Hedged P&L of the seller
#
# The seller charges the out-of-sample price, trades the fitted hedge and pays
# the reward when the buyer exercises under a Longstaff-Schwartz rule.  The
# P&L variance measures hedge quality; a CRR delta hedge is the benchmark.

# %%
from bermudan_dual.basis import BasisSpec
from bermudan_dual.config import ExperimentConfig, LsSection, PnlSection, RunSection
from bermudan_dual.experiment import fit_ls, run_dual, run_pnl
from bermudan_dual.market import ModelParams, TimeGrid
from bermudan_dual.payoffs import PayoffSpec

params = ModelParams(100.0, 0.4, 0.0, 0.06, 0.0, 0.5)
cfg = ExperimentConfig(
    params,
    TimeGrid(10, 5, 0.5),
    PayoffSpec("put", strike=100.0),
    BasisSpec("local_hypercube", P=50),
    vanilla=False,
    run=RunSection(Q=100_000),
    ls=LsSection(degree=6, Q=100_000),
    pnl=PnlSection(delta_hedge=True),
)

# %%
res = run_dual(cfg)
policy = fit_ls(cfg)
reports = run_pnl(cfg, res.alpha, res.mapping, policy, res.u0_hat[0])
for label, rep in reports.items():
    s = rep.summary()
    print(f"{label:10s} mean {s['mean']:+.4f}  variance {s['variance']:.3f}  q05 {s['q05']:+.3f}  q95 {s['q95']:+.3f}")

# %% [markdown]
# A coarse text histogram of the fitted-hedge P&L.

# %%
h = reports["dual"].histogram
step = max(1, len(h.counts) // 20)
for lo, hi, c in h.rows()[::step]:
    print(f"{lo:+8.3f} {'#' * int(60 * c / h.counts.max())}")
