"""American put under rough Bergomi with a short history window.

Volatility is driven by a fractional motion with Hurst exponent 0.07, so the
future depends on the whole path. The regressions here only look at the last
J+1 observed (log price, log variance) pairs.
"""
import numpy as np

from gpr_american.rbergomi import RbParams, rb_covariance, rb_simulate
from gpr_american.rbergomi_pricers import RbPriceConfig, price_rb_gpr_ei, price_rb_gpr_tree

params = RbParams()
cov = rb_covariance(20, 1.0, params.hurst, params.rho)
paths = rb_simulate(params, cov, 2000, seed=0)
print("simulated", paths.p_count, "paths on", paths.n_steps, "steps")
print("mean terminal variance:", paths.v[:, -1].mean().round(4), "(forward variance 0.09)")
disc = np.exp(-params.r) * paths.s[:, -1]
print("discounted terminal price:", disc.mean().round(3), "+/-", (disc.std() / np.sqrt(paths.p_count)).round(3))

# %% prices at a reduced scale (N=20, P=300)
for strike in (90.0, 100.0, 110.0):
    cfg = RbPriceConfig(n_steps=20, p_count=300, strike=strike, j=0, tree_block=2)
    ei = price_rb_gpr_ei(params, cfg)
    tree = price_rb_gpr_tree(params, cfg)
    print(f"K={strike:5.0f}  GPR-EI {ei.price:7.4f} ({ei.wall_time:4.1f}s)   GPR-Tree {tree.price:7.4f} ({tree.wall_time:4.1f}s)")

# Deep in the money the holder exercises at once.
deep = price_rb_gpr_ei(params, RbPriceConfig(n_steps=20, p_count=300, strike=140.0))
print("K=140:", deep.price)
