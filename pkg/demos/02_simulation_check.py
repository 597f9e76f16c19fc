"""
Checking the equilibrium with a stochastic simulation
=====================================================

Users post and repost at exponential times into finite feeds. The
time-averaged feed content should settle on the equilibrium, whatever the
feed size.
"""

import numpy as np

from echofeed import SimConfig, SyntheticSpec, generate, simulate, solve_equilibrium
from echofeed.simulator import convergence_sweep

graph, rates = generate(SyntheticSpec(30, 3, p_intra=0.3, p_inter=0.05, seed=2,
                                      selfpost_range=(0.2, 1.0), repost_range=(0.2, 2.0)))
exact = solve_equilibrium(graph, rates)

run = simulate(graph, rates, SimConfig(horizon=5000.0, feed_size=10, seed=0))
err = np.abs(run.state.p - exact.p)
print("events:", {k: run.counts[k] for k in ("selfpost", "repost", "recommendation")})
print("max |simulated - equilibrium| =", round(float(err.max()), 4))
print("entries inside their 99% batch-means interval:", int((err <= run.half_width).sum()), "of", err.size)

# feed size should not matter beyond noise
for k in (1, 3, 30):
    res = simulate(graph, rates, SimConfig(horizon=3000.0, feed_size=k, seed=k))
    print(f"feed size {k:>2}: max error {np.abs(res.state.p - exact.p).max():.4f}")

# error against horizon
for row in convergence_sweep(graph, rates, SimConfig(1.0, seed=1), [30, 300, 3000]):
    print(f"T = {row['horizon']:>6.0f}  mean error {row['mean_abs_error']:.4f}  ({row['events']} events)")
