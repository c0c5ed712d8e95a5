"""
Perturbing the plant parameters
===============================

The controllers are designed without knowing the plant parameters. Here every
pendulum's mass, length and spring constant is scaled by a random factor in
[0.8, 1.2] and the network is simulated again. This takes about a minute.
"""

from niconsensus.runner import sweep
from niconsensus.scenario import builtin_pendulum_preset

summary = sweep(builtin_pendulum_preset(), perturbation=0.2, n_runs=10, seed=7)
for r in summary["runs"]:
    print(f"run {r['run']:2d}  settled={r['settled']}  t={r['settle_time']}")
print(f"{summary['n_settled']}/{len(summary['runs'])} settled")
