"""
Checking dissipation inequalities along trajectories
====================================================

A pendulum with its mechanical energy as storage never gains more energy than
``u * dy/dt`` supplies. Doubling the storage breaks the inequality, and a
first-order controller is strict exactly up to ``1/alpha``.
"""

import dataclasses

import numpy as np

from niconsensus import IntegratorConfig, simulate
from niconsensus.analysis import check_ni_dissipation, check_osni_dissipation
from niconsensus.models import PendulumParams, cubic_osni_controller, make_pendulum


def forcing(t):
    return np.array([0.4 * np.sin(1.3 * t)])


cfg = IntegratorConfig(step=1e-3, t_end=8.0)

pendulum = make_pendulum(PendulumParams(mass=1.5, length=0.3, spring=5.0))
traj = simulate(pendulum, [0.3, 0.0], forcing, cfg)
print(check_ni_dissipation(pendulum, traj, tol=1e-4).as_dict())

# same trajectory, wrong storage
doubled = dataclasses.replace(pendulum, storage=lambda x: 2 * pendulum.storage(x),
                              storage_gradient=lambda x: 2 * pendulum.storage_gradient(x))
print(check_ni_dissipation(doubled, traj, tol=1e-4).as_dict())

# x' = -10x - 15x^3 + 20u is strict up to 1/20
ctrl = cubic_osni_controller(beta=10.0, phi=15.0, alpha=20.0)
traj = simulate(ctrl, [0.0], forcing, cfg)
for eps in (0.025, 0.05, 0.1):
    rep = check_osni_dissipation(ctrl, traj, eps, tol=1e-4)
    print(f"epsilon={eps:<6} pass={rep.passed}  worst residual={rep.max_violation:.2e}")
