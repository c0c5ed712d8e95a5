"""State-space systems with state-only outputs and a fixed-step RK4 simulator."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

__all__ = [
    "SystemModel",
    "Trajectory",
    "IntegratorConfig",
    "DivergenceError",
    "output_rate",
    "rk4_step",
    "simulate",
    "check_output_jacobian",
    "DIVERGENCE_BOUND",
]

DIVERGENCE_BOUND = 1e9

Vector = np.ndarray
InputSignal = Callable[[float], Vector]


class DivergenceError(ArithmeticError):
    """Integration produced a non-finite or unbounded state."""

    def __init__(self, time, message="state diverged"):
        super().__init__(f"{message} at t={time:.17g}")
        self.time = time


@dataclass(frozen=True)
class SystemModel:
    """Nonlinear system ``x' = f(x, u)``, ``y = h(x)``.

    ``f`` takes the state and input vectors and returns the state derivative;
    ``h`` takes the state only, so the model has no direct feedthrough.
    The optional ``storage`` / ``storage_gradient`` pair carries a candidate
    storage function for dissipativity checks, and ``strictness`` the output
    strictness level when the model is used as an output strictly
    dissipative controller.
    """

    state_dim: int
    input_dim: int
    output_dim: int
    f: Callable[[Vector, Vector], Vector]
    h: Callable[[Vector], Vector]
    output_jacobian: Optional[Callable[[Vector], np.ndarray]] = None
    storage: Optional[Callable[[Vector], float]] = None
    storage_gradient: Optional[Callable[[Vector], Vector]] = None
    strictness: Optional[float] = None
    name: str = ""

    def __post_init__(self):
        for attr in ("state_dim", "input_dim", "output_dim"):
            if getattr(self, attr) < 0:
                raise ValueError(f"{attr} must be non-negative")
        if self.storage_gradient is not None and self.storage is None:
            raise ValueError("storage_gradient given without storage")
        if self.strictness is not None and not self.strictness > 0:
            raise ValueError(f"strictness must be positive, got {self.strictness}")


@dataclass(frozen=True)
class IntegratorConfig:
    step: float = 1e-3
    t_end: float = 30.0
    record_every: int = 1

    def __post_init__(self):
        if not (self.step > 0 and math.isfinite(self.step)):
            raise ValueError(f"step must be positive, got {self.step}")
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if self.step > self.t_end * (1 + 1e-12):
            raise ValueError(f"step {self.step} exceeds t_end {self.t_end}")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ValueError(f"record_every must be a positive integer, got {self.record_every}")

    @property
    def n_steps(self) -> int:
        """Number of integration steps; a ratio within 1e-9 of an integer is rounded."""
        ratio = self.t_end / self.step
        nearest = round(ratio)
        if abs(ratio - nearest) <= 1e-9 * max(1.0, ratio):
            return int(nearest)
        return int(math.floor(ratio))

    @property
    def n_records(self) -> int:
        return self.n_steps // self.record_every + 1


@dataclass(eq=False)
class Trajectory:
    """Sampled states, inputs, outputs and output rates on a uniform grid.

    Arrays are indexed ``[sample, component]``. When the run diverged the
    trajectory holds the samples recorded before the blow-up.
    """

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    outputs: np.ndarray
    output_rates: np.ndarray
    diverged: bool = False
    divergence_time: Optional[float] = None

    def __len__(self):
        return len(self.times)

    @property
    def step(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0


def _zero_input(dim):
    u = np.zeros(dim)
    return lambda t: u


def _check_dims(model, x, u):
    if x.shape != (model.state_dim,):
        raise ValueError(f"state has shape {x.shape}, expected ({model.state_dim},)")
    if u.shape != (model.input_dim,):
        raise ValueError(f"input has shape {u.shape}, expected ({model.input_dim},)")


def _fd_output_rate(model, x, dx):
    delta = 1e-6 * (1.0 + np.linalg.norm(x))
    return (np.asarray(model.h(x + delta * dx), dtype=float)
            - np.asarray(model.h(x - delta * dx), dtype=float)) / (2.0 * delta)


def output_rate(model: SystemModel, x, u) -> np.ndarray:
    """Output derivative ``dh/dx(x) @ f(x, u)``.

    Uses ``model.output_jacobian`` when available, otherwise a central
    difference of ``h`` along ``f(x, u)`` with step ``1e-6 * (1 + |x|)``,
    which is accurate to roughly 1e-8 relative.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    _check_dims(model, x, u)
    dx = np.asarray(model.f(x, u), dtype=float)
    if model.output_jacobian is not None:
        return np.asarray(model.output_jacobian(x), dtype=float) @ dx
    return _fd_output_rate(model, x, dx)


def check_output_jacobian(model: SystemModel, states, rtol: float = 1e-5) -> bool:
    """Compare the analytic output Jacobian with central differences of ``h``."""
    if model.output_jacobian is None:
        raise ValueError("model has no output_jacobian")
    for x in np.atleast_2d(np.asarray(states, dtype=float)):
        jac = np.asarray(model.output_jacobian(x), dtype=float)
        fd = np.empty((model.output_dim, model.state_dim))
        for j in range(model.state_dim):
            e = np.zeros(model.state_dim)
            e[j] = 1e-6 * (1.0 + abs(x[j]))
            fd[:, j] = (np.asarray(model.h(x + e)) - np.asarray(model.h(x - e))) / (2 * e[j])
        scale = max(np.max(np.abs(jac), initial=0.0), 1.0)
        if np.max(np.abs(jac - fd), initial=0.0) > rtol * scale:
            return False
    return True


def rk4_step(model: SystemModel, x, u_fn: InputSignal | None, t: float, step: float) -> np.ndarray:
    """One classical Runge-Kutta step from ``(t, x)``.

    The input is sampled at ``t``, ``t + step/2`` and ``t + step``. Raises
    ``DivergenceError`` if the new state is not finite.
    """
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    if u_fn is None:
        u_fn = _zero_input(model.input_dim)
    f = model.f
    half = 0.5 * step
    u0 = u_fn(t)
    u_mid = u_fn(t + half)
    u1 = u_fn(t + step)
    k1 = f(x, u0)
    k2 = f(x + half * k1, u_mid)
    k3 = f(x + half * k2, u_mid)
    k4 = f(x + step * k3, u1)
    x_new = x + (step / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
    if not math.isfinite(x_new @ x_new):
        raise DivergenceError(t + step, "non-finite or overflowing state")
    return x_new


def simulate(model: SystemModel, x0, u_fn: InputSignal | None, cfg: IntegratorConfig) -> Trajectory:
    """Integrate ``model`` from ``x0`` on the uniform grid ``k * cfg.step``.

    Every ``cfg.record_every``-th state is recorded together with the input,
    output and output rate at that instant. A non-finite state or one with
    norm above ``DIVERGENCE_BOUND`` stops the run; the returned trajectory
    then carries ``diverged=True`` and the samples recorded so far.
    """
    x = np.array(x0, dtype=float)
    if x.shape != (model.state_dim,):
        raise ValueError(f"x0 has shape {x.shape}, expected ({model.state_dim},)")
    if u_fn is None:
        u_fn = _zero_input(model.input_dim)

    step = cfg.step
    n_steps = cfg.n_steps
    every = cfg.record_every
    n_rec = cfg.n_records
    states = np.empty((n_rec, model.state_dim))
    inputs = np.empty((n_rec, model.input_dim))
    states[0] = x
    inputs[0] = u_fn(0.0)
    n_filled = 1
    diverged = False
    divergence_time = None
    bound_sq = DIVERGENCE_BOUND ** 2

    for k in range(n_steps):
        t = k * step
        try:
            x = rk4_step(model, x, u_fn, t, step)
        except DivergenceError as err:
            diverged, divergence_time = True, err.time
            break
        if x @ x > bound_sq:
            diverged, divergence_time = True, (k + 1) * step
            break
        if (k + 1) % every == 0:
            states[n_filled] = x
            inputs[n_filled] = u_fn((k + 1) * step)
            n_filled += 1

    states = states[:n_filled]
    inputs = inputs[:n_filled]
    times = np.arange(n_filled) * (step * every)
    outputs = np.array([model.h(s) for s in states], dtype=float).reshape(n_filled, model.output_dim)
    rates = np.array([output_rate(model, s, u) for s, u in zip(states, inputs)],
                     dtype=float).reshape(n_filled, model.output_dim)
    return Trajectory(times, states, inputs, outputs, rates, diverged, divergence_time)
