"""Numerical certificates computed along simulated trajectories.

Dissipation checks compare the storage rate with the supply rate pointwise
on the recorded grid. The Lyapunov monitor evaluates the network storage
``W = sum V_p + sum V_c - Yhat_p . Y_c`` and its decrease bound. Steady
state checks only witness the closed-loop consequence ``mean(Y_c) = 0`` of
the controller steady-state assumptions; the underlying inequality over all
constant inputs is never verified.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .dynamics import SystemModel, Trajectory
from .network import ClosedLoopSystem, NetworkTrajectory

__all__ = [
    "DissipationReport",
    "LyapunovSeries",
    "ConsensusReport",
    "SteadyStateWindow",
    "PositiveDefiniteReport",
    "total_storage",
    "storage_rate",
    "check_ni_dissipation",
    "check_osni_dissipation",
    "lyapunov_series",
    "check_lyapunov_decrease",
    "consensus_error",
    "detect_steady_state",
    "check_steady_state_consequence",
    "sample_positive_definite",
    "STEADY_STATE_NOTE",
]

STEADY_STATE_NOTE = (
    "steady-state windows witness only the closed-loop consequence mean(Y_c) = 0; "
    "the controller input/output inequality over all constant inputs is not verified")


@dataclass
class DissipationReport:
    kind: str
    epsilon: float
    max_violation: float
    violation_times: list
    tolerance: float
    passed: bool
    method: str = "gradient"

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "epsilon": self.epsilon,
            "max_violation": self.max_violation,
            "n_violations": len(self.violation_times),
            "first_violation_time": self.violation_times[0] if self.violation_times else None,
            "tolerance": self.tolerance,
            "method": self.method,
            "pass": self.passed,
        }


@dataclass
class LyapunovSeries:
    """Network storage ``W`` along a trajectory with its decrease bound.

    ``margin = bound - dW_dt`` is non-negative wherever the decrease
    inequality holds exactly.
    """

    times: np.ndarray
    W: np.ndarray
    dW_dt: np.ndarray
    bound: np.ndarray
    margin: np.ndarray
    eps_min: float

    @classmethod
    def from_values(cls, times, W, Ydot_c, eps_min: float) -> "LyapunovSeries":
        times = np.asarray(times, dtype=float)
        W = np.asarray(W, dtype=float)
        if len(times) < 3:
            raise ValueError(f"need at least 3 samples to differentiate, got {len(times)}")
        if not np.all(np.isfinite(W)):
            raise ValueError("W series contains non-finite values")
        dW = np.gradient(W, times, edge_order=2)
        rates = np.asarray(Ydot_c, dtype=float).reshape(len(times), -1)
        bound = -eps_min * np.sum(rates ** 2, axis=1)
        return cls(times, W, dW, bound, bound - dW, float(eps_min))

    def summary(self) -> dict:
        interior = self.margin[1:-1]
        return {
            "W0": float(self.W[0]),
            "W_end": float(self.W[-1]),
            "worst_margin": float(interior.min()) if interior.size else None,
            "eps_min": self.eps_min,
        }


@dataclass
class ConsensusReport:
    times: np.ndarray
    error: np.ndarray
    final_error: float
    threshold: float
    settled: bool
    settle_time: Optional[float]

    def as_dict(self) -> dict:
        return {
            "final_error": self.final_error,
            "max_error": float(self.error.max()) if self.error.size else 0.0,
            "threshold": self.threshold,
            "settled": self.settled,
            "settle_time": self.settle_time,
        }


@dataclass
class SteadyStateWindow:
    start: float
    end: float
    mean_Y_c: np.ndarray
    mean_U_c: np.ndarray
    max_rate: float

    def as_dict(self) -> dict:
        return {
            "start": self.start,
            "end": self.end,
            "mean_Y_c": [float(v) for v in self.mean_Y_c],
            "mean_U_c": [float(v) for v in self.mean_U_c],
            "max_rate": self.max_rate,
        }


@dataclass
class PositiveDefiniteReport:
    passed: bool
    value_at_origin: float
    radius: float
    n_samples: int
    seed: int
    counterexample: Optional[np.ndarray] = None
    counterexample_value: Optional[float] = None
    counterexample_index: Optional[int] = None

    def as_dict(self) -> dict:
        return {
            "pass": self.passed,
            "value_at_origin": self.value_at_origin,
            "radius": self.radius,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "counterexample": (None if self.counterexample is None
                               else [float(v) for v in self.counterexample]),
            "counterexample_value": self.counterexample_value,
        }


def total_storage(clm: ClosedLoopSystem, x) -> float:
    """``W(x) = sum_i V_pi + sum_k V_ck - ((Q kron I) Y_p) . Y_c``."""
    if not clm.has_storage:
        raise ValueError("every plant and controller must carry a storage function")
    x = np.asarray(x, dtype=float)
    xp, xc = clm.split(x)
    yp, yc = clm.outputs(x)
    yhat = (clm.incidence.entries @ yp.reshape(clm.n_nodes, clm.io_dim)).ravel()
    return clm.plants.storage(xp) + clm.controllers.storage(xc) - float(yhat @ yc)


def storage_rate(model: SystemModel, traj: Trajectory, method: str = "auto") -> np.ndarray:
    """Time derivative of the model's storage along ``traj``.

    ``"gradient"`` evaluates ``grad V . f(x, u)`` pointwise; ``"finite_difference"``
    differentiates the sampled ``V(x(t))`` with second-order differences.
    ``"auto"`` prefers the gradient when the model provides one.
    """
    if model.storage is None:
        raise ValueError(f"model {model.name or ''} has no storage function")
    if len(traj.times) < 3:
        raise ValueError(f"trajectory has {len(traj.times)} samples; at least 3 required")
    if method == "auto":
        method = "gradient" if model.storage_gradient is not None else "finite_difference"
    if method == "gradient":
        if model.storage_gradient is None:
            raise ValueError("model has no storage gradient")
        return np.array([float(model.storage_gradient(x) @ model.f(x, u))
                         for x, u in zip(traj.states, traj.inputs)])
    if method == "finite_difference":
        values = np.array([model.storage(x) for x in traj.states], dtype=float)
        return np.gradient(values, traj.times, edge_order=2)
    raise ValueError(f"unknown method {method!r}")


def _dissipation(model, traj, epsilon, tol, kind, method):
    supply = np.einsum("ij,ij->i", traj.inputs, traj.output_rates)
    if epsilon:
        supply = supply - epsilon * np.einsum("ij,ij->i", traj.output_rates, traj.output_rates)
    resolved = method
    if method == "auto":
        resolved = "gradient" if model.storage_gradient is not None else "finite_difference"
    residual = storage_rate(model, traj, resolved) - supply
    if tol is None:
        tol = 1e-6 + 1e-4 * float(np.max(np.abs(supply), initial=0.0))
    worst = max(float(np.max(residual)), 0.0)
    bad = np.flatnonzero(residual > tol)
    return DissipationReport(kind, float(epsilon), worst, [float(t) for t in traj.times[bad]],
                             float(tol), worst <= tol, resolved)


def check_ni_dissipation(model: SystemModel, traj: Trajectory, tol: float | None = None,
                         method: str = "auto") -> DissipationReport:
    """Check ``V' <= u . y'`` at every sample of ``traj``.

    The default tolerance is ``1e-6 + 1e-4 * max|supply|``.
    """
    return _dissipation(model, traj, 0.0, tol, "NI", method)


def check_osni_dissipation(model: SystemModel, traj: Trajectory, epsilon: float,
                           tol: float | None = None, method: str = "auto") -> DissipationReport:
    """Check ``V' <= u . y' - epsilon |y'|^2`` at every sample of ``traj``."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    return _dissipation(model, traj, epsilon, tol, "OSNI", method)


def lyapunov_series(clm: ClosedLoopSystem, ntraj: NetworkTrajectory) -> LyapunovSeries:
    """Network storage along ``ntraj`` with central-difference rates."""
    if len(ntraj.times) < 3:
        raise ValueError(f"trajectory has {len(ntraj.times)} samples; at least 3 required")
    W = np.array([total_storage(clm, x) for x in ntraj.states])
    return LyapunovSeries.from_values(ntraj.times, W, ntraj.Ydot_c, clm.eps_min)


def check_lyapunov_decrease(series: LyapunovSeries, tol: float) -> tuple[bool, float]:
    """True iff ``dW/dt <= -eps_min |Y_c'|^2 + tol`` at every interior sample.

    Also returns the worst (smallest) interior margin.
    """
    interior = series.margin[1:-1]
    if interior.size == 0:
        return True, math.inf
    worst = float(interior.min())
    return bool(worst >= -tol), worst


def consensus_error(ntraj: NetworkTrajectory, threshold: float) -> ConsensusReport:
    """Largest pairwise output distance and the time it settles below ``threshold``.

    ``settle_time`` is the earliest recorded ``t*`` with ``e(t) < threshold``
    for every recorded ``t >= t*``.
    """
    y = ntraj.plant_outputs()
    if y.shape[1] < 2:
        raise ValueError("consensus needs at least two nodes")
    diff = y[:, :, None, :] - y[:, None, :, :]
    error = np.sqrt(np.max(np.sum(diff ** 2, axis=-1), axis=(1, 2)))
    above = np.flatnonzero(error >= threshold)
    times = ntraj.times
    if above.size == 0:
        settled, settle_time = True, float(times[0])
    elif above[-1] == len(times) - 1:
        settled, settle_time = False, None
    else:
        settled, settle_time = True, float(times[above[-1] + 1])
    return ConsensusReport(times, error, float(error[-1]), float(threshold), settled, settle_time)


def _runs(mask):
    """(start, stop) index pairs of maximal True runs, stop exclusive."""
    padded = np.concatenate([[False], mask, [False]]).astype(np.int8)
    edges = np.flatnonzero(np.diff(padded))
    return list(zip(edges[::2], edges[1::2]))


def detect_steady_state(ntraj: NetworkTrajectory, rate_tol: float = 1e-4,
                        min_duration: float = 0.5) -> list[SteadyStateWindow]:
    """Maximal windows where every controller output rate stays below ``rate_tol``."""
    rates = np.max(np.abs(ntraj.Ydot_c), axis=1, initial=0.0)
    times = ntraj.times
    windows = []
    for a, b in _runs(rates < rate_tol):
        start, end = float(times[a]), float(times[b - 1])
        if end - start < min_duration or end <= start:
            continue
        windows.append(SteadyStateWindow(start, end, ntraj.Y_c[a:b].mean(axis=0),
                                         ntraj.U_c[a:b].mean(axis=0),
                                         float(rates[a:b].max())))
    return windows


def check_steady_state_consequence(windows: list[SteadyStateWindow], tol: float) -> bool:
    """True iff every window has ``|mean(Y_c)| <= tol``.

    In steady state the plant-network input equals ``Y_c``, so a vanishing
    mean controller output means the detected steady state is a consensus
    state. See ``STEADY_STATE_NOTE`` for what this does not establish.
    """
    return all(float(np.linalg.norm(w.mean_Y_c)) <= tol for w in windows)


def sample_positive_definite(fn: Callable[[np.ndarray], float], dim: int, radius: float = 1.0,
                             n_samples: int = 1000, seed: int = 0) -> PositiveDefiniteReport:
    """Sample ``fn`` on the punctured ball ``0 < |x| <= radius``.

    Passes when ``|fn(0)| <= 1e-12`` and every sample is strictly positive.
    Samples are uniform in the ball (Gaussian direction, radius ``R*U**(1/dim)``).
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    at_origin = float(fn(np.zeros(dim)))
    report = PositiveDefiniteReport(abs(at_origin) <= 1e-12, at_origin, float(radius),
                                    int(n_samples), int(seed))
    for i in range(n_samples):
        direction = rng.standard_normal(dim)
        norm = np.linalg.norm(direction)
        r = radius * rng.uniform() ** (1.0 / dim)
        if norm == 0.0 or r == 0.0:
            continue
        x = direction * (r / norm)
        value = float(fn(x))
        if not value > 0:
            report.passed = False
            report.counterexample = x
            report.counterexample_value = value
            report.counterexample_index = i
            break
    return report
