"""Parallel composition of systems and the edge-controller feedback loop.

Plants sit on graph nodes and controllers on graph edges. Controller ``k``
sees the difference of its endpoint plant outputs, ``sum_j q_kj y_pj``, and
plant ``i`` receives ``sum_k q_ki y_ck`` (positive feedback through the
incidence signs only).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dynamics import IntegratorConfig, SystemModel, Trajectory, simulate
from .topology import (
    OrientedIncidence,
    apply_incidence,
    apply_incidence_transpose,
    is_connected,
)

__all__ = [
    "ParallelNetwork",
    "ClosedLoopSystem",
    "NetworkTrajectory",
    "ConnectivityError",
    "parallel_compose",
    "edge_inputs",
    "node_inputs",
    "close_loop",
    "simulate_closed_loop",
]

PLANTS = "plants"
CONTROLLERS = "controllers"


class ConnectivityError(ValueError):
    """The communication graph is not connected."""


@dataclass(frozen=True, eq=False)
class ParallelNetwork:
    """Independent members stacked into one block-diagonal system."""

    members: tuple[SystemModel, ...]
    role: str

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if not self.members:
            raise ValueError(f"{self.role}: at least one member required")
        if self.role not in (PLANTS, CONTROLLERS):
            raise ValueError(f"unknown role {self.role!r}")
        dims = {(m.input_dim, m.output_dim) for m in self.members}
        if len(dims) != 1:
            raise ValueError(f"{self.role}: members have differing io dimensions {sorted(dims)}")
        in_dim, out_dim = dims.pop()
        if in_dim != out_dim:
            raise ValueError(f"{self.role}: input dimension {in_dim} != output dimension {out_dim}")
        offsets = np.concatenate([[0], np.cumsum([m.state_dim for m in self.members])])
        object.__setattr__(self, "_offsets", tuple(int(o) for o in offsets))
        object.__setattr__(self, "_slices",
                           tuple(slice(a, b) for a, b in zip(offsets[:-1], offsets[1:])))
        # (f, state slice, io slice) per member, cached for the integration hot path
        m = out_dim
        object.__setattr__(self, "_f_plan", tuple(
            (member.f, s, slice(i * m, (i + 1) * m))
            for i, (member, s) in enumerate(zip(self.members, self._slices))))
        object.__setattr__(self, "_h_plan", tuple(
            (member.h, s) for member, s in zip(self.members, self._slices)))

    @property
    def count(self) -> int:
        return len(self.members)

    @property
    def io_dim(self) -> int:
        return self.members[0].output_dim

    @property
    def state_dim(self) -> int:
        return self._offsets[-1]

    @property
    def block_dims(self) -> tuple[tuple[int, int], ...]:
        return tuple((m.state_dim, m.output_dim) for m in self.members)

    @property
    def slices(self) -> tuple[slice, ...]:
        return self._slices

    @property
    def has_storage(self) -> bool:
        return all(m.storage is not None for m in self.members)

    def split(self, x) -> list[np.ndarray]:
        return [x[s] for s in self._slices]

    def f(self, x, u) -> np.ndarray:
        return np.concatenate([f(x[s], u[io]) for f, s, io in self._f_plan])

    def h(self, x) -> np.ndarray:
        return np.concatenate([h(x[s]) for h, s in self._h_plan])

    def output_jacobian(self, x) -> Optional[np.ndarray]:
        if any(member.output_jacobian is None for member in self.members):
            return None
        jac = np.zeros((self.count * self.io_dim, self.state_dim))
        m = self.io_dim
        for i, (member, s) in enumerate(zip(self.members, self._slices)):
            jac[i * m:(i + 1) * m, s] = member.output_jacobian(x[s])
        return jac

    def storage(self, x) -> Optional[float]:
        """Sum of member storages, or ``None`` if any member lacks one."""
        if not self.has_storage:
            return None
        return float(sum(member.storage(x[s]) for member, s in zip(self.members, self._slices)))

    def as_model(self) -> SystemModel:
        """The composite as a single ``SystemModel``."""
        jac = None
        if all(member.output_jacobian is not None for member in self.members):
            jac = self.output_jacobian
        storage = grad = None
        if self.has_storage:
            storage = self.storage
            if all(member.storage_gradient is not None for member in self.members):
                def grad(x):
                    return np.concatenate([member.storage_gradient(x[s])
                                           for member, s in zip(self.members, self._slices)])
        strict = [member.strictness for member in self.members]
        eps = min(strict) if all(e is not None for e in strict) else None
        io = self.count * self.io_dim
        return SystemModel(self.state_dim, io, io, self.f, self.h, jac, storage, grad,
                           strictness=eps, name=self.role)


def parallel_compose(models: Sequence[SystemModel], role: str) -> ParallelNetwork:
    """Stack ``models`` side by side; they must share one io dimension."""
    return ParallelNetwork(tuple(models), role)


def edge_inputs(Q: OrientedIncidence, m: int, plant_outputs) -> np.ndarray:
    """Controller inputs ``u_ck = sum_j q_kj y_pj`` (output differences along edges)."""
    return apply_incidence(Q, m, plant_outputs)


def node_inputs(Q: OrientedIncidence, m: int, controller_outputs) -> np.ndarray:
    """Plant inputs ``u_pi = sum_k q_ki y_ck``."""
    return apply_incidence_transpose(Q, m, controller_outputs)


@dataclass(frozen=True, eq=False)
class ClosedLoopSystem:
    """Plants on nodes, controllers on edges, wired through ``incidence``.

    The stacked state is ``(plant states..., controller states...)`` in
    member order.
    """

    plants: ParallelNetwork
    controllers: ParallelNetwork
    incidence: OrientedIncidence
    io_dim: int
    eps_min: float

    def __post_init__(self):
        # dense incidence for the hot path
        q = self.incidence.entries.astype(float)
        object.__setattr__(self, "_q", q)
        object.__setattr__(self, "_qt", np.ascontiguousarray(q.T))
        object.__setattr__(self, "_n_plant_states", self.plants.state_dim)

    @property
    def state_dim(self) -> int:
        return self.plants.state_dim + self.controllers.state_dim

    @property
    def n_nodes(self) -> int:
        return self.plants.count

    @property
    def n_edges(self) -> int:
        return self.controllers.count

    @property
    def has_storage(self) -> bool:
        return self.plants.has_storage and self.controllers.has_storage

    def split(self, x) -> tuple[np.ndarray, np.ndarray]:
        n = self.plants.state_dim
        return x[:n], x[n:]

    def outputs(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Plant outputs ``Y_p`` and controller outputs ``Y_c``."""
        xp, xc = self.split(x)
        return self.plants.h(xp), self.controllers.h(xc)

    def _wire(self, yp, yc):
        if self.io_dim == 1:
            return self._qt @ yc, self._q @ yp
        m = self.io_dim
        uc = (self._q @ yp.reshape(-1, m)).ravel()
        up = (self._qt @ yc.reshape(-1, m)).ravel()
        return up, uc

    def field(self, x) -> np.ndarray:
        """Stacked closed-loop vector field."""
        n = self._n_plant_states
        xp = x[:n]
        xc = x[n:]
        plants, controllers = self.plants, self.controllers
        up, uc = self._wire(plants.h(xp), controllers.h(xc))
        return np.concatenate([plants.f(xp, up), controllers.f(xc, uc)])

    def member_inputs(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Plant inputs ``U_p`` and controller inputs ``U_c`` at stacked state ``x``."""
        return self._wire(*self.outputs(x))

    def as_model(self) -> SystemModel:
        """Autonomous stacked model whose output is ``(Y_p, Y_c)``."""
        n = self.plants.state_dim
        n_out = (self.n_nodes + self.n_edges) * self.io_dim

        def h(x):
            return np.concatenate(self.outputs(x))

        jac = None
        if all(mm.output_jacobian is not None
               for mm in self.plants.members + self.controllers.members):
            def jac(x):
                out = np.zeros((n_out, self.state_dim))
                rows = self.n_nodes * self.io_dim
                out[:rows, :n] = self.plants.output_jacobian(x[:n])
                out[rows:, n:] = self.controllers.output_jacobian(x[n:])
                return out

        return SystemModel(self.state_dim, 0, n_out, lambda x, u: self.field(x), h, jac,
                           name="closed_loop")


def close_loop(plants: ParallelNetwork, controllers: ParallelNetwork,
               Q: OrientedIncidence) -> ClosedLoopSystem:
    """Wire plants and edge controllers through the incidence matrix ``Q``.

    Raises ``ConnectivityError`` for a graph that is disconnected or has no
    edges, and ``ValueError`` for count or dimension mismatches or a
    controller without a declared strictness level.
    """
    if Q.n_edges == 0 or not is_connected(Q.graph()):
        raise ConnectivityError(
            f"communication graph on {Q.n_nodes} nodes with {Q.n_edges} edges is not connected")
    if plants.role != PLANTS or controllers.role != CONTROLLERS:
        raise ValueError("expected a plant network and a controller network")
    if plants.count != Q.n_nodes:
        raise ValueError(f"{plants.count} plants for a graph with {Q.n_nodes} nodes")
    if controllers.count != Q.n_edges:
        raise ValueError(f"{controllers.count} controllers for a graph with {Q.n_edges} edges")
    if plants.io_dim != controllers.io_dim:
        raise ValueError(
            f"plant io dimension {plants.io_dim} != controller io dimension {controllers.io_dim}")
    levels = []
    for k, c in enumerate(controllers.members):
        if c.strictness is None:
            raise ValueError(f"controller {k} ({c.name or 'unnamed'}) declares no strictness level")
        levels.append(c.strictness)
    return ClosedLoopSystem(plants, controllers, Q, plants.io_dim, float(min(levels)))


@dataclass(eq=False)
class NetworkTrajectory:
    """Closed-loop trajectory with per-role output series.

    ``Y_p`` has shape ``(T, N*m)``, ``Y_c`` and ``Ydot_c`` shape ``(T, l*m)``.
    ``Yhat_p = (Q kron I_m) Y_p`` and the member inputs are recomputed from
    the recorded outputs.
    """

    base: Trajectory
    Y_p: np.ndarray
    Yhat_p: np.ndarray
    Y_c: np.ndarray
    Ydot_c: np.ndarray
    Ydot_p: np.ndarray
    U_p: np.ndarray
    io_dim: int

    @property
    def times(self) -> np.ndarray:
        return self.base.times

    @property
    def states(self) -> np.ndarray:
        return self.base.states

    @property
    def U_c(self) -> np.ndarray:
        return self.Yhat_p

    @property
    def diverged(self) -> bool:
        return self.base.diverged

    def plant_outputs(self) -> np.ndarray:
        """Plant outputs as ``(T, N, m)``."""
        return self.Y_p.reshape(len(self.times), -1, self.io_dim)

    def member_trajectory(self, clm: ClosedLoopSystem, role: str, index: int) -> Trajectory:
        """Slice out one member's states, inputs, outputs and output rates."""
        m = self.io_dim
        if role == PLANTS:
            s = clm.plants.slices[index]
            states = self.states[:, :clm.plants.state_dim][:, s]
            inputs, outputs, rates = self.U_p, self.Y_p, self.Ydot_p
        elif role == CONTROLLERS:
            s = clm.controllers.slices[index]
            states = self.states[:, clm.plants.state_dim:][:, s]
            inputs, outputs, rates = self.U_c, self.Y_c, self.Ydot_c
        else:
            raise ValueError(f"unknown role {role!r}")
        block = slice(index * m, (index + 1) * m)
        return Trajectory(self.times, states, inputs[:, block], outputs[:, block],
                          rates[:, block], self.base.diverged, self.base.divergence_time)


def network_trajectory(clm: ClosedLoopSystem, base: Trajectory) -> NetworkTrajectory:
    """Split a stacked-model trajectory into network output series."""
    rows = clm.n_nodes * clm.io_dim
    m = clm.io_dim
    Y_p = base.outputs[:, :rows]
    Y_c = base.outputs[:, rows:]
    T = len(base.times)
    q = clm.incidence.entries.astype(float)
    Yhat_p = np.einsum("kj,tjm->tkm", q, Y_p.reshape(T, clm.n_nodes, m)).reshape(T, -1)
    U_p = np.einsum("kj,tkm->tjm", q, Y_c.reshape(T, clm.n_edges, m)).reshape(T, -1)
    return NetworkTrajectory(base, Y_p, Yhat_p, Y_c, base.output_rates[:, rows:],
                             base.output_rates[:, :rows], U_p, m)


def simulate_closed_loop(clm: ClosedLoopSystem, x0, cfg: IntegratorConfig) -> NetworkTrajectory:
    """Integrate the autonomous closed loop from ``x0`` (no external disturbances)."""
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (clm.state_dim,):
        raise ValueError(f"x0 has shape {x0.shape}, expected ({clm.state_dim},)")
    return network_trajectory(clm, simulate(clm.as_model(), x0, None, cfg))
