"""Declarative scenario documents (YAML) describing a closed-loop experiment.

A scenario names the graph (1-based node labels in the document), one model
block per node and per edge, initial states, integrator settings and
analysis thresholds::

    graph:
      nodes: 3
      edges: [[1, 2], [2, 3]]
      flip: [false, false]          # optional, reverses an edge's orientation
    plants:
      - {type: pendulum, mass: 1.0, length: 0.5, spring: 3.0}
    controllers:
      - {type: cubic_osni, beta: 10.0, phi: 15.0, alpha: 20.0}
    initial_state:
      plants: [[0.6, 0.0]]
      controllers: [[0.0]]          # optional, defaults to zeros
    integrator: {step: 0.001, t_end: 30.0, record_every: 1}
    analysis: {consensus_threshold: 0.05}
    seed: 42

Unknown keys are rejected. Edges are stored in canonical order
(smaller label first, sorted) and per-edge lists are reordered with them.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from typing import Any, Callable, Optional

import numpy as np
import yaml

from .dynamics import IntegratorConfig, SystemModel
from .models import (
    FirstOrderOsniParams,
    NonlinearitySpec,
    PendulumParams,
    SecondOrderOsniParams,
    cubic_osni_controller,
    make_first_order_osni,
    make_pendulum,
    make_second_order_osni,
)
from .network import ClosedLoopSystem, ConnectivityError, close_loop, parallel_compose
from .topology import build_graph, is_connected, orient

__all__ = [
    "ScenarioError",
    "GraphSpec",
    "ModelSpec",
    "AnalysisSettings",
    "Scenario",
    "parse_scenario",
    "load_scenario",
    "dump_scenario",
    "builtin_pendulum_preset",
    "preset_document",
    "register_model",
    "build_model",
    "build_closed_loop",
    "PRESETS",
    "with_integrator",
    "to_tree",
]


class ScenarioError(ValueError):
    """Invalid scenario document; the message starts with the offending key path."""


@dataclass(frozen=True)
class GraphSpec:
    n_nodes: int
    edges: tuple[tuple[int, int], ...]  # 0-based, canonical
    flips: tuple[bool, ...]


@dataclass(frozen=True)
class ModelSpec:
    type: str
    params: dict

    def __hash__(self):
        return hash((self.type, repr(sorted(self.params.items()))))


@dataclass(frozen=True)
class AnalysisSettings:
    consensus_threshold: float = 0.05
    dissipation_tol: Optional[float] = None
    lyapunov_tol: float = 1e-3
    steady_rate_tol: float = 1e-4
    steady_min_duration: float = 0.5
    steady_state_tol: float = 1e-2
    pd_radius: float = 1.0
    pd_samples: int = 1000


@dataclass(frozen=True)
class Scenario:
    graph: GraphSpec
    plants: tuple[ModelSpec, ...]
    controllers: tuple[ModelSpec, ...]
    initial_plants: tuple[tuple[float, ...], ...]
    initial_controllers: tuple[tuple[float, ...], ...]
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    analysis: AnalysisSettings = field(default_factory=AnalysisSettings)
    seed: int = 42

    def initial_state(self) -> np.ndarray:
        return np.array([v for block in self.initial_plants + self.initial_controllers
                         for v in block], dtype=float)


# --- model registry -----------------------------------------------------------

def _nonlinearity(path, raw):
    block = _mapping(path, raw, {"linear", "cubic", "sine"})
    return {k: _number(f"{path}.{k}", block.get(k, 0.0)) for k in ("linear", "cubic", "sine")}


def _pendulum_params(path, raw):
    block = _mapping(path, raw, {"type", "mass", "length", "spring", "gravity"})
    out = {k: _number(f"{path}.{k}", _required(path, block, k))
           for k in ("mass", "length", "spring")}
    out["gravity"] = _number(f"{path}.gravity", block.get("gravity", 9.8))
    return out


def _pendulum_model(params):
    return make_pendulum(PendulumParams(params["mass"], params["length"], params["spring"],
                                        params["gravity"]))


def _first_order_params(path, raw):
    block = _mapping(path, raw, {"type", "rho", "alpha", "epsilon"})
    alpha = _number(f"{path}.alpha", _required(path, block, "alpha"))
    eps = block.get("epsilon")
    return {
        "rho": _nonlinearity(f"{path}.rho", _required(path, block, "rho")),
        "alpha": alpha,
        "epsilon": 1.0 / alpha if eps is None else _number(f"{path}.epsilon", eps),
    }


def _first_order_model(params):
    return make_first_order_osni(FirstOrderOsniParams(
        NonlinearitySpec(**params["rho"]), params["alpha"], params["epsilon"]))


def _second_order_params(path, raw):
    block = _mapping(path, raw, {"type", "eta", "alpha", "beta", "epsilon"})
    alpha = _number(f"{path}.alpha", _required(path, block, "alpha"))
    beta = _number(f"{path}.beta", _required(path, block, "beta"))
    eps = block.get("epsilon")
    return {
        "eta": _nonlinearity(f"{path}.eta", _required(path, block, "eta")),
        "alpha": alpha,
        "beta": beta,
        "epsilon": beta / alpha if eps is None else _number(f"{path}.epsilon", eps),
    }


def _second_order_model(params):
    return make_second_order_osni(SecondOrderOsniParams(
        NonlinearitySpec(**params["eta"]), params["alpha"], params["beta"], params["epsilon"]))


def _cubic_params(path, raw):
    block = _mapping(path, raw, {"type", "beta", "phi", "alpha", "epsilon"})
    out = {k: _number(f"{path}.{k}", _required(path, block, k)) for k in ("beta", "phi", "alpha")}
    eps = block.get("epsilon")
    out["epsilon"] = 1.0 / out["alpha"] if eps is None else _number(f"{path}.epsilon", eps)
    return out


def _cubic_model(params):
    return cubic_osni_controller(params["beta"], params["phi"], params["alpha"], params["epsilon"])


_BUILTIN = {
    "pendulum": (_pendulum_params, _pendulum_model),
    "first_order_osni": (_first_order_params, _first_order_model),
    "second_order_osni": (_second_order_params, _second_order_model),
    "cubic_osni": (_cubic_params, _cubic_model),
}
_CUSTOM: dict[str, Callable[..., SystemModel]] = {}


def register_model(name: str, factory: Callable[..., SystemModel]) -> None:
    """Make ``{type: custom, name: <name>, params: {...}}`` resolve to ``factory(**params)``."""
    _CUSTOM[name] = factory


def build_model(spec: ModelSpec) -> SystemModel:
    if spec.type == "custom":
        factory = _CUSTOM.get(spec.params["name"])
        if factory is None:
            raise ScenarioError(f"custom model {spec.params['name']!r} is not registered")
        return factory(**spec.params["params"])
    return _BUILTIN[spec.type][1](spec.params)


# --- parsing helpers -----------------------------------------------------------

def _mapping(path, raw, allowed):
    if not isinstance(raw, dict):
        raise ScenarioError(f"{path}: expected a mapping, got {type(raw).__name__}")
    unknown = sorted(set(raw) - set(allowed))
    if unknown:
        raise ScenarioError(f"{path}: unknown key(s) {', '.join(map(str, unknown))}")
    return raw


def _required(path, block, key):
    if key not in block:
        raise ScenarioError(f"{path}.{key}: required key missing")
    return block[key]


def _number(path, raw):
    if isinstance(raw, bool):
        raise ScenarioError(f"{path}: expected a number, got a boolean")
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise ScenarioError(f"{path}: expected a number, got {raw!r}") from None
    if not math.isfinite(value):
        raise ScenarioError(f"{path}: must be finite")
    return value


def _integer(path, raw):
    if isinstance(raw, bool) or not isinstance(raw, int):
        raise ScenarioError(f"{path}: expected an integer, got {raw!r}")
    return raw


def _list(path, raw):
    if not isinstance(raw, (list, tuple)):
        raise ScenarioError(f"{path}: expected a list, got {type(raw).__name__}")
    return list(raw)


def _model_spec(path, raw):
    if not isinstance(raw, dict):
        raise ScenarioError(f"{path}: expected a mapping, got {type(raw).__name__}")
    kind = _required(path, raw, "type")
    if kind == "custom":
        block = _mapping(path, raw, {"type", "name", "params"})
        name = _required(path, block, "name")
        if name not in _CUSTOM:
            raise ScenarioError(f"{path}.name: custom model {name!r} is not registered")
        params = block.get("params", {}) or {}
        _mapping(f"{path}.params", params, set(params))
        spec = ModelSpec("custom", {"name": name, "params": copy.deepcopy(params)})
    elif kind in _BUILTIN:
        spec = ModelSpec(kind, _BUILTIN[kind][0](path, raw))
    else:
        known = ", ".join(sorted(_BUILTIN) + ["custom"])
        raise ScenarioError(f"{path}.type: unknown model type {kind!r} (known: {known})")
    try:
        model = build_model(spec)
    except ScenarioError:
        raise
    except (ValueError, TypeError) as err:
        raise ScenarioError(f"{path}: {err}") from None
    return spec, model


def _states(path, raw, models):
    rows = _list(path, raw)
    if len(rows) != len(models):
        raise ScenarioError(f"{path}: {len(rows)} state vectors for {len(models)} members")
    out = []
    for i, (row, model) in enumerate(zip(rows, models)):
        vec = [_number(f"{path}[{i}][{j}]", v) for j, v in enumerate(_list(f"{path}[{i}]", row))]
        if len(vec) != model.state_dim:
            raise ScenarioError(
                f"{path}[{i}]: state has {len(vec)} entries, model expects {model.state_dim}")
        out.append(tuple(vec))
    return tuple(out)


_TOP_KEYS = {"graph", "plants", "controllers", "initial_state", "integrator", "analysis", "seed"}


def _parse_tree(doc) -> Scenario:
    doc = _mapping("scenario", doc, _TOP_KEYS)

    graph = _mapping("graph", _required("scenario", doc, "graph"), {"nodes", "edges", "flip"})
    n_nodes = _integer("graph.nodes", _required("graph", graph, "nodes"))
    if n_nodes < 1:
        raise ScenarioError("graph.nodes: must be >= 1")
    raw_edges = _list("graph.edges", graph.get("edges", []))
    edges = []
    for k, pair in enumerate(raw_edges):
        pair = _list(f"graph.edges[{k}]", pair)
        if len(pair) != 2:
            raise ScenarioError(f"graph.edges[{k}]: expected a pair of node labels")
        i, j = (_integer(f"graph.edges[{k}]", v) for v in pair)
        for label in (i, j):
            if not 1 <= label <= n_nodes:
                raise ScenarioError(f"graph.edges[{k}]: node label {label} outside 1..{n_nodes}")
        if i == j:
            raise ScenarioError(f"graph.edges[{k}]: self-loop at node {i}")
        edges.append((min(i, j) - 1, max(i, j) - 1))
    if len(set(edges)) != len(edges):
        raise ScenarioError("graph.edges: duplicate edge")
    flips = graph.get("flip")
    if flips is None:
        flips = [False] * len(edges)
    flips = _list("graph.flip", flips)
    if len(flips) != len(edges):
        raise ScenarioError(f"graph.flip: {len(flips)} flags for {len(edges)} edges")
    for k, flag in enumerate(flips):
        if not isinstance(flag, bool):
            raise ScenarioError(f"graph.flip[{k}]: expected true/false")

    plant_rows = _list("plants", _required("scenario", doc, "plants"))
    if len(plant_rows) != n_nodes:
        raise ScenarioError(f"plants: {len(plant_rows)} plants for {n_nodes} nodes")
    plants = [_model_spec(f"plants[{i}]", r) for i, r in enumerate(plant_rows)]

    ctrl_rows = _list("controllers", doc.get("controllers", []))
    if len(ctrl_rows) != len(edges):
        raise ScenarioError(f"controllers: {len(ctrl_rows)} controllers for {len(edges)} edges")
    controllers = [_model_spec(f"controllers[{k}]", r) for k, r in enumerate(ctrl_rows)]

    init = _mapping("initial_state", _required("scenario", doc, "initial_state"),
                    {"plants", "controllers"})
    x_p = _states("initial_state.plants", _required("initial_state", init, "plants"),
                  [m for _, m in plants])
    if init.get("controllers") is None:
        x_c = tuple(tuple(0.0 for _ in range(m.state_dim)) for _, m in controllers)
    else:
        x_c = _states("initial_state.controllers", init["controllers"], [m for _, m in controllers])

    integ = _mapping("integrator", doc.get("integrator", {}) or {}, {"step", "t_end", "record_every"})
    defaults = IntegratorConfig()
    try:
        cfg = IntegratorConfig(
            _number("integrator.step", integ.get("step", defaults.step)),
            _number("integrator.t_end", integ.get("t_end", defaults.t_end)),
            _integer("integrator.record_every", integ.get("record_every", defaults.record_every)))
    except ValueError as err:
        if isinstance(err, ScenarioError):
            raise
        raise ScenarioError(f"integrator: {err}") from None

    names = {f.name for f in fields(AnalysisSettings)}
    ana = _mapping("analysis", doc.get("analysis", {}) or {}, names)
    settings = {}
    for key, value in ana.items():
        if key == "pd_samples":
            settings[key] = _integer(f"analysis.{key}", value)
        elif key == "dissipation_tol" and value is None:
            settings[key] = None
        else:
            settings[key] = _number(f"analysis.{key}", value)
    analysis = AnalysisSettings(**settings)
    seed = _integer("seed", doc.get("seed", 42))

    # canonical edge order, carrying per-edge data along
    order = sorted(range(len(edges)), key=lambda k: edges[k])
    return Scenario(
        graph=GraphSpec(n_nodes, tuple(edges[k] for k in order), tuple(flips[k] for k in order)),
        plants=tuple(s for s, _ in plants),
        controllers=tuple(controllers[k][0] for k in order),
        initial_plants=x_p,
        initial_controllers=tuple(x_c[k] for k in order),
        integrator=cfg,
        analysis=analysis,
        seed=seed,
    )


def parse_scenario(text: str) -> Scenario:
    """Parse and validate a YAML scenario document, applying defaults."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ScenarioError(f"scenario: malformed YAML ({err})") from None
    return _parse_tree(doc)


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def _model_tree(spec: ModelSpec) -> dict:
    if spec.type == "custom":
        return {"type": "custom", "name": spec.params["name"], "params": spec.params["params"]}
    return {"type": spec.type, **copy.deepcopy(spec.params)}


def to_tree(s: Scenario) -> dict:
    """Plain nested dict form of ``s`` (1-based node labels)."""
    analysis = {f.name: getattr(s.analysis, f.name) for f in fields(AnalysisSettings)}
    return {
        "graph": {
            "nodes": s.graph.n_nodes,
            "edges": [[i + 1, j + 1] for i, j in s.graph.edges],
            "flip": list(s.graph.flips),
        },
        "plants": [_model_tree(p) for p in s.plants],
        "controllers": [_model_tree(c) for c in s.controllers],
        "initial_state": {
            "plants": [list(v) for v in s.initial_plants],
            "controllers": [list(v) for v in s.initial_controllers],
        },
        "integrator": {
            "step": s.integrator.step,
            "t_end": s.integrator.t_end,
            "record_every": s.integrator.record_every,
        },
        "analysis": analysis,
        "seed": s.seed,
    }


def dump_scenario(s: Scenario) -> str:
    return yaml.safe_dump(to_tree(s), sort_keys=False, default_flow_style=None)


# --- construction ----------------------------------------------------------------

def build_closed_loop(s: Scenario) -> ClosedLoopSystem:
    g = build_graph(s.graph.n_nodes, s.graph.edges)
    Q = orient(g, list(s.graph.flips))
    if g.n_edges == 0 or not is_connected(g):
        raise ConnectivityError(
            f"communication graph on {g.n_nodes} nodes with {g.n_edges} edges is not connected")
    plants = parallel_compose([build_model(p) for p in s.plants], "plants")
    controllers = parallel_compose([build_model(c) for c in s.controllers], "controllers")
    return close_loop(plants, controllers, Q)


def builtin_pendulum_preset() -> Scenario:
    """Three heterogeneous pendulums on a path graph with two cubic edge controllers."""
    pend = [(1.0, 0.5, 3.0), (1.5, 0.3, 5.0), (0.5, 0.8, 6.0)]
    ctrl = [(10.0, 15.0, 20.0), (20.0, 5.0, 30.0)]
    return Scenario(
        graph=GraphSpec(3, ((0, 1), (1, 2)), (False, False)),
        plants=tuple(ModelSpec("pendulum", {"mass": m, "length": l, "spring": k, "gravity": 9.8})
                     for m, l, k in pend),
        controllers=tuple(ModelSpec("cubic_osni", {"beta": b, "phi": p, "alpha": a,
                                                   "epsilon": 1.0 / a})
                          for b, p, a in ctrl),
        initial_plants=((0.6, 0.0), (-0.4, 0.0), (0.9, 0.0)),
        initial_controllers=((0.0,), (0.0,)),
        integrator=IntegratorConfig(step=1e-3, t_end=30.0, record_every=1),
        analysis=AnalysisSettings(),
        seed=42,
    )


PRESETS: dict[str, Callable[[], Scenario]] = {"pendulum3": builtin_pendulum_preset}


def preset_document(name: str) -> str:
    """Text of a shipped preset scenario file."""
    return resources.files("niconsensus").joinpath("presets").joinpath(f"{name}.yaml").read_text("utf-8")


def with_integrator(s: Scenario, **changes: Any) -> Scenario:
    return replace(s, integrator=replace(s.integrator, **changes))
