"""Run a scenario end to end and write its artifacts.

``run`` writes ``trajectory.csv``, ``metrics.json`` and two-column series
under ``plots/``. The exit status is derived from ``metrics.json`` alone:
2 if the simulation diverged, 1 if any evaluated check failed, else 0.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import analysis
from .network import CONTROLLERS, PLANTS, ClosedLoopSystem, NetworkTrajectory, simulate_closed_loop
from .scenario import ModelSpec, Scenario, build_closed_loop

__all__ = ["Evaluation", "evaluate", "run", "sweep", "status_from_metrics", "dumps_json",
           "perturb_plants"]

log = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def _format_float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    text = FLOAT_FORMAT % x
    # keep integral floats recognisable as floats
    if all(c in "-0123456789" for c in text):
        text += ".0"
    return text


def dumps_json(obj: Any, indent: int = 2, _level: int = 0) -> str:
    """JSON text with every float written to 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _format_float(float(obj))
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps_json(v, indent, _level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.number)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(dumps_json(v) for v in obj) + "]"
        items = [pad + dumps_json(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def status_from_metrics(metrics: dict) -> int:
    if metrics["simulation"]["diverged"]:
        return 2
    if any(v is False for v in metrics["checks"].values()):
        return 1
    return 0


@dataclass
class Evaluation:
    clm: ClosedLoopSystem
    trajectory: NetworkTrajectory
    metrics: dict
    consensus: analysis.ConsensusReport
    lyapunov: Optional[analysis.LyapunovSeries]

    @property
    def status(self) -> int:
        return self.metrics["status"]


def _try(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ValueError as err:
        log.info("check skipped: %s", err)
        return None


def evaluate(scenario: Scenario, full: bool = True) -> Evaluation:
    """Simulate ``scenario`` and run the checks.

    With ``full=False`` only consensus and divergence are evaluated.
    """
    clm = build_closed_loop(scenario)
    cfg = scenario.integrator
    settings = scenario.analysis
    ntraj = simulate_closed_loop(clm, scenario.initial_state(), cfg)
    cons = analysis.consensus_error(ntraj, settings.consensus_threshold)

    checks: dict[str, Optional[bool]] = {"consensus": cons.settled}
    metrics: dict[str, Any] = {
        "simulation": {
            "step": cfg.step,
            "t_end": cfg.t_end,
            "record_every": cfg.record_every,
            "n_records": len(ntraj.times),
            "diverged": ntraj.diverged,
            "divergence_time": ntraj.base.divergence_time,
        },
        "eps_min": clm.eps_min,
        "consensus": cons.as_dict(),
    }
    series = None
    if full and not ntraj.diverged:
        tol = settings.dissipation_tol
        plant_reports = []
        for i, member in enumerate(clm.plants.members):
            if member.storage is None:
                plant_reports.append(None)
                continue
            plant_reports.append(_try(analysis.check_ni_dissipation, member,
                                      ntraj.member_trajectory(clm, PLANTS, i), tol))
        ctrl_reports = []
        for k, member in enumerate(clm.controllers.members):
            if member.storage is None:
                ctrl_reports.append(None)
                continue
            ctrl_reports.append(_try(analysis.check_osni_dissipation, member,
                                     ntraj.member_trajectory(clm, CONTROLLERS, k),
                                     member.strictness, tol))
        metrics["dissipation"] = {
            "plants": [r.as_dict() if r else None for r in plant_reports],
            "controllers": [r.as_dict() if r else None for r in ctrl_reports],
        }
        checks["plant_dissipation"] = (None if any(r is None for r in plant_reports)
                                       else all(r.passed for r in plant_reports))
        checks["controller_dissipation"] = (None if any(r is None for r in ctrl_reports)
                                            else all(r.passed for r in ctrl_reports))

        if clm.has_storage:
            series = _try(analysis.lyapunov_series, clm, ntraj)
            pd = analysis.sample_positive_definite(
                lambda x: analysis.total_storage(clm, x), clm.state_dim, settings.pd_radius,
                settings.pd_samples, scenario.seed)
            metrics["positive_definite"] = pd.as_dict()
            checks["storage_positive_definite"] = pd.passed
        if series is not None:
            ok, worst = analysis.check_lyapunov_decrease(series, settings.lyapunov_tol)
            metrics["lyapunov"] = {**series.summary(), "tolerance": settings.lyapunov_tol,
                                   "decrease_pass": ok}
            checks["lyapunov_decrease"] = ok
            checks["storage_nonincreasing"] = bool(series.W[-1] <= series.W[0])
        else:
            checks["lyapunov_decrease"] = None
            checks["storage_nonincreasing"] = None

        windows = analysis.detect_steady_state(ntraj, settings.steady_rate_tol,
                                               settings.steady_min_duration)
        ss_ok = analysis.check_steady_state_consequence(windows, settings.steady_state_tol)
        metrics["steady_state"] = {
            "rate_tol": settings.steady_rate_tol,
            "min_duration": settings.steady_min_duration,
            "tolerance": settings.steady_state_tol,
            "windows": [w.as_dict() for w in windows],
            "pass": ss_ok,
            "note": analysis.STEADY_STATE_NOTE,
        }
        checks["steady_state_consequence"] = ss_ok

    metrics["checks"] = checks
    metrics["status"] = status_from_metrics(metrics)
    return Evaluation(clm, ntraj, metrics, cons, series)


def _labels(clm: ClosedLoopSystem) -> list[str]:
    m = clm.io_dim

    def out(prefix, count):
        if m == 1:
            return [f"{prefix}{i + 1}" for i in range(count)]
        return [f"{prefix}{i + 1}_{j + 1}" for i in range(count) for j in range(m)]

    cols = ["t"]
    for role, prefix in ((clm.plants, "x_p"), (clm.controllers, "x_c")):
        for i, member in enumerate(role.members):
            cols += [f"{prefix}{i + 1}_{j + 1}" for j in range(member.state_dim)]
    return cols + out("y_p", clm.n_nodes) + out("y_c", clm.n_edges) + out("yhat_e", clm.n_edges)


def _write_csv(path: Path, header: list[str], columns: list[np.ndarray]):
    data = np.column_stack(columns)
    np.savetxt(path, data, fmt=FLOAT_FORMAT, delimiter=",", header=",".join(header), comments="")


def write_artifacts(ev: Evaluation, out_dir) -> None:
    out = Path(out_dir)
    (out / "plots").mkdir(parents=True, exist_ok=True)
    tr = ev.trajectory
    _write_csv(out / "trajectory.csv", _labels(ev.clm),
               [tr.times, tr.states, tr.Y_p, tr.Y_c, tr.Yhat_p])
    _write_csv(out / "plots" / "consensus.csv", ["t", "consensus_error"],
               [ev.consensus.times, ev.consensus.error])
    if ev.lyapunov is not None:
        _write_csv(out / "plots" / "lyapunov.csv", ["t", "W"], [ev.lyapunov.times, ev.lyapunov.W])
    (out / "metrics.json").write_text(dumps_json(ev.metrics) + "\n", encoding="utf-8")


def run(scenario: Scenario, out_dir) -> int:
    """Simulate, check and write artifacts to ``out_dir``; returns the exit status."""
    ev = evaluate(scenario)
    write_artifacts(ev, out_dir)
    log.info("wrote artifacts to %s (status %d)", out_dir, ev.status)
    return ev.status


def perturb_plants(scenario: Scenario, factors: np.ndarray) -> Scenario:
    """Scale (mass, length, spring) of pendulum plant ``i`` by ``factors[i]``."""
    plants = []
    for spec, (fm, fl, fk) in zip(scenario.plants, factors):
        if spec.type != "pendulum":
            plants.append(spec)
            continue
        p = dict(spec.params)
        p["mass"] *= float(fm)
        p["length"] *= float(fl)
        p["spring"] *= float(fk)
        plants.append(ModelSpec("pendulum", p))
    return replace(scenario, plants=tuple(plants))


def _sweep_one(scenario: Scenario) -> dict:
    ev = evaluate(scenario, full=False)
    return {
        "settled": ev.consensus.settled,
        "settle_time": ev.consensus.settle_time,
        "final_error": ev.consensus.final_error,
        "diverged": ev.trajectory.diverged,
        "status": ev.status,
    }


def sweep(scenario: Scenario, perturbation: float, n_runs: int, seed: int, out_dir=None,
          workers: int = 1) -> dict:
    """Consensus under random plant-parameter perturbations.

    Each run scales every pendulum's mass, length and spring constant by an
    independent factor drawn uniformly from ``[1 - p, 1 + p]``. Writes
    ``sweep.json`` to ``out_dir`` when given and returns the summary.
    """
    if not 0.0 <= perturbation <= 0.5:
        raise ValueError(f"perturbation must lie in [0, 0.5], got {perturbation}")
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    rng = np.random.default_rng(seed)
    factor_sets = [rng.uniform(1.0 - perturbation, 1.0 + perturbation,
                               size=(len(scenario.plants), 3)) for _ in range(n_runs)]
    variants = [perturb_plants(scenario, f) for f in factor_sets]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_one, variants))
    else:
        results = [_sweep_one(v) for v in variants]
    runs = [{"run": i, "factors": f.tolist(), **r}
            for i, (f, r) in enumerate(zip(factor_sets, results))]
    n_settled = sum(r["settled"] for r in runs)
    summary = {
        "perturbation": perturbation,
        "n_runs": n_runs,
        "seed": seed,
        "threshold": scenario.analysis.consensus_threshold,
        "t_end": scenario.integrator.t_end,
        "runs": runs,
        "n_settled": n_settled,
        "pass_rate": n_settled / n_runs,
    }
    if any(r["diverged"] for r in runs):
        summary["status"] = 2
    else:
        summary["status"] = 0 if n_settled == n_runs else 1
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "sweep.json").write_text(dumps_json(summary) + "\n", encoding="utf-8")
    return summary
