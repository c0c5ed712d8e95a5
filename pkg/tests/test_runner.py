import json
import math

import numpy as np
import pytest
import yaml

from niconsensus import cli
from niconsensus.dynamics import SystemModel
from niconsensus.network import ConnectivityError
from niconsensus.runner import dumps_json, evaluate, perturb_plants, run, status_from_metrics, sweep
from niconsensus.scenario import (
    builtin_pendulum_preset,
    dump_scenario,
    parse_scenario,
    preset_document,
    register_model,
    with_integrator,
)


@pytest.fixture(scope="module")
def short_preset():
    return with_integrator(builtin_pendulum_preset(), t_end=1.0, record_every=4)


def test_dumps_json_seventeen_digits():
    text = dumps_json({"a": 0.1, "b": [1, 2.5], "c": None, "d": True, "e": math.inf, "f": "x"})
    data = json.loads(text)
    assert "0.10000000000000001" in text
    assert data == {"a": 0.1, "b": [1, 2.5], "c": None, "d": True, "e": None, "f": "x"}
    assert dumps_json(3.0) == "3.0"
    assert float(dumps_json(np.float64(1e-20))) == 1e-20


def test_status_from_metrics():
    base = {"simulation": {"diverged": False}, "checks": {"a": True, "b": None}}
    assert status_from_metrics(base) == 0
    assert status_from_metrics({**base, "checks": {"a": False}}) == 1
    assert status_from_metrics({"simulation": {"diverged": True}, "checks": {"a": True}}) == 2


def test_run_writes_artifacts(tmp_path, short_preset):
    status = run(short_preset, tmp_path)
    assert status == 1  # not settled after 1 s
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert metrics["status"] == status == status_from_metrics(metrics)
    assert metrics["checks"]["consensus"] is False
    assert metrics["checks"]["plant_dissipation"] and metrics["checks"]["controller_dissipation"]
    assert metrics["checks"]["lyapunov_decrease"]
    assert "not verified" in metrics["steady_state"]["note"]

    lines = (tmp_path / "trajectory.csv").read_text().splitlines()
    header = lines[0].split(",")
    assert header[:3] == ["t", "x_p1_1", "x_p1_2"]
    assert header[-7:] == ["y_p1", "y_p2", "y_p3", "y_c1", "y_c2", "yhat_e1", "yhat_e2"]
    assert len(lines) - 1 == math.floor(1.0 / (1e-3 * 4)) + 1
    row = np.array(lines[1].split(","), dtype=float)
    np.testing.assert_array_equal(row[-2:], [1.0, -1.3])
    for name, col in (("consensus.csv", "consensus_error"), ("lyapunov.csv", "W")):
        plot = (tmp_path / "plots" / name).read_text().splitlines()
        assert plot[0] == f"t,{col}" and len(plot) == len(lines)


def test_csv_floats_round_trip(tmp_path, short_preset):
    run(short_preset, tmp_path)
    ev = evaluate(short_preset)
    data = np.loadtxt(tmp_path / "trajectory.csv", delimiter=",", skiprows=1)
    np.testing.assert_array_equal(data[:, 1:9], ev.trajectory.states)


def test_metrics_byte_identical(tmp_path, short_preset):
    run(short_preset, tmp_path / "a")
    run(short_preset, tmp_path / "b")
    assert (tmp_path / "a" / "metrics.json").read_bytes() == (tmp_path / "b" / "metrics.json").read_bytes()


def test_too_short_horizon_still_writes(tmp_path):
    s = with_integrator(builtin_pendulum_preset(), t_end=0.001)
    assert run(s, tmp_path) == 1
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert metrics["checks"]["consensus"] is False
    assert metrics["checks"]["lyapunov_decrease"] is None
    assert (tmp_path / "trajectory.csv").exists()


def test_removed_coupling_rejected():
    tree = yaml.safe_load(preset_document("pendulum3"))
    tree["graph"]["edges"] = []
    tree["graph"]["flip"] = []
    tree["controllers"] = []
    tree["initial_state"]["controllers"] = []
    with pytest.raises(ConnectivityError):
        evaluate(parse_scenario(yaml.safe_dump(tree)))


def test_divergence_gives_status_two(tmp_path):
    register_model("runaway", lambda: SystemModel(
        1, 1, 1, lambda x, u: x * x + u, lambda x: x.copy(), lambda x: np.eye(1)))
    tree = yaml.safe_load(preset_document("pendulum3"))
    tree["plants"][0] = {"type": "custom", "name": "runaway"}
    tree["initial_state"]["plants"][0] = [2.0]
    tree["integrator"]["t_end"] = 3.0
    assert run(parse_scenario(yaml.safe_dump(tree)), tmp_path) == 2
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert metrics["simulation"]["diverged"]
    assert 0.0 < metrics["simulation"]["divergence_time"] < 3.0
    assert (tmp_path / "trajectory.csv").exists()


def test_perturb_plants_only_scales_pendulums(short_preset):
    out = perturb_plants(short_preset, np.array([[2.0, 1.0, 0.5]] * 3))
    assert out.plants[0].params["mass"] == 2.0
    assert out.plants[0].params["spring"] == 1.5
    assert out.controllers == short_preset.controllers
    assert short_preset.plants[0].params["mass"] == 1.0


def test_sweep_zero_perturbation_matches_baseline(tmp_path, short_preset):
    summary = sweep(short_preset, 0.0, 3, seed=1, out_dir=tmp_path)
    base = evaluate(short_preset, full=False).consensus
    assert all(r["final_error"] == base.final_error for r in summary["runs"])
    assert all(f == 1.0 for r in summary["runs"] for row in r["factors"] for f in row)
    on_disk = json.loads((tmp_path / "sweep.json").read_text())
    assert on_disk["n_runs"] == 3 and on_disk["pass_rate"] == summary["pass_rate"]


def test_sweep_factor_range_and_seed(short_preset):
    a = sweep(short_preset, 0.5, 2, seed=3)
    b = sweep(short_preset, 0.5, 2, seed=3)
    assert a == b
    factors = np.array([r["factors"] for r in a["runs"]])
    assert np.all((factors >= 0.5) & (factors <= 1.5))
    assert not a["runs"][0]["diverged"]


@pytest.mark.parametrize("p, n", [(-0.1, 1), (0.6, 1), (0.1, 0)])
def test_sweep_validation(short_preset, p, n):
    with pytest.raises(ValueError):
        sweep(short_preset, p, n, seed=0)


def test_cli_validate_and_errors(tmp_path, capsys):
    good = tmp_path / "good.yaml"
    good.write_text(preset_document("pendulum3"))
    assert cli.main(["validate", str(good)]) == 0
    bad = tmp_path / "bad.yaml"
    bad.write_text(preset_document("pendulum3").replace("alpha: 20.0}", "alpha: 20.0, epsilon: 0.1}"))
    assert cli.main(["validate", str(bad)]) == 1
    assert "controllers[0]" in capsys.readouterr().err
    assert cli.main(["validate", str(tmp_path / "missing.yaml")]) == 1


def test_cli_preset_print(capsys):
    assert cli.main(["preset", "pendulum3", "--print"]) == 0
    assert parse_scenario(capsys.readouterr().out) == builtin_pendulum_preset()


def test_cli_run_and_env_out_dir(tmp_path, monkeypatch, short_preset):
    doc = tmp_path / "short.yaml"
    doc.write_text(dump_scenario(short_preset))
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "envout"))
    assert cli.main(["run", str(doc)]) == 1
    assert (tmp_path / "envout" / "metrics.json").exists()
    assert cli.main(["run", str(doc), "--out", str(tmp_path / "explicit")]) == 1
    assert (tmp_path / "explicit" / "plots" / "consensus.csv").exists()


def test_cli_sweep(tmp_path, short_preset):
    doc = tmp_path / "short.yaml"
    doc.write_text(dump_scenario(short_preset))
    status = cli.main(["sweep", str(doc), "--perturb", "0.1", "--runs", "2", "--seed", "4",
                       "--out", str(tmp_path)])
    summary = json.loads((tmp_path / "sweep.json").read_text())
    assert status == summary["status"] == 1
    assert len(summary["runs"]) == 2
