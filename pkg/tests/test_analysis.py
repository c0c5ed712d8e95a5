import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from niconsensus.analysis import (
    LyapunovSeries,
    SteadyStateWindow,
    check_lyapunov_decrease,
    check_ni_dissipation,
    check_osni_dissipation,
    check_steady_state_consequence,
    consensus_error,
    detect_steady_state,
    lyapunov_series,
    sample_positive_definite,
    storage_rate,
    total_storage,
)
from niconsensus.dynamics import IntegratorConfig, SystemModel, Trajectory, simulate
from niconsensus.models import (
    FirstOrderOsniParams,
    NonlinearitySpec,
    PendulumParams,
    SecondOrderOsniParams,
    cubic_osni_controller,
    make_first_order_osni,
    make_pendulum,
    make_second_order_osni,
)
from niconsensus.network import NetworkTrajectory, close_loop, parallel_compose, simulate_closed_loop
from niconsensus.scenario import build_closed_loop

from conftest import sine_input

# hand-evaluated storage of the three pendulums at (0.6, 0), (-0.4, 0), (0.9, 0)
W0_PRESET = 6.057265427768849


def doubled_storage(model):
    return dataclasses.replace(model, storage=lambda x: 2 * model.storage(x),
                               storage_gradient=lambda x: 2 * model.storage_gradient(x))


def driven_pendulum(amplitude=0.5):
    model = make_pendulum(PendulumParams(1.0, 0.5, 3.0))
    traj = simulate(model, [0.2, 0.0], sine_input(amplitude, 0.7), IntegratorConfig(1e-3, 5.0))
    return model, traj


def test_total_storage_examples(preset):
    clm = build_closed_loop(preset)
    assert total_storage(clm, np.zeros(8)) == 0.0
    x = np.array([0.6, 0.0, -0.4, 0.0, 0.9, 0.0, 0.0, 0.0])
    assert total_storage(clm, x) == pytest.approx(W0_PRESET, rel=1e-14)
    x = np.array([0.3, -1.0, 0.2, 0.5, -0.8, 0.1, 0.0, 0.0])
    assert total_storage(clm, x) == pytest.approx(clm.plants.storage(x[:6]), rel=1e-15)
    # cross term: yhat = (0.1, -1.0), y_c = (0.5, 0.25)
    x = np.array([0.3, 0.0, 0.2, 0.0, 1.2, 0.0, 0.5, 0.25])
    expected = clm.plants.storage(x[:6]) + clm.controllers.storage(x[6:]) - (0.1 * 0.5 - 1.0 * 0.25)
    assert total_storage(clm, x) == pytest.approx(expected, rel=1e-14)


def test_total_storage_requires_storages(preset):
    clm = build_closed_loop(preset)
    bare = dataclasses.replace(clm.plants.members[0], storage=None, storage_gradient=None)
    broken = close_loop(parallel_compose([bare, *clm.plants.members[1:]], "plants"),
                        clm.controllers, clm.incidence)
    with pytest.raises(ValueError):
        total_storage(broken, np.zeros(8))


def test_ni_check_pendulum_passes_both_routes():
    model, traj = driven_pendulum()
    for method in ("gradient", "finite_difference"):
        report = check_ni_dissipation(model, traj, tol=1e-4, method=method)
        assert report.passed and report.kind == "NI" and report.method == method


def test_ni_check_equilibrium_trajectory():
    model = make_pendulum(PendulumParams(1.0, 0.5, 3.0))
    traj = simulate(model, [0.0, 0.0], None, IntegratorConfig(1e-2, 1.0))
    report = check_ni_dissipation(model, traj, tol=0.0)
    assert report.passed and report.max_violation == 0.0


def test_ni_check_doubled_storage_fails():
    model, traj = driven_pendulum()
    for method in ("gradient", "finite_difference"):
        report = check_ni_dissipation(doubled_storage(model), traj, tol=1e-4, method=method)
        assert not report.passed
        assert report.violation_times


def test_ni_check_default_tolerance():
    model, traj = driven_pendulum()
    report = check_ni_dissipation(model, traj)
    supply = traj.inputs[:, 0] * traj.output_rates[:, 0]
    assert report.tolerance == pytest.approx(1e-6 + 1e-4 * np.abs(supply).max())


def test_dissipation_rejects_short_grid():
    model = make_pendulum(PendulumParams(1.0, 0.5, 3.0))
    traj = simulate(model, [0.1, 0.0], None, IntegratorConfig(0.1, 0.1))
    with pytest.raises(ValueError):
        check_ni_dissipation(model, traj)


def test_osni_check_cubic_controller_tight_at_boundary():
    model = cubic_osni_controller(10.0, 15.0, 20.0)
    traj = simulate(model, [0.0], sine_input(1.0, 1.0), IntegratorConfig(1e-3, 3.0))
    assert check_osni_dissipation(model, traj, 1 / 20, tol=1e-4).passed
    assert not check_osni_dissipation(model, traj, 2 / 20, tol=1e-4).passed
    with pytest.raises(ValueError):
        check_osni_dissipation(model, traj, 0.0)


def test_osni_check_zero_trajectory():
    model = cubic_osni_controller(10.0, 15.0, 20.0)
    traj = simulate(model, [0.0], None, IntegratorConfig(1e-2, 1.0))
    assert check_osni_dissipation(model, traj, 0.05, tol=0.0).passed


def test_storage_rate_routes_agree_on_shipped_models():
    cfg = IntegratorConfig(1e-3, 3.0)
    models = [
        (make_pendulum(PendulumParams(1.5, 0.3, 5.0)), [0.1, 0.0]),
        (cubic_osni_controller(20.0, 5.0, 30.0), [0.0]),
        (make_second_order_osni(SecondOrderOsniParams(NonlinearitySpec(-2.0, -1.0), 2.0, 4.0)), [0.0, 0.0]),
        (make_first_order_osni(FirstOrderOsniParams(NonlinearitySpec(-3.0, -1.0, 1.0), 2.0)), [0.0]),
    ]
    for model, x0 in models:
        traj = simulate(model, x0, sine_input(0.5, 0.8), cfg)
        diff = storage_rate(model, traj, "gradient") - storage_rate(model, traj, "finite_difference")
        assert np.abs(diff).max() < 1e-4, model.name


@pytest.mark.parametrize("factory, eps_max, x0", [
    (lambda e: make_first_order_osni(FirstOrderOsniParams(NonlinearitySpec(-10.0, -15.0), 20.0, e)),
     1 / 20, [0.0]),
    (lambda e: make_second_order_osni(SecondOrderOsniParams(NonlinearitySpec(-2.0, -1.0), 2.0, 4.0, e)),
     2.0, [0.0, 0.0]),
])
def test_osni_strictness_is_tight(factory, eps_max, x0):
    model = factory(None)
    traj = simulate(model, x0, sine_input(0.5), IntegratorConfig(1e-3, 3.0))
    assert check_osni_dissipation(model, traj, model.strictness, tol=1e-4).passed
    assert not check_osni_dissipation(model, traj, 2 * eps_max, tol=1e-4).passed


def test_lyapunov_series_preset(preset_eval):
    series = preset_eval.lyapunov
    ok, worst = check_lyapunov_decrease(series, 1e-3)
    assert ok and worst >= -1e-3
    assert series.W[-1] <= series.W[0]
    assert series.W[0] == pytest.approx(W0_PRESET, rel=1e-14)
    assert np.all(np.diff(series.W) <= 1e-6)


def test_lyapunov_series_deterministic(preset_eval):
    again = lyapunov_series(preset_eval.clm, preset_eval.trajectory)
    assert again.W.tobytes() == preset_eval.lyapunov.W.tobytes()
    assert again.margin.tobytes() == preset_eval.lyapunov.margin.tobytes()


def test_lyapunov_zero_trajectory(preset):
    clm = build_closed_loop(preset)
    traj = simulate_closed_loop(clm, np.zeros(8), IntegratorConfig(1e-2, 1.0))
    series = lyapunov_series(clm, traj)
    for arr in (series.W, series.dW_dt, series.bound, series.margin):
        assert not arr.any()
    assert check_lyapunov_decrease(series, 0.0)[0]


def test_lyapunov_injected_violation(preset_eval):
    series = preset_eval.lyapunov
    W = series.W.copy()
    W[len(W) // 2] += 1.0
    corrupted = LyapunovSeries.from_values(series.times, W, preset_eval.trajectory.Ydot_c,
                                           series.eps_min)
    assert not check_lyapunov_decrease(corrupted, 1e-3)[0]


def test_lyapunov_rejects_short_grid(preset):
    clm = build_closed_loop(preset)
    traj = simulate_closed_loop(clm, np.zeros(8), IntegratorConfig(0.1, 0.1))
    with pytest.raises(ValueError):
        lyapunov_series(clm, traj)


@settings(max_examples=30)
@given(st.floats(0, 1e-2), st.floats(0, 1e-2))
def test_lyapunov_check_monotone_in_tolerance(tol, extra):
    rng = np.random.default_rng(0)
    times = np.linspace(0, 1, 51)
    W = np.cumsum(rng.normal(scale=1e-4, size=51))
    series = LyapunovSeries.from_values(times, W, rng.normal(scale=0.01, size=(51, 2)), 0.1)
    if check_lyapunov_decrease(series, tol)[0]:
        assert check_lyapunov_decrease(series, tol + extra)[0]


def _fake_network(times, Y_p, Y_c=None, Ydot_c=None):
    T = len(times)
    Y_p = np.asarray(Y_p, dtype=float).reshape(T, -1)
    Y_c = np.zeros((T, 1)) if Y_c is None else np.asarray(Y_c, dtype=float).reshape(T, -1)
    Ydot_c = np.zeros_like(Y_c) if Ydot_c is None else np.asarray(Ydot_c, dtype=float).reshape(T, -1)
    base = Trajectory(np.asarray(times, float), np.zeros((T, 1)), np.zeros((T, 0)),
                      np.zeros((T, 1)), np.zeros((T, 1)))
    return NetworkTrajectory(base, Y_p, np.zeros_like(Y_c), Y_c, Ydot_c,
                             np.zeros_like(Y_p), np.zeros_like(Y_p), 1)


def test_consensus_error_examples(preset_eval):
    times = np.linspace(0, 5, 11)
    same = _fake_network(times, np.ones((11, 3)))
    report = consensus_error(same, 0.05)
    assert not report.error.any() and report.settled and report.settle_time == 0.0
    apart = _fake_network(times, np.column_stack([np.zeros(11), np.ones(11)]))
    report = consensus_error(apart, 0.05)
    assert np.all(report.error == 1.0) and not report.settled and report.settle_time is None
    report = preset_eval.consensus
    assert report.settled and report.settle_time <= 30.0 and report.final_error < 0.05


def test_consensus_settle_rule_uses_last_crossing():
    times = np.arange(6.0)
    e = np.array([[0, 1], [0, 0.01], [0, 0.2], [0, 0.01], [0, 0.0], [0, 0.03]])
    report = consensus_error(_fake_network(times, e), 0.05)
    assert report.settled and report.settle_time == 3.0
    with pytest.raises(ValueError):
        consensus_error(_fake_network(times, np.zeros((6, 1))), 0.05)


@settings(max_examples=40)
@given(st.permutations(range(4)), st.integers(0, 2**32 - 1))
def test_consensus_error_permutation_invariant(perm, seed):
    rng = np.random.default_rng(seed)
    times = np.linspace(0, 1, 9)
    Y = rng.normal(size=(9, 4))
    a = consensus_error(_fake_network(times, Y), 0.5)
    b = consensus_error(_fake_network(times, Y[:, list(perm)]), 0.5)
    np.testing.assert_array_equal(a.error, b.error)
    assert a.settle_time == b.settle_time


def test_steady_state_zero_trajectory():
    times = np.linspace(0, 3, 31)
    windows = detect_steady_state(_fake_network(times, np.zeros((31, 2)), np.zeros((31, 1))))
    assert len(windows) == 1
    assert windows[0].start == 0.0 and windows[0].end == 3.0
    assert not windows[0].mean_Y_c.any()
    assert check_steady_state_consequence(windows, 0.0)


def test_steady_state_sinusoid_has_no_window():
    times = np.linspace(0, 10, 1001)
    yc = np.sin(2 * np.pi * times)
    ydot = 2 * np.pi * np.cos(2 * np.pi * times)
    windows = detect_steady_state(_fake_network(times, np.zeros((1001, 2)), yc, ydot), 1e-6, 0.5)
    assert windows == []


def test_steady_state_min_duration_filters_short_windows():
    times = np.linspace(0, 2, 201)
    rate = np.where((times > 0.5) & (times < 0.8), 0.0, 1.0)
    assert detect_steady_state(_fake_network(times, np.zeros((201, 2)), Ydot_c=rate), 1e-4, 0.5) == []
    assert len(detect_steady_state(_fake_network(times, np.zeros((201, 2)), Ydot_c=rate), 1e-4, 0.2)) == 1


def test_steady_state_consequence_examples():
    ok = SteadyStateWindow(0.0, 1.0, np.zeros(2), np.zeros(2), 0.0)
    bad = SteadyStateWindow(0.0, 1.0, np.array([0.5]), np.zeros(1), 0.0)
    assert check_steady_state_consequence([ok], 1e-2)
    assert not check_steady_state_consequence([ok, bad], 1e-2)
    assert check_steady_state_consequence([], 1e-2)


def test_preset_steady_state_windows_are_consensus(preset_eval):
    windows = detect_steady_state(preset_eval.trajectory, 1e-4, 0.5)
    assert check_steady_state_consequence(windows, 1e-2)


def test_sample_positive_definite_examples(preset):
    assert sample_positive_definite(lambda x: x @ x, 3, 5.0, 200, 0).passed
    report = sample_positive_definite(lambda x: -(x @ x), 3, 1.0, 200, 0)
    assert not report.passed and report.counterexample_index == 0
    assert 0 < np.linalg.norm(report.counterexample) <= 1.0
    clm = build_closed_loop(preset)
    assert sample_positive_definite(lambda x: total_storage(clm, x), 8, 1.0, 1000, 42).passed


def test_sample_positive_definite_checks_origin():
    report = sample_positive_definite(lambda x: x @ x + 1.0, 2, 1.0, 10, 0)
    assert not report.passed and report.value_at_origin == 1.0


def test_sample_positive_definite_samples_in_ball():
    seen = []

    def fn(x):
        seen.append(np.linalg.norm(x))
        return 1.0 if seen[-1] > 0 else 0.0

    sample_positive_definite(fn, 4, 2.0, 500, 9)
    radii = np.array(seen[1:])
    assert np.all((radii > 0) & (radii <= 2.0))
    # uniform in the 4-ball: P(|x| <= R/2) = 1/16
    assert abs(np.mean(radii <= 1.0) - 1 / 16) < 0.04
