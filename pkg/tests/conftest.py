import numpy as np
import pytest

from niconsensus.runner import evaluate
from niconsensus.scenario import builtin_pendulum_preset


@pytest.fixture(scope="session")
def preset():
    return builtin_pendulum_preset()


@pytest.fixture(scope="session")
def preset_eval(preset):
    """Full evaluation of the pendulum preset, shared across modules (slow)."""
    return evaluate(preset)


def sine_input(amplitude=0.5, freq=1.0):
    omega = 2 * np.pi * freq

    def u(t):
        return np.array([amplitude * np.sin(omega * t)])

    return u


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
