"""Concrete negative-imaginary plants and output strictly NI controllers.

Every constructor returns a :class:`~niconsensus.dynamics.SystemModel`
carrying an analytic output Jacobian and a closed-form storage function
with its gradient.

Scalar nonlinearities are restricted to ``a*x + b*x**3 + c*sin(x)`` so the
storage functions (which integrate the nonlinearity) stay closed-form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dynamics import SystemModel

__all__ = [
    "PendulumParams",
    "NonlinearitySpec",
    "FirstOrderOsniParams",
    "SecondOrderOsniParams",
    "make_pendulum",
    "make_first_order_osni",
    "make_second_order_osni",
    "cubic_osni_controller",
    "osni_residual_first_order",
    "osni_residual_second_order",
]

GRAVITY = 9.8
_EPS_SLACK = 1e-12
_ONE = np.ones((1, 1))
_FIRST_STATE = np.array([[1.0, 0.0]])


@dataclass(frozen=True)
class PendulumParams:
    """Pendulum with a torsional pivot spring, angle measured from hanging down."""

    mass: float
    length: float
    spring: float
    gravity: float = GRAVITY

    def __post_init__(self):
        for name in ("mass", "length", "spring", "gravity"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"pendulum {name} must be positive, got {value}")


@dataclass(frozen=True)
class NonlinearitySpec:
    """The scalar function ``s(x) = linear*x + cubic*x**3 + sine*sin(x)``."""

    linear: float = 0.0
    cubic: float = 0.0
    sine: float = 0.0

    def __post_init__(self):
        for name in ("linear", "cubic", "sine"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"nonlinearity coefficient {name} must be finite")

    def __call__(self, x):
        return self.linear * x + self.cubic * x ** 3 + self.sine * np.sin(x)

    def antiderivative(self, x):
        """Integral of ``s`` from 0 to ``x``."""
        return self.linear * x ** 2 / 2 + self.cubic * x ** 4 / 4 + self.sine * (1 - np.cos(x))

    def check_negative_definite_integral(self, what: str = "nonlinearity"):
        """Raise unless ``-antiderivative`` is positive definite.

        Sufficient conditions: ``cubic <= 0``, ``linear < 0`` or
        (``linear <= 0`` and ``cubic < 0``), and ``|sine| <= |linear|``.
        They rely on ``1 - cos(x) < x**2 / 2`` for ``x != 0``.
        """
        a, b, c = self.linear, self.cubic, self.sine
        if b > 0:
            raise ValueError(
                f"{what}: cubic coefficient {b} > 0 makes the storage function "
                "negative for large |x|")
        if not (a < 0 or (a <= 0 and b < 0)):
            raise ValueError(
                f"{what}: storage function is not positive definite; need "
                f"linear < 0, or linear <= 0 with cubic < 0 (got linear={a}, cubic={b})")
        if abs(c) > abs(a):
            raise ValueError(
                f"{what}: |sine| = {abs(c)} exceeds |linear| = {abs(a)}; "
                "positive definiteness of the storage function is not guaranteed")


def _check_epsilon(epsilon, upper, label, bound_name):
    if not (0 < epsilon <= upper * (1 + _EPS_SLACK)):
        raise ValueError(
            f"{label}: strictness epsilon={epsilon} outside the admissible range "
            f"(0, {bound_name}] = (0, {upper:.12g}]")


@dataclass(frozen=True)
class FirstOrderOsniParams:
    """``x' = rho(x) + alpha*u``, ``y = x``; ``epsilon`` defaults to ``1/alpha``."""

    rho: NonlinearitySpec
    alpha: float
    epsilon: Optional[float] = None

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.epsilon is None:
            object.__setattr__(self, "epsilon", 1.0 / self.alpha)
        _check_epsilon(self.epsilon, self.max_epsilon, "first-order OSNI", "1/alpha")

    @property
    def max_epsilon(self) -> float:
        return 1.0 / self.alpha


@dataclass(frozen=True)
class SecondOrderOsniParams:
    """``x1' = x2``, ``x2' = eta(x1) - beta*x2 + alpha*u``, ``y = x1``.

    ``epsilon`` defaults to ``beta/alpha``.
    """

    eta: NonlinearitySpec
    alpha: float
    beta: float
    epsilon: Optional[float] = None

    def __post_init__(self):
        for name in ("alpha", "beta"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value}")
        if self.epsilon is None:
            object.__setattr__(self, "epsilon", self.beta / self.alpha)
        _check_epsilon(self.epsilon, self.max_epsilon, "second-order OSNI", "beta/alpha")

    @property
    def max_epsilon(self) -> float:
        return self.beta / self.alpha


def make_pendulum(p: PendulumParams, name: str = "pendulum") -> SystemModel:
    """Pendulum plant with state (angle, angular velocity) and output angle.

    Storage: ``spring*x1**2/2 + m*l**2*x2**2/2 + m*g*l*(1 - cos x1)``, for
    which the dissipation inequality against ``u * y'`` holds with equality.
    """
    inertia = p.mass * p.length ** 2
    mgl = p.mass * p.gravity * p.length
    kappa = p.spring

    def f(x, u):
        x1 = x[0]
        x2 = x[1]
        return np.array([x2, (-kappa * x1 - mgl * math.sin(x1) + u[0]) / inertia])

    def h(x):
        return x[:1]

    def storage(x):
        x1 = x[0]
        x2 = x[1]
        return 0.5 * kappa * x1 * x1 + 0.5 * inertia * x2 * x2 + mgl * (1.0 - math.cos(x1))

    def storage_gradient(x):
        return np.array([kappa * x[0] + mgl * math.sin(x[0]), inertia * x[1]])

    return SystemModel(2, 1, 1, f, h, lambda x: _FIRST_STATE, storage, storage_gradient,
                       name=name)


def make_first_order_osni(p: FirstOrderOsniParams, name: str = "first_order_osni") -> SystemModel:
    """First-order controller with storage ``-(1/alpha) * int_0^x rho``."""
    p.rho.check_negative_definite_integral("rho")
    rho, alpha = p.rho, p.alpha
    a, b, c = rho.linear, rho.cubic, rho.sine

    def f(x, u):
        z = x[0]
        return np.array([a * z + b * z * z * z + c * math.sin(z) + alpha * u[0]])

    def h(x):
        return x[:1]

    def storage(x):
        return -float(rho.antiderivative(x[0])) / alpha

    def storage_gradient(x):
        return np.array([-float(rho(x[0])) / alpha])

    return SystemModel(1, 1, 1, f, h, lambda x: _ONE, storage, storage_gradient,
                       strictness=p.epsilon, name=name)


def make_second_order_osni(p: SecondOrderOsniParams, name: str = "second_order_osni") -> SystemModel:
    """Second-order controller with storage ``-(1/alpha) int_0^x1 eta + x2**2/(2 alpha)``."""
    p.eta.check_negative_definite_integral("eta")
    eta, alpha, beta = p.eta, p.alpha, p.beta
    a, b, c = eta.linear, eta.cubic, eta.sine

    def f(x, u):
        x1 = x[0]
        x2 = x[1]
        return np.array([x2, a * x1 + b * x1 ** 3 + c * math.sin(x1) - beta * x2 + alpha * u[0]])

    def h(x):
        return x[:1]

    def storage(x):
        return (-float(eta.antiderivative(x[0])) + 0.5 * x[1] * x[1]) / alpha

    def storage_gradient(x):
        return np.array([-float(eta(x[0])) / alpha, x[1] / alpha])

    return SystemModel(2, 1, 1, f, h, lambda x: _FIRST_STATE, storage, storage_gradient,
                       strictness=p.epsilon, name=name)


def cubic_osni_controller(beta: float, phi: float, alpha: float,
                          epsilon: float | None = None) -> SystemModel:
    """Controller ``x' = -beta*x - phi*x**3 + alpha*u``, ``y = x``."""
    params = FirstOrderOsniParams(NonlinearitySpec(linear=-beta, cubic=-phi), alpha, epsilon)
    return make_first_order_osni(params, name="cubic_osni")


def osni_residual_first_order(p: FirstOrderOsniParams, x: float, u: float) -> float:
    """``V' - (u*y' - epsilon*y'**2)`` in closed form: ``(epsilon - 1/alpha)*(rho(x) + alpha*u)**2``."""
    velocity = float(p.rho(x)) + p.alpha * u
    return (p.epsilon - 1.0 / p.alpha) * velocity ** 2


def osni_residual_second_order(p: SecondOrderOsniParams, x1: float, x2: float, u: float) -> float:
    """Closed-form residual ``(epsilon - beta/alpha) * x2**2``; ``x1`` and ``u`` drop out."""
    return (p.epsilon - p.beta / p.alpha) * x2 ** 2
