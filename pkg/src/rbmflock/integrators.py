"""Fixed-step explicit integrators for autonomous right-hand sides.

States are numpy arrays of any shape; every stage is a linear combination of
rhs evaluations, so linear first integrals of the rhs survive to rounding.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericalFailure

SCHEMES = ("rk4", "euler")


@dataclass(frozen=True)
class StepperSpec:
    scheme: str = "rk4"
    dt: float = 1e-2
    substeps: int = 1

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}")
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise ConfigurationError("substeps must be a positive integer")

    def step(self, rhs, state, h, step_index=None):
        if self.scheme == "rk4":
            return rk4_step(rhs, state, h, step_index)
        return euler_step(rhs, state, h, step_index)

    def advance(self, rhs, state, tau=None, step_index=None):
        """Integrate over one interval of length ``tau`` (default ``dt``)."""
        tau = self.dt if tau is None else tau
        if self.substeps == 1:
            return self.step(rhs, state, tau, step_index)
        h = tau / self.substeps
        for _ in range(self.substeps):
            state = self.step(rhs, state, h, step_index)
        return state


def _check(state, step_index):
    if not np.all(np.isfinite(state)):
        raise NumericalFailure("non-finite values in integrator output", step_index)
    return state


def rk4_step(rhs, state, dt, step_index=None):
    """Classical four-stage Runge-Kutta step."""
    k1 = rhs(state)
    k2 = rhs(state + (0.5 * dt) * k1)
    k3 = rhs(state + (0.5 * dt) * k2)
    k4 = rhs(state + dt * k3)
    return _check(state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), step_index)


def euler_step(rhs, state, dt, step_index=None):
    return _check(state + dt * rhs(state), step_index)
