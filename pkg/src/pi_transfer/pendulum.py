"""Simple inverted pendulum: RK4 simulation, quadratic cost, episode rollouts.

The angle is measured from the upright position, so the dynamics are::

    theta_ddot = (g / l) * sin(theta) + tau / (m * l**2)

with the torque saturated at ``tau_max`` and held constant over a step.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields
from typing import Callable

import numpy as np

from .dimension import Context, Dimension
from .errors import PolicyReturnedNonFinite, SchemaMismatch

TWO_PI = 2.0 * math.pi

# Context schema: quantities of the simulated pendulum plus the simulator step.
PENDULUM_DIMS = {
    "m": Dimension(1, 0, 0),
    "g": Dimension(0, 1, -2),
    "l": Dimension(0, 1, 0),
    "tau_max": Dimension(1, 2, -2),
    "t_f": Dimension(0, 0, 1),
    "w_theta": Dimension(0, 0, -1),
    "w_tau": Dimension(-2, -4, 3),
    "dt": Dimension(0, 0, 1),
}
PENDULUM_BASIS = ("m", "l", "g")


@dataclass(frozen=True)
class PendulumParams:
    m: float
    l: float
    g: float
    tau_max: float
    dt: float
    t_f: float
    w_theta: float
    w_tau: float

    def __post_init__(self):
        for f in fields(self):
            v = float(getattr(self, f.name))
            if not math.isfinite(v):
                raise ValueError(f"{f.name} must be finite, got {v}")
            object.__setattr__(self, f.name, v)
        for name in ("m", "l", "g", "tau_max", "dt", "t_f"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.w_theta < 0 or self.w_tau < 0:
            raise ValueError("cost weights must be nonnegative")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_f / self.dt))

    @property
    def omega_scale(self) -> float:
        """sqrt(g/l): converts dimensionless angular rates to rad/s."""
        return math.sqrt(self.g / self.l)

    def to_context(self, name: str = "") -> Context:
        return Context.from_values(
            {k: getattr(self, k) for k in PENDULUM_DIMS}, PENDULUM_DIMS, PENDULUM_BASIS, name)

    @classmethod
    def from_context(cls, ctx: Context) -> PendulumParams:
        missing = [k for k in PENDULUM_DIMS if k not in ctx]
        if missing:
            raise SchemaMismatch(f"context lacks pendulum entries {missing}")
        for k, dim in PENDULUM_DIMS.items():
            if ctx.entries[k].dim != dim:
                raise SchemaMismatch(f"entry {k!r} has dimension {ctx.entries[k].dim}, "
                                     f"expected {dim}")
        return cls(**{k: ctx[k] for k in PENDULUM_DIMS})


ORIGINAL_PARAMS = PendulumParams(m=1.0, l=2.0, g=10.0, tau_max=8.0, dt=0.05,
                                 t_f=10.0, w_theta=1.0, w_tau=0.01)


def original_context() -> Context:
    return ORIGINAL_PARAMS.to_context("original")


def wrap_angle(theta):
    """Wrap to [-pi, pi); works on floats and arrays."""
    w = np.mod(np.asarray(theta, dtype=float) + math.pi, TWO_PI) - math.pi
    w = np.where(w >= math.pi, w - TWO_PI, w)
    return float(w) if w.ndim == 0 else w


@dataclass(frozen=True)
class PendulumState:
    theta: float
    theta_dot: float

    def __post_init__(self):
        if not (math.isfinite(self.theta) and math.isfinite(self.theta_dot)):
            raise ValueError(f"non-finite pendulum state ({self.theta}, {self.theta_dot})")


# Hanging at rest, nudged off the antipode so the wrap is unambiguous.
INITIAL_STATE = PendulumState(math.pi - 1e-9, 0.0)


def _rk4(theta, omega, tau, g_over_l, inv_ml2, dt):
    """One RK4 step of the unwrapped dynamics; array-friendly."""
    u = tau * inv_ml2

    def acc(th):
        return g_over_l * np.sin(th) + u

    k1t, k1w = omega, acc(theta)
    k2t, k2w = omega + 0.5 * dt * k1w, acc(theta + 0.5 * dt * k1t)
    k3t, k3w = omega + 0.5 * dt * k2w, acc(theta + 0.5 * dt * k2t)
    k4t, k4w = omega + dt * k3w, acc(theta + dt * k3t)
    theta_next = theta + dt / 6.0 * (k1t + 2.0 * k2t + 2.0 * k3t + k4t)
    omega_next = omega + dt / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
    return theta_next, omega_next


def step_arrays(params: PendulumParams, theta, theta_dot, tau):
    """Vectorized :func:`step` returning wrapped angle and rate arrays."""
    tau = np.clip(tau, -params.tau_max, params.tau_max)
    th, om = _rk4(np.asarray(theta, float), np.asarray(theta_dot, float), tau,
                  params.g / params.l, 1.0 / (params.m * params.l ** 2), params.dt)
    return wrap_angle(th), om


def step(params: PendulumParams, state: PendulumState, tau: float) -> PendulumState:
    tau = min(max(float(tau), -params.tau_max), params.tau_max)
    th, om = _rk4(state.theta, state.theta_dot, tau, params.g / params.l,
                  1.0 / (params.m * params.l ** 2), params.dt)
    return PendulumState(wrap_angle(float(th)), float(om))


def instantaneous_reward(params: PendulumParams, state: PendulumState, tau: float) -> float:
    theta = wrap_angle(state.theta)
    return -(params.w_theta * theta * theta + params.w_tau * tau * tau)


@dataclass(frozen=True)
class Trajectory:
    """Sampled episode. The last sample is the terminal state (no torque, no reward)."""

    t: np.ndarray
    theta: np.ndarray
    theta_dot: np.ndarray
    tau: np.ndarray
    reward: np.ndarray
    dt: float
    total_reward: float

    def __len__(self) -> int:
        return len(self.t)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "theta", "theta_dot", "tau", "reward"])
            for row in zip(self.t, self.theta, self.theta_dot, self.tau, self.reward):
                writer.writerow([f"{x:.17g}" for x in row])


Policy = Callable[[float, float], float]


def rollout(params: PendulumParams, policy: Policy,
            initial: PendulumState = INITIAL_STATE) -> Trajectory:
    n = params.n_steps
    t = np.arange(n + 1) * params.dt
    theta = np.empty(n + 1)
    theta_dot = np.empty(n + 1)
    tau = np.zeros(n + 1)
    reward = np.zeros(n + 1)

    state = PendulumState(wrap_angle(initial.theta), initial.theta_dot)
    for k in range(n):
        theta[k], theta_dot[k] = state.theta, state.theta_dot
        u = float(policy(state.theta, state.theta_dot))
        if not math.isfinite(u):
            raise PolicyReturnedNonFinite(
                f"policy returned {u} at t={t[k]:.6g}, state=({state.theta}, {state.theta_dot})")
        u = min(max(u, -params.tau_max), params.tau_max)
        tau[k] = u
        reward[k] = instantaneous_reward(params, state, u)
        state = step(params, state, u)
    theta[n], theta_dot[n] = state.theta, state.theta_dot
    total = float(np.sum(reward[:n]) * params.dt)
    return Trajectory(t, theta, theta_dot, tau, reward, params.dt, total)


def zero_policy(theta: float, theta_dot: float) -> float:
    return 0.0


def write_trajectory_csv(traj: Trajectory, path) -> None:
    traj.write_csv(path)
