"""Naive and dimensionless-scaled policy adapters between contexts.

A scaled adapter maps a target observation to the source context through the
shared dimensionless space, queries the source policy there, and maps the
action back::

    x_src = phi_src^-1(phi_tgt(x))      a_tgt = phi_tgt^-1(phi_src(pi(x_src)))

Per channel this is a constant multiplicative factor, computed once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dimension import DIMENSIONLESS, Context, Dimension, check_same_schema, scale_factor
from .pendulum import Trajectory

NAIVE = "naive"
SCALED = "scaled"
MODES = (NAIVE, SCALED)


@dataclass(frozen=True)
class ChannelSignature:
    """Dimensions of observation and action channels.

    ``action_limits`` names, per action channel, the context entry holding its
    saturation bound (or None for an unbounded channel).
    """

    observations: tuple[tuple[str, Dimension], ...]
    actions: tuple[tuple[str, Dimension], ...]
    action_limits: tuple[str | None, ...] = ()

    def __post_init__(self):
        limits = tuple(self.action_limits) or (None,) * len(self.actions)
        if len(limits) != len(self.actions):
            raise ValueError("one action limit entry is required per action channel")
        object.__setattr__(self, "action_limits", limits)


PENDULUM_SIGNATURE = ChannelSignature(
    observations=(("theta", DIMENSIONLESS), ("theta_dot", Dimension(0, 0, -1))),
    actions=(("tau", Dimension(1, 2, -2)),),
    action_limits=("tau_max",),
)


def _channel_ratios(channels, num: Context, den: Context) -> tuple[float, ...]:
    # s = prod(q_b ** m_b); value_src = value_tgt * s_tgt / s_src and vice versa
    return tuple(scale_factor(dim, num.basis) / scale_factor(dim, den.basis)
                 for _, dim in channels)


@dataclass(frozen=True, eq=False)
class TransferredPolicy:
    policy: Callable
    source: Context
    target: Context
    mode: str
    signature: ChannelSignature = PENDULUM_SIGNATURE
    obs_factors: tuple[float, ...] = field(init=False)
    action_factors: tuple[float, ...] = field(init=False)
    limits: tuple[float, ...] = field(init=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        check_same_schema(self.source, self.target)
        sig = self.signature
        if self.mode == SCALED:
            obs = _channel_ratios(sig.observations, self.target, self.source)
            act = _channel_ratios(sig.actions, self.source, self.target)
        else:
            obs = (1.0,) * len(sig.observations)
            act = (1.0,) * len(sig.actions)
        limits = tuple(math.inf if name is None else self.target[name]
                       for name in sig.action_limits)
        object.__setattr__(self, "obs_factors", obs)
        object.__setattr__(self, "action_factors", act)
        object.__setattr__(self, "limits", limits)

    def source_observation(self, *obs):
        return tuple(x * f for x, f in zip(obs, self.obs_factors))

    def raw(self, *obs):
        """Target-unit action before saturation."""
        out = self.policy(*self.source_observation(*obs))
        if len(self.action_factors) == 1:
            return out * self.action_factors[0]
        return tuple(a * f for a, f in zip(out, self.action_factors))

    def __call__(self, *obs):
        out = self.raw(*obs)
        if len(self.limits) == 1:
            lim = self.limits[0]
            return np.clip(out, -lim, lim) if np.ndim(out) else min(max(out, -lim), lim)
        return tuple(np.clip(a, -lim, lim) for a, lim in zip(out, self.limits))


def naive_transfer(policy: Callable, c1: Context, c2: Context,
                   sig: ChannelSignature = PENDULUM_SIGNATURE) -> TransferredPolicy:
    """Use the source policy unchanged, saturated at the target's limits."""
    return TransferredPolicy(policy, c1, c2, NAIVE, sig)


def scaled_transfer(policy: Callable, c1: Context, c2: Context,
                    sig: ChannelSignature = PENDULUM_SIGNATURE) -> TransferredPolicy:
    """Route observations and actions through the dimensionless space shared by c1 and c2."""
    return TransferredPolicy(policy, c1, c2, SCALED, sig)


def transfer(policy: Callable, c1: Context, c2: Context, mode: str,
             sig: ChannelSignature = PENDULUM_SIGNATURE) -> TransferredPolicy:
    return TransferredPolicy(policy, c1, c2, mode, sig)


def pendulum_scaled_closed_form(policy: Callable, c0: Context, ct: Context,
                                theta: float, theta_dot: float) -> float:
    """Hand-derived pendulum scaling (pre-saturation), used as a cross-check."""
    ratio = (ct["m"] * ct["l"] * ct["g"]) / (c0["m"] * c0["l"] * c0["g"])
    rate = math.sqrt(ct["l"] * c0["g"] / (ct["g"] * c0["l"]))
    return ratio * policy(theta, theta_dot * rate)


def clamp_fraction(adapter: TransferredPolicy, traj: Trajectory,
                   rate_bounds: Sequence[float]) -> float:
    """Fraction of control steps whose source-unit observations fall outside
    the source policy's tabulated range (``rate_bounds`` per channel, inf = unbounded)."""
    n = len(traj) - 1
    if n <= 0:
        return 0.0
    obs = (traj.theta[:n], traj.theta_dot[:n])
    outside = np.zeros(n, dtype=bool)
    for x, f, bound in zip(obs, adapter.obs_factors, rate_bounds):
        outside |= np.abs(x * f) > bound
    return float(outside.mean())
