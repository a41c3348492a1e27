"""Lookup-table pendulum policies synthesized by fitted value iteration.

The state grid is periodic in theta and bounded in theta_dot.  Successor
values are read off the value grid by bilinear interpolation, so the Bellman
operator is an average over four grid nodes and stays a gamma-contraction.
"""
from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .dimension import context_fingerprint
from .errors import CorruptTable, FormatVersionMismatch, NoConvergence
from .pendulum import PendulumParams, step_arrays

log = logging.getLogger(__name__)

POLICY_MAGIC = b"PIPOLICY"
VALUE_MAGIC = b"PIVALUES"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sIIIddd")  # magic, version, n_theta, n_theta_dot, theta_min, theta_dot_max, tau_max


@dataclass(frozen=True)
class GridSpec:
    """Synthesis hyperparameters. ``theta_dot_max`` is dimensionless (units of sqrt(g/l))."""

    n_theta: int = 301
    n_theta_dot: int = 301
    theta_dot_max: float = 5.0
    n_actions: int = 21
    discount: float = 0.995
    tolerance: float = 1e-6
    max_iterations: int = 5000

    def __post_init__(self):
        if self.n_theta < 3 or self.n_theta_dot < 3:
            raise ValueError("grid resolutions must be >= 3")
        if self.n_actions < 1 or self.n_actions % 2 == 0:
            raise ValueError("action count must be odd so that zero torque is representable")
        if not 0.0 < self.discount < 1.0:
            raise ValueError(f"discount must lie in (0, 1), got {self.discount}")
        if not self.theta_dot_max > 0:
            raise ValueError("theta_dot_max must be positive")
        if not self.tolerance > 0 or self.max_iterations < 1:
            raise ValueError("tolerance must be positive and max_iterations >= 1")


@dataclass(frozen=True)
class StateGrid:
    """Axes of a (theta, theta_dot) grid.

    Theta nodes are ``(k - n//2) * 2pi/n``: uniform, periodic over [-pi, pi),
    symmetric under negation and always containing 0.
    """

    n_theta: int
    n_theta_dot: int
    theta_dot_max: float  # rad/s

    def __post_init__(self):
        if self.n_theta < 3 or self.n_theta_dot < 3:
            raise ValueError("grid resolutions must be >= 3")
        if not (math.isfinite(self.theta_dot_max) and self.theta_dot_max > 0):
            raise ValueError("theta_dot_max must be positive and finite")

    @property
    def theta_step(self) -> float:
        return 2.0 * math.pi / self.n_theta

    @property
    def theta_min(self) -> float:
        return -(self.n_theta // 2) * self.theta_step

    @property
    def theta_axis(self) -> np.ndarray:
        return (np.arange(self.n_theta) - self.n_theta // 2) * self.theta_step

    @property
    def theta_dot_step(self) -> float:
        return 2.0 * self.theta_dot_max / (self.n_theta_dot - 1)

    @property
    def theta_dot_axis(self) -> np.ndarray:
        a = np.linspace(-self.theta_dot_max, self.theta_dot_max, self.n_theta_dot)
        return 0.5 * (a - a[::-1])

    def bilinear(self, theta, theta_dot):
        """Flat node indices (4, ...) and weights (4, ...) for bilinear lookups."""
        theta = np.asarray(theta, dtype=float)
        theta_dot = np.asarray(theta_dot, dtype=float)
        x = np.mod((theta - self.theta_min) / self.theta_step, self.n_theta)
        i0 = np.floor(x).astype(np.int64)
        fx = x - i0
        i0 %= self.n_theta
        i1 = (i0 + 1) % self.n_theta

        y = (np.clip(theta_dot, -self.theta_dot_max, self.theta_dot_max)
             + self.theta_dot_max) / self.theta_dot_step
        j0 = np.minimum(np.floor(y).astype(np.int64), self.n_theta_dot - 2)
        fy = np.clip(y - j0, 0.0, 1.0)
        j1 = j0 + 1

        nd = self.n_theta_dot
        idx = np.stack([i0 * nd + j0, i0 * nd + j1, i1 * nd + j0, i1 * nd + j1])
        w = np.stack([(1 - fx) * (1 - fy), (1 - fx) * fy, fx * (1 - fy), fx * fy])
        return idx, w

    def interpolate(self, table: np.ndarray, theta, theta_dot):
        idx, w = self.bilinear(theta, theta_dot)
        out = np.sum(table.ravel()[idx] * w, axis=0)
        return float(out) if out.ndim == 0 else out

    def nearest(self, table: np.ndarray, theta, theta_dot):
        x = np.mod((np.asarray(theta, dtype=float) - self.theta_min) / self.theta_step,
                   self.n_theta)
        i = np.rint(x).astype(np.int64) % self.n_theta
        y = (np.clip(theta_dot, -self.theta_dot_max, self.theta_dot_max)
             + self.theta_dot_max) / self.theta_dot_step
        j = np.clip(np.rint(y).astype(np.int64), 0, self.n_theta_dot - 1)
        out = table[i, j]
        return float(out) if np.ndim(out) == 0 else out


INTERPOLATIONS = ("adaptive", "bilinear", "nearest")
# adaptive lookup blends only when the four corner torques span at most this fraction of tau_max
ADAPTIVE_BAND = 0.5


@dataclass(frozen=True, eq=False)
class PolicyGrid:
    """Torque table over the state grid.

    ``interpolation`` selects how off-node queries are answered:

    * ``bilinear`` blends the four surrounding nodes;
    * ``nearest`` returns the closest node;
    * ``adaptive`` (default) blends bilinearly where the surrounding torques
      agree to within ``ADAPTIVE_BAND * tau_max`` and falls back to the nearest
      node elsewhere.

    Tables from value iteration are bang-bang across switching curves, where a
    bilinear blend produces torques near zero that no optimal policy would
    apply.  Away from those curves a continuous lookup keeps the closed loop
    smooth, so round-off does not get amplified while balancing.
    """

    grid: StateGrid
    table: np.ndarray
    tau_max: float
    fingerprint: str = ""
    interpolation: str = "adaptive"

    def __post_init__(self):
        if self.interpolation not in INTERPOLATIONS:
            raise ValueError(f"interpolation must be one of {INTERPOLATIONS}")
        table = np.array(self.table, dtype=np.float64)
        if table.shape != (self.grid.n_theta, self.grid.n_theta_dot):
            raise CorruptTable(f"table shape {table.shape} does not match grid "
                               f"({self.grid.n_theta}, {self.grid.n_theta_dot})")
        table.setflags(write=False)
        object.__setattr__(self, "table", table)

    @property
    def theta_axis(self) -> np.ndarray:
        return self.grid.theta_axis

    @property
    def theta_dot_axis(self) -> np.ndarray:
        return self.grid.theta_dot_axis

    def __call__(self, theta, theta_dot):
        return interpolate_action(self, theta, theta_dot)

    def with_interpolation(self, interpolation: str) -> PolicyGrid:
        return PolicyGrid(self.grid, self.table, self.tau_max, self.fingerprint, interpolation)


@dataclass(frozen=True, eq=False)
class ValueGrid:
    grid: StateGrid
    value: np.ndarray
    iterations: int = 0
    residuals: tuple[float, ...] = field(default=(), repr=False)

    def __call__(self, theta, theta_dot):
        return self.grid.interpolate(self.value, theta, theta_dot)


def interpolate_action(policy: PolicyGrid, theta, theta_dot, method: str | None = None):
    """Table lookup, periodic in theta, clamped in theta_dot and torque."""
    method = method or policy.interpolation
    grid = policy.grid
    if method == "bilinear":
        tau = grid.interpolate(policy.table, theta, theta_dot)
    elif method == "nearest":
        tau = grid.nearest(policy.table, theta, theta_dot)
    elif method == "adaptive":
        idx, w = grid.bilinear(theta, theta_dot)
        corners = policy.table.ravel()[idx]
        spread = corners.max(axis=0) - corners.min(axis=0)
        tau = np.where(spread <= ADAPTIVE_BAND * policy.tau_max,
                       np.sum(corners * w, axis=0),
                       grid.nearest(policy.table, theta, theta_dot))
        tau = float(tau) if tau.ndim == 0 else tau
    else:
        raise ValueError(f"unknown interpolation {method!r}")
    return np.clip(tau, -policy.tau_max, policy.tau_max) if np.ndim(tau) else \
        min(max(tau, -policy.tau_max), policy.tau_max)


def action_set(tau_max: float, n_actions: int) -> np.ndarray:
    """Evenly spaced torques in [-tau_max, tau_max], exactly antisymmetric."""
    a = np.linspace(-tau_max, tau_max, n_actions)
    return 0.5 * (a - a[::-1])


def action_preference(actions: np.ndarray) -> np.ndarray:
    """Action indices ordered for argmax tie-breaking: smallest |tau|, then negative."""
    return np.array(sorted(range(len(actions)), key=lambda k: (abs(actions[k]), actions[k])))


def state_grid_for(params: PendulumParams, spec: GridSpec) -> StateGrid:
    return StateGrid(spec.n_theta, spec.n_theta_dot, spec.theta_dot_max * params.omega_scale)


def value_iteration(params: PendulumParams, spec: GridSpec = GridSpec(),
                    fingerprint: str | None = None) -> tuple[ValueGrid, PolicyGrid]:
    """Discounted fitted value iteration (Jacobi sweeps) on the pendulum grid."""
    grid = state_grid_for(params, spec)
    actions = action_set(params.tau_max, spec.n_actions)[action_preference(
        action_set(params.tau_max, spec.n_actions))]
    n_states = spec.n_theta * spec.n_theta_dot
    n_act = len(actions)

    th, om = np.meshgrid(grid.theta_axis, grid.theta_dot_axis, indexing="ij")
    th = th.reshape(-1, 1)
    om = om.reshape(-1, 1)
    reward = -(params.w_theta * th ** 2 + params.w_tau * actions[None, :] ** 2) * params.dt
    th_next, om_next = step_arrays(params, th, om, actions[None, :])
    idx, w = grid.bilinear(th_next, om_next)  # (4, S, A)
    del th_next, om_next

    rows = n_states * n_act
    transition = sp.csr_matrix(
        (w.transpose(1, 2, 0).reshape(-1),
         idx.transpose(1, 2, 0).reshape(-1).astype(np.int32),
         np.arange(0, 4 * rows + 1, 4, dtype=np.int64)),
        shape=(rows, n_states))
    del idx, w

    gamma = spec.discount
    v = np.zeros(n_states)
    residuals = []
    for it in range(1, spec.max_iterations + 1):
        q = reward + gamma * (transition @ v).reshape(n_states, n_act)
        v_new = q.max(axis=1)
        res = float(np.max(np.abs(v_new - v)))
        residuals.append(res)
        v = v_new
        if res < spec.tolerance:
            break
    else:
        raise NoConvergence(f"value iteration did not reach tolerance {spec.tolerance} "
                            f"in {spec.max_iterations} sweeps (residual {res:.3g})",
                            iterations=spec.max_iterations, residual=res)
    log.info("value iteration converged in %d sweeps (residual %.3g)", it, res)

    q = reward + gamma * (transition @ v).reshape(n_states, n_act)
    table = actions[np.argmax(q, axis=1)].reshape(spec.n_theta, spec.n_theta_dot)
    vgrid = ValueGrid(grid, v.reshape(spec.n_theta, spec.n_theta_dot), it, tuple(residuals))
    if fingerprint is None:
        fingerprint = context_fingerprint(params.to_context())
    return vgrid, PolicyGrid(grid, table, params.tau_max, fingerprint)


# --- file format ---------------------------------------------------------------
# little-endian: magic[8] | u32 version | u32 n_theta | u32 n_theta_dot |
# f64 theta_min | f64 theta_dot_max | f64 tau_max | f64[n_theta*n_theta_dot] table |
# u32 len | fingerprint (ascii)

def _write_grid(path, magic: bytes, grid: StateGrid, table: np.ndarray, tau_max: float,
                fingerprint: str) -> None:
    fp = fingerprint.encode("ascii")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(magic, FORMAT_VERSION, grid.n_theta, grid.n_theta_dot,
                              grid.theta_min, grid.theta_dot_max, tau_max))
        fh.write(np.ascontiguousarray(table, dtype="<f8").tobytes())
        fh.write(struct.pack("<I", len(fp)))
        fh.write(fp)


def _read_grid(path, magic: bytes):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise CorruptTable(f"{path}: truncated header")
    got_magic, version, n_theta, n_theta_dot, _theta_min, theta_dot_max, tau_max = \
        _HEADER.unpack_from(data)
    if got_magic != magic:
        raise CorruptTable(f"{path}: bad magic {got_magic!r}")
    if version != FORMAT_VERSION:
        raise FormatVersionMismatch(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    n = n_theta * n_theta_dot
    end = _HEADER.size + 8 * n
    if len(data) < end + 4:
        raise CorruptTable(f"{path}: table truncated ({len(data)} bytes)")
    table = np.frombuffer(data, dtype="<f8", count=n, offset=_HEADER.size)
    (fp_len,) = struct.unpack_from("<I", data, end)
    if len(data) != end + 4 + fp_len:
        raise CorruptTable(f"{path}: fingerprint length mismatch")
    fingerprint = data[end + 4:].decode("ascii")
    try:
        grid = StateGrid(n_theta, n_theta_dot, theta_dot_max)
    except ValueError as exc:
        raise CorruptTable(str(exc)) from None
    return grid, table.reshape(n_theta, n_theta_dot).astype(np.float64), tau_max, fingerprint


def save_policy(policy: PolicyGrid, path) -> None:
    _write_grid(path, POLICY_MAGIC, policy.grid, policy.table, policy.tau_max, policy.fingerprint)


def load_policy(path, interpolation: str = "adaptive") -> PolicyGrid:
    grid, table, tau_max, fingerprint = _read_grid(path, POLICY_MAGIC)
    return PolicyGrid(grid, table, tau_max, fingerprint, interpolation)


def save_value(value: ValueGrid, path, fingerprint: str = "") -> None:
    _write_grid(path, VALUE_MAGIC, value.grid, value.value, 0.0, fingerprint)


def load_value(path) -> ValueGrid:
    grid, table, _, _ = _read_grid(path, VALUE_MAGIC)
    return ValueGrid(grid, table)
