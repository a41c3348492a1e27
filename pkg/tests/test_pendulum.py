import csv
import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from pi_transfer.dimension import Dimension
from pi_transfer.errors import PolicyReturnedNonFinite, SchemaMismatch
from pi_transfer.pendulum import (
    INITIAL_STATE,
    ORIGINAL_PARAMS,
    PendulumParams,
    PendulumState,
    instantaneous_reward,
    rollout,
    step,
    step_arrays,
    wrap_angle,
    zero_policy,
)

P = ORIGINAL_PARAMS
FREE = dataclasses.replace(P, w_theta=0.0, w_tau=0.0)


def energy(params, theta, theta_dot):
    m, l, g = params.m, params.l, params.g
    return 0.5 * m * l * l * theta_dot ** 2 + m * g * l * np.cos(theta)


def free_swing(params, state, n):
    out = [state]
    for _ in range(n):
        state = step(params, state, 0.0)
        out.append(state)
    return np.array([(s.theta, s.theta_dot) for s in out])


class TestParams:
    def test_context_round_trip(self):
        assert PendulumParams.from_context(P.to_context()) == P

    def test_n_steps(self):
        assert P.n_steps == 200

    @pytest.mark.parametrize("field", ["m", "l", "g", "tau_max", "dt", "t_f"])
    def test_positive(self, field):
        with pytest.raises(ValueError):
            dataclasses.replace(P, **{field: 0.0})

    def test_negative_weight(self):
        with pytest.raises(ValueError):
            dataclasses.replace(P, w_tau=-1.0)

    def test_wrong_dimension(self):
        ctx = P.to_context()
        bad = ctx.__class__.from_values(
            ctx.values(), {**ctx.dims(), "dt": Dimension(0, 1, 0)}, ctx.basis_names)
        with pytest.raises(SchemaMismatch):
            PendulumParams.from_context(bad)


class TestWrap:
    def test_range(self):
        assert wrap_angle(math.pi) == -math.pi
        assert wrap_angle(-math.pi) == -math.pi
        assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)

    @given(st.floats(-1e4, 1e4))
    def test_property(self, x):
        w = wrap_angle(x)
        assert -math.pi <= w < math.pi
        assert math.cos(w) == pytest.approx(math.cos(x), abs=1e-9)


class TestStep:
    def test_upright_fixed_point(self):
        assert step(P, PendulumState(0.0, 0.0), 0.0) == PendulumState(0.0, 0.0)

    def test_hanging_stays(self):
        s = step(P, PendulumState(math.pi - 1e-6, 0.0), 0.0)
        assert math.pi - abs(s.theta) < 1e-5

    def test_clamps_torque(self):
        s0 = PendulumState(0.3, -0.2)
        assert step(P, s0, 1e6) == step(P, s0, P.tau_max)
        assert step(P, s0, -1e6) == step(P, s0, -P.tau_max)

    def test_wraps(self):
        s = step(P, PendulumState(math.pi - 1e-3, 5.0), 0.0)
        assert -math.pi <= s.theta < 0

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(0)
        th, om, tau = rng.uniform(-3, 3, 50), rng.uniform(-6, 6, 50), rng.uniform(-12, 12, 50)
        vt, vo = step_arrays(P, th, om, tau)
        for k in range(50):
            s = step(P, PendulumState(th[k], om[k]), tau[k])
            assert (vt[k], vo[k]) == (s.theta, s.theta_dot)

    @given(st.floats(-math.pi, math.pi), st.floats(-20, 20), st.floats(-50, 50))
    def test_invariants(self, th, om, tau):
        s = step(P, PendulumState(th, om), tau)
        assert -math.pi <= s.theta < math.pi and math.isfinite(s.theta_dot)

    def test_rejects_nan_state(self):
        with pytest.raises(ValueError):
            PendulumState(math.nan, 0.0)

    def test_energy_conserved(self):
        # swing of 0.2 rad about the hanging position, 1000 steps
        s0 = PendulumState(math.pi - 0.2, 0.0)
        traj = free_swing(FREE, s0, 1000)
        e = energy(FREE, traj[:, 0], traj[:, 1])
        assert np.max(np.abs(e / e[0] - 1.0)) < 1e-6

    def test_matches_fine_reference(self):
        # same integrator at dt/100, and an independent adaptive solver
        s0 = PendulumState(math.pi - 0.2, 0.0)
        coarse = free_swing(FREE, s0, 1000)
        fine_params = dataclasses.replace(FREE, dt=FREE.dt / 100)
        th, om = np.array([s0.theta]), np.array([s0.theta_dot])
        for _ in range(100 * 1000):
            th, om = step_arrays(fine_params, th, om, 0.0)
        sol = solve_ivp(lambda t, y: [y[1], FREE.g / FREE.l * math.sin(y[0])],
                        (0, 1000 * FREE.dt), [s0.theta, 0.0], method="DOP853",
                        rtol=1e-12, atol=1e-12)
        ref_theta = wrap_angle(sol.y[0, -1])
        assert abs(th[0] - ref_theta) < 1e-8
        dtheta = wrap_angle(coarse[-1, 0] - ref_theta)
        assert abs(dtheta) < 1e-4
        assert abs(coarse[-1, 1] - sol.y[1, -1]) < 1e-4


class TestReward:
    def test_zero(self):
        assert instantaneous_reward(P, PendulumState(0.0, 0.0), 0.0) == 0.0

    def test_value(self):
        assert instantaneous_reward(P, PendulumState(1.0, 0.0), 2.0) == pytest.approx(-1.04, rel=1e-15)

    def test_uses_wrapped_angle(self):
        assert instantaneous_reward(P, PendulumState(2 * math.pi + 1, 0.0), 0.0) == \
            pytest.approx(-1.0)


class TestRollout:
    def test_zero_policy_at_equilibrium(self):
        traj = rollout(P, zero_policy, PendulumState(0.0, 0.0))
        assert traj.total_reward == 0.0

    def test_length_and_total(self):
        traj = rollout(P, lambda th, om: -3.0 * th - om)
        assert len(traj) == P.n_steps + 1
        assert traj.tau[-1] == 0.0 and traj.reward[-1] == 0.0
        assert traj.total_reward == pytest.approx(np.sum(traj.reward[:-1]) * P.dt, rel=1e-12)

    def test_zero_policy_hanging(self):
        # theta stays near pi the whole episode: reward ~ -pi^2 * t_f
        traj = rollout(P, zero_policy)
        assert traj.total_reward == pytest.approx(-(math.pi ** 2) * P.t_f, rel=1e-6)

    def test_deterministic(self):
        pol = lambda th, om: 8 * math.sin(3 * th) - om
        a, b = rollout(P, pol), rollout(P, pol)
        assert a.total_reward == b.total_reward and np.array_equal(a.theta, b.theta)

    def test_clamps_policy_output(self):
        traj = rollout(P, lambda th, om: 100.0)
        assert np.all(traj.tau[:-1] == P.tau_max)

    def test_non_finite_policy(self):
        with pytest.raises(PolicyReturnedNonFinite):
            rollout(P, lambda th, om: math.nan)

    def test_initial_state(self):
        assert INITIAL_STATE.theta == pytest.approx(math.pi) and INITIAL_STATE.theta_dot == 0.0

    def test_csv(self, tmp_path):
        traj = rollout(P, lambda th, om: -th)
        path = tmp_path / "t.csv"
        traj.write_csv(path)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["t", "theta", "theta_dot", "tau", "reward"]
        assert len(rows) == len(traj) + 1
        assert float(rows[57][1]) == traj.theta[56]
