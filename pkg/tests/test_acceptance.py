"""Acceptance criteria, one test each; a PASS/FAIL line per criterion is printed in the summary."""
import math

import numpy as np

from pi_transfer.dimension import (
    Basis,
    Dimension,
    Quantity,
    generate_similar_context,
    pi_exponents,
)
from pi_transfer.pendulum import ORIGINAL_PARAMS, PendulumParams, rollout, zero_policy
from pi_transfer.policy import GridSpec, PolicyGrid, value_iteration
from pi_transfer.sweep import (
    PER_CONTEXT_DP,
    TIE_ATOL,
    SweepAxis,
    SweepSpec,
    log_factors,
    run_sweep,
    summarize,
)
from pi_transfer.transfer import pendulum_scaled_closed_form, scaled_transfer

# exact exponents over the basis (m, l, g)
CONTEXT_ROWS = {
    "tau_max": (Dimension(1, 2, -2), (-1, -1, -1)),
    "t_f": (Dimension(0, 0, 1), (0, -0.5, 0.5)),
    "w_theta": (Dimension(0, 0, -1), (0, 0.5, -0.5)),
    "w_tau": (Dimension(-2, -4, 3), (2, 2.5, 1.5)),
    "m": (Dimension(1, 0, 0), (-1, 0, 0)),
    "l": (Dimension(0, 1, 0), (0, -1, 0)),
    "g": (Dimension(0, 1, -2), (0, 0, -1)),
}
CHANNEL_ROWS = {
    "theta": (Dimension(0, 0, 0), (0, 0, 0)),
    "theta_dot": (Dimension(0, 0, -1), (0, 0.5, -0.5)),
    "tau": (Dimension(1, 2, -2), (-1, -1, -1)),
}


def run(params, policy):
    return rollout(params, policy)


def test_criterion_1_pi_exponents(criterion):
    basis = Basis((Quantity(1.0, Dimension(1, 0, 0), "m"), Quantity(2.0, Dimension(0, 1, 0), "l"),
                   Quantity(10.0, Dimension(0, 1, -2), "g")))
    worst = 0.0
    for dim, expected in list(CONTEXT_ROWS.values()) + list(CHANNEL_ROWS.values()):
        worst = max(worst, float(np.max(np.abs(np.subtract(pi_exponents(dim, basis), expected)))))
    criterion(1, "Pi exponents for 7 context and 3 channel rows", worst < 1e-12,
              f"max exponent error {worst:.1e}")


def test_criterion_2_similarity_invariance(criterion, c0, default_policy):
    factors = [(a, b) for a in (0.5, 2.0) for b in (0.5, 2.0)]
    factors += [(0.1, 1.0), (10.0, 1.0), (1.0, 0.1), (1.0, 10.0)]
    base = run(ORIGINAL_PARAMS, default_policy)
    worst_rel, worst_theta = 0.0, 0.0
    for fm, fl in factors:
        ct = generate_similar_context(c0, dict(m=c0["m"] * fm, l=c0["l"] * fl))
        traj = run(PendulumParams.from_context(ct), scaled_transfer(default_policy, c0, ct))
        worst_rel = max(worst_rel, abs(traj.total_reward / base.total_reward - 1.0))
        worst_theta = max(worst_theta, float(np.max(np.abs(traj.theta - base.theta))))
    criterion(2, "scaled policy invariant on 8 similar contexts",
              worst_rel < 1e-6 and worst_theta < 1e-9,
              f"max reward rel err {worst_rel:.1e}, max theta err {worst_theta:.1e}")


def test_criterion_3_diagonal_optimality(criterion, c0, default_policy):
    spec = SweepSpec((SweepAxis("m", (0.1, 1.0, 10.0)),
                      SweepAxis("tau_max", (0.1, 1.0, 10.0), similar=False)),
                     oracle=PER_CONTEXT_DP, grid=GridSpec())
    reports = run_sweep(c0, default_policy, spec)
    diagonal = [r for r in reports if r.factors["m"] == r.factors["tau_max"]]
    assert all(r.similar for r in diagonal)
    rel = [r.scaled_relative for r in diagonal]
    off = {f"{r.factors['m']:g}/{r.factors['tau_max']:g}": round(r.scaled_relative, 3)
           for r in reports if r not in diagonal}
    print("off-diagonal scaled relative rewards:", off)
    criterion(3, "scaled relative reward >= 0.98 on the similar diagonal of the (m, tau_max) slice",
              min(rel) >= 0.98, "diagonal relative " + ", ".join(f"{x:.4f}" for x in rel))


def test_criterion_4_dominance(criterion, c0, default_policy):
    spec = SweepSpec((SweepAxis("m", log_factors(5)), SweepAxis("l", log_factors(5)),
                      SweepAxis("tau_max", log_factors(5), similar=False)))
    s = summarize(run_sweep(c0, default_policy, spec))
    assert s["n_contexts"] == 125 and s["n_failed"] == 0
    criterion(4, "scaled beats naive on more of the 125 contexts",
              s["scaled_wins"] > s["naive_wins"],
              f"scaled {s['scaled_wins']}, naive {s['naive_wins']}, ties {s['ties']}, "
              f"tie tolerance {TIE_ATOL:g}")


def test_criterion_5_excess_torque(criterion, c0, default_policy):
    base = run(ORIGINAL_PARAMS, default_policy).total_reward
    spec = SweepSpec((SweepAxis("tau_max", (1.5, 2.0, 10.0), similar=False),))
    reports = run_sweep(c0, default_policy, spec)
    assert [r.context["tau_max"] for r in reports] == [12.0, 16.0, 80.0]
    worst = max(max(abs(r.naive_reward - base), abs(r.scaled_reward - base)) for r in reports)
    criterion(5, "tau_max in {12, 16, 80} keeps the original reward for both transfers",
              worst < 1e-9, f"max abs deviation {worst:.1e}")


def test_criterion_6_dp_sanity(criterion, default_policy):
    reward = run(ORIGINAL_PARAMS, default_policy).total_reward
    zero = run(ORIGINAL_PARAMS, zero_policy).total_reward
    rng = np.random.default_rng(20240601)
    shape = default_policy.table.shape
    best_random = -math.inf
    for _ in range(100):
        table = rng.uniform(-ORIGINAL_PARAMS.tau_max, ORIGINAL_PARAMS.tau_max, shape)
        pol = PolicyGrid(default_policy.grid, table, ORIGINAL_PARAMS.tau_max)
        best_random = max(best_random, run(ORIGINAL_PARAMS, pol).total_reward)
    fine = GridSpec(n_theta=2 * shape[0] - 1, n_theta_dot=2 * shape[1] - 1)
    _, fine_policy = value_iteration(ORIGINAL_PARAMS, fine)
    fine_reward = run(ORIGINAL_PARAMS, fine_policy).total_reward
    change = abs(fine_reward - reward) / abs(reward)
    criterion(6, "DP beats zero and 100 random tables; grid refinement stable",
              reward > zero and reward > best_random and change < 0.02,
              f"DP {reward:.4f}, zero {zero:.4f}, best random {best_random:.4f}, "
              f"refined {fine_reward:.4f} ({100 * change:.2f}% change)")


def test_criterion_7_transform_equivalence(criterion, c0):
    rng = np.random.default_rng(7)

    def policy(theta, theta_dot):
        return 6.0 * np.sin(theta) - 1.3 * theta_dot + 0.25

    worst = 0.0
    for _ in range(20):
        a, b = (c0.replace(m=rng.uniform(0.1, 10), l=rng.uniform(0.2, 20),
                           g=rng.uniform(1, 30), tau_max=rng.uniform(0.8, 80))
                for _ in range(2))
        theta = rng.uniform(-math.pi, math.pi, 1000)
        theta_dot = rng.uniform(-30, 30, 1000)
        generic = scaled_transfer(policy, a, b).raw(theta, theta_dot)
        closed = pendulum_scaled_closed_form(policy, a, b, theta, theta_dot)
        worst = max(worst, float(np.max(np.abs(generic - closed) / np.abs(closed))))
    criterion(7, "generic scaled transfer equals the pendulum closed form",
              worst < 1e-12, f"max rel err {worst:.1e} over 20 pairs x 1000 states")
