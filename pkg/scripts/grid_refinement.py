"""Rollout reward of the synthesized policy versus grid resolution and lookup mode."""
import time

from pi_transfer.pendulum import ORIGINAL_PARAMS, rollout
from pi_transfer.policy import INTERPOLATIONS, GridSpec, value_iteration

print(f"{'grid':>6} {'sweeps':>6} {'secs':>6} " + " ".join(f"{m:>10}" for m in INTERPOLATIONS))
for n in (101, 201, 301, 601):
    start = time.perf_counter()
    value, policy = value_iteration(ORIGINAL_PARAMS, GridSpec(n_theta=n, n_theta_dot=n))
    secs = time.perf_counter() - start
    rewards = [rollout(ORIGINAL_PARAMS, policy.with_interpolation(m)).total_reward
               for m in INTERPOLATIONS]
    print(f"{n:>6} {value.iterations:>6} {secs:>6.1f} " + " ".join(f"{r:>10.4f}" for r in rewards))
