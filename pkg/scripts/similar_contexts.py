"""Roll the scaled policy out on similar contexts and write each trajectory to CSV.

Usage: python3 scripts/similar_contexts.py [OUT_DIR]
"""
import sys
from pathlib import Path

import numpy as np

from pi_transfer.dimension import context_distance, generate_similar_context
from pi_transfer.pendulum import ORIGINAL_PARAMS, PendulumParams, original_context, rollout
from pi_transfer.policy import value_iteration
from pi_transfer.transfer import naive_transfer, scaled_transfer

out = Path(sys.argv[1] if len(sys.argv) > 1 else "runs/similar")
out.mkdir(parents=True, exist_ok=True)

c0 = original_context()
_, policy = value_iteration(ORIGINAL_PARAMS)
base = rollout(ORIGINAL_PARAMS, policy)
base.write_csv(out / "original.csv")
print(f"original reward {base.total_reward:.6f}")
print(f"{'m':>6} {'l':>6} {'g':>6} {'distance':>9} {'naive':>10} {'scaled':>10} {'max dtheta':>10}")
for m, l, g in [(0.5, 1.0, 10.0), (2.0, 4.0, 10.0), (0.1, 2.0, 10.0), (10.0, 20.0, 10.0),
                (1.0, 2.0, 1.62), (3.0, 0.2, 24.8)]:
    ct = generate_similar_context(c0, dict(m=m, l=l, g=g))
    params = PendulumParams.from_context(ct)
    naive = rollout(params, naive_transfer(policy, c0, ct))
    scaled = rollout(params, scaled_transfer(policy, c0, ct))
    scaled.write_csv(out / f"scaled_m{m:g}_l{l:g}_g{g:g}.csv")
    dtheta = np.max(np.abs(scaled.theta - base.theta))
    print(f"{m:>6g} {l:>6g} {g:>6g} {context_distance(c0, ct):>9.1e} "
          f"{naive.total_reward:>10.4f} {scaled.total_reward:>10.4f} {dtheta:>10.1e}")
