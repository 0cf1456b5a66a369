"""
Gridded DP reference
====================

Solve the square at a short horizon on an integer grid and compare with the
cost reached by threshold descent on the same instance.
"""

import time

from patrolgrad import bundled
from patrolgrad.dp_baseline import DpConfig, threshold_rollout, value_iteration
from patrolgrad.optimizer import descend

spec = bundled("square4").replace(horizon=20.0)

t0 = time.perf_counter()
dp = value_iteration(spec, DpConfig(dt=1.0, dr=1.0))
print(f"J_DP = {dp.J:.4f}  ({dp.n_states} states, {dp.iterations} sweeps, "
      f"{time.perf_counter() - t0:.2f}s)")
print(f"DP schedule replayed on continuous dynamics: {dp.J_continuous:.4f}")

trace = descend(spec)
print(f"J_IPA = {trace.J_final:.4f}  ratio {trace.J_final / dp.J:.3f}")
print(f"descended thresholds on the grid: {threshold_rollout(spec, trace.theta_final):.4f}")

# first steps of the DP policy: (node, remaining travel steps), action, R
for st in dp.rollout[:6]:
    print(f"  t={st.time:4.1f} pos={st.positions} act={st.action} R={st.R}")
