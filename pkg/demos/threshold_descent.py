"""
Threshold descent
=================

Projected gradient descent on the threshold matrices: a single agent drives
its dwell thresholds to zero, two agents in the larger scenario do not.
"""

import numpy as np

from patrolgrad import bundled
from patrolgrad.optimizer import DescentConfig, descend, theorem1_check

# single agent on the square, starting from a matrix that visits every target
spec = bundled("square4_cycle")
diag, trace = theorem1_check(spec, spec.theta0)
for l in (0, 5, 10, 20, 50, 300):
    print(f"l={l:3d}  J={trace.costs[l]:8.4f}  diag={np.round(diag[l], 3)}")

# two agents, five targets
spec = bundled("counterexample2a5t")
trace = descend(spec, cfg=DescentConfig(iterations=300))
print(f"J {trace.costs[0]:.3f} -> {trace.J_final:.3f}")
for z in range(spec.N):
    print(f"agent {z + 1} dwell thresholds:", np.round(trace.diagonals(z + 1)[-1], 2))
print("agent 1 visits:", "-".join(map(str, trace.sequences[-1][0][:12])))
