"""
One agent, two targets: cycle maps
==================================

The gradient of the two uncertainties with respect to the two dwell
thresholds evolves by an affine map per visiting cycle. Compare the
sequential map with the map implied by the event engine.
"""

import numpy as np

from patrolgrad import theory

rho = 0.3
printed = theory.build_cycle_map(rho, 1.0, rho, 1.0)
exact = theory.exact_cycle_map(rho, 1.0, rho, 1.0)

print("sequential map eigenvalues:", np.round(np.linalg.eigvals(printed.Lam), 4))
print("sequential map equilibrium:", np.round(theory.equilibrium(printed), 6))
print("engine map eigenvalues:   ", np.round(np.linalg.eigvals(exact.Lam), 4))

# spectral radius of the sequential map against rho; it crosses 1 at 1/2
for r in theory.spectral_scan([0.1, 0.2, 0.3, 0.4, 0.45]):
    print(f"  rho={r.rho:.2f}  |lambda|max={r.max_norm:.4f}")
print("critical rho:", round(theory.critical_rho(), 6))

# live engine: boundary gradients just before each departure from target 1
xs, spec = theory.engine_cycles(rho, 1.0, rho, 1.0, cycles=30)
print("engine, fixed time, cycle 30:  ", np.round(xs[-1], 6))
print("engine, along event, cycle 30: ", np.round(theory.along_event(xs, rho, 1.0, rho)[-1], 6))

# the engine map reproduces every cycle
it = theory.converge_gradients(exact, len(xs) - 2, xs[1])
print("engine vs engine map:", np.max(np.abs(it.xs - xs[1:])))

# above rho = 1/2 the sequential iteration blows up
print("rho=0.6 diverged:", theory.converge_gradients(theory.build_cycle_map(0.6, 1, 0.6, 1), 200).diverged)
