"""Cycle-map analysis of one agent shuttling between two targets.

The gradient vector is ``x = [dR1/dth1, dR1/dth2, dR2/dth1, dR2/dth2]`` with
``th1, th2`` the two dwell thresholds. A visiting cycle (leave 1, reach 2,
leave 2, reach 1) acts on it affinely, ``x -> Lam x + U``.

Two maps are provided. :func:`build_cycle_map` composes the four
per-event updates sequentially. :func:`exact_cycle_map` follows the jump
rules of the event engine, where an arrival transfers the event-time
derivative computed at the matching departure (that is, from the gradient
*before* the departure jump). The two differ, and only the exact map agrees
with finite differences of the simulated trajectory.

Boundary gradients come in two conventions. The engine tracks the
fixed-time derivative ``dR(t)/dth`` just before the departure. The
along-event derivative ``d R(T_k(th)) / dth`` also moves the boundary with
the threshold; see :func:`along_event`. Its equilibrium is ``[1, 0, 0, 1]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ipa import grad_J
from .scenario import AgentSpec, TargetSpec, make_mission

DIVERGENCE_NORM = 1e6


@dataclass(frozen=True)
class CycleMap:
    Lam: np.ndarray
    U: np.ndarray
    parts: tuple                 # ((Lam1, U1), ..., (Lam4, U4))


@dataclass(frozen=True)
class SpectralReport:
    rho: float
    eigenvalues: np.ndarray      # numeric, sorted by (real, imag)
    closed_form: np.ndarray | None
    max_norm: float
    equilibrium: np.ndarray | None


def _check(A1, B1, A2, B2):
    for A, B in ((A1, B1), (A2, B2)):
        if A == B:
            raise ValueError(f"A == B ({A}) makes the cycle map singular")


def cycle_parts(A1, B1, A2, B2):
    """The four per-event updates ``(Lam_k, U_k)``."""
    _check(A1, B1, A2, B2)
    I = np.eye(4)
    L1 = I.copy()
    L1[0, 0] = L1[1, 1] = A1 / (A1 - B1)
    U1 = np.array([B1 / (B1 - A1), 0.0, 0.0, 0.0])
    L2 = I.copy()
    L2[2, 0] = L2[3, 1] = B2 / (B1 - A1)
    U2 = np.array([0.0, 0.0, B2 / (A1 - B1), 0.0])
    L3 = I.copy()
    L3[2, 2] = L3[3, 3] = A2 / (A2 - B2)
    U3 = np.array([0.0, 0.0, 0.0, B2 / (B2 - A2)])
    L4 = I.copy()
    L4[0, 2] = L4[1, 3] = B1 / (B2 - A2)
    U4 = np.array([0.0, B1 / (A2 - B2), 0.0, 0.0])
    return (L1, U1), (L2, U2), (L3, U3), (L4, U4)


def compose(parts) -> tuple[np.ndarray, np.ndarray]:
    """Sequential composition ``x -> L_n(...(L_1 x + U_1)...) + U_n``."""
    Lam = np.eye(4)
    U = np.zeros(4)
    for L, u in parts:
        Lam = L @ Lam
        U = L @ U + u
    return Lam, U


def build_cycle_map(A1, B1, A2, B2) -> CycleMap:
    """Sequential composition ``Lam4 Lam3 Lam2 Lam1`` of the per-event updates."""
    parts = cycle_parts(A1, B1, A2, B2)
    Lam, U = compose(parts)
    return CycleMap(Lam, U, parts)


def exact_cycle_map(A1, B1, A2, B2) -> CycleMap:
    """Cycle map consistent with the event engine.

    A departure and the following arrival touch disjoint rows, and the arrival
    reads the pre-departure gradient, so each leg is the parallel update
    ``Lam_d + Lam_a - I`` with offset ``U_d + U_a``.
    """
    (L1, U1), (L2, U2), (L3, U3), (L4, U4) = cycle_parts(A1, B1, A2, B2)
    I = np.eye(4)
    legs = ((L1 + L2 - I, U1 + U2), (L3 + L4 - I, U3 + U4))
    Lam, U = compose(legs)
    return CycleMap(Lam, U, legs)


def equilibrium(cmap: CycleMap, cond_max: float = 1e12) -> np.ndarray:
    """Fixed point of ``x -> Lam x + U``; raises ``LinAlgError`` if ``I - Lam`` is singular."""
    M = np.eye(4) - cmap.Lam
    if np.linalg.cond(M) > cond_max:
        raise np.linalg.LinAlgError("I - Lam is singular: no unique equilibrium")
    return np.linalg.solve(M, cmap.U)


def closed_form_eigenvalues(rho: float) -> np.ndarray:
    """Eigenvalues of the homogeneous sequential map in closed form.

    The radicand ``rho^3 (2 rho - 1)(2 rho^2 - 5 rho + 4)`` is negative for
    ``rho < 1/2``, giving a complex pair; each value has multiplicity two.
    """
    if rho == 1.0:
        raise ValueError("rho = 1 makes the cycle map singular")
    p = 2 * rho**4 - 6 * rho**3 + 7 * rho**2 - 2 * rho
    s = np.sqrt(complex(rho**3 * (2 * rho - 1) * (2 * rho**2 - 5 * rho + 4)))
    d = 2 * (rho - 1) ** 4
    lp, lm = (p + s) / d, (p - s) / d
    return np.array([lp, lp, lm, lm])


def _sort(z):
    z = np.asarray(z, dtype=complex)
    return z[np.lexsort((np.round(z.imag, 9), np.round(z.real, 9)))]


def eig_match_error(a, b) -> float:
    """Largest distance between two eigenvalue multisets under greedy nearest matching."""
    rest = list(np.asarray(b, dtype=complex))
    worst = 0.0
    for z in np.asarray(a, dtype=complex):
        k = int(np.argmin([abs(z - w) for w in rest]))
        worst = max(worst, abs(z - rest.pop(k)))
    return worst


def spectral_report(A1, B1, A2=None, B2=None, exact: bool = False) -> SpectralReport:
    A2 = A1 if A2 is None else A2
    B2 = B1 if B2 is None else B2
    cmap = (exact_cycle_map if exact else build_cycle_map)(A1, B1, A2, B2)
    eig = _sort(np.linalg.eigvals(cmap.Lam))
    homogeneous = A1 == A2 and B1 == B2
    rho = A1 / B1
    cf = _sort(closed_form_eigenvalues(rho)) if homogeneous and not exact else None
    try:
        eq = equilibrium(cmap)
    except np.linalg.LinAlgError:
        eq = None
    return SpectralReport(rho=rho, eigenvalues=eig, closed_form=cf,
                          max_norm=float(np.max(np.abs(eig))), equilibrium=eq)


def spectral_scan(rhos, exact: bool = False) -> list[SpectralReport]:
    """Homogeneous reports over a grid of ``rho = A / B`` (``B = 1``)."""
    return [spectral_report(float(r), 1.0, exact=exact) for r in rhos]


def critical_rho(lo: float = 0.05, hi: float = 0.95, tol: float = 1e-10) -> float:
    """Bisection for the ratio where the largest eigenvalue modulus reaches one."""
    f = lambda r: spectral_report(r, 1.0).max_norm - 1.0
    flo, fhi = f(lo), f(hi)
    if flo * fhi > 0:
        raise ValueError("no sign change of |lambda|_max - 1 on the bracket")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) * flo > 0:
            lo, flo = mid, f(mid)
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass
class CycleIteration:
    xs: np.ndarray               # (K + 1, 4), xs[0] = x0
    diverged: bool
    diverged_at: int | None = None


def converge_gradients(cmap: CycleMap, cycles: int, x0=None) -> CycleIteration:
    """Iterate the cycle map; divergence (norm above 1e6) is flagged, not raised."""
    x = np.zeros(4) if x0 is None else np.asarray(x0, dtype=float)
    xs = [x]
    for k in range(cycles):
        x = cmap.Lam @ x + cmap.U
        xs.append(x)
        if np.linalg.norm(x) > DIVERGENCE_NORM:
            return CycleIteration(np.array(xs), True, k + 1)
    return CycleIteration(np.array(xs), False)


def two_target_mission(A1, B1, A2, B2, horizon=200.0, distance=1.0, R0=(2.0, 3.0)):
    """One agent starting at target 1, two targets joined by one edge, zero thresholds."""
    targets = [TargetSpec(1, (0.0, 0.0), A1, B1, R0[0], False),
               TargetSpec(2, (distance, 0.0), A2, B2, R0[1], False)]
    return make_mission(horizon, targets, [(1, 2)], [AgentSpec(1, 1)], theta=0.0,
                        name="two-target")


def cycle_period(A1, B1, A2, B2, distance=1.0) -> float:
    """Steady cycle length with zero thresholds (infinite when the agent cannot keep up)."""
    r1, r2 = A1 / B1, A2 / B2
    if r1 + r2 >= 1:
        return np.inf
    return 2 * distance / (1 - r1 - r2)


def engine_cycle_gradients(spec, theta=None) -> np.ndarray:
    """Gradient vector ``x`` just before every departure from target 1.

    Read from the event engine through its departure hook, so the rows are
    the live IPA values at the cycle boundaries.
    """
    out = []

    def hook(a, i, j, dR):
        if i == 0:
            out.append([dR[0, 0, 0, 0], dR[0, 1, 1, 0], dR[1, 0, 0, 0], dR[1, 1, 1, 0]])

    grad_J(spec, theta, on_departure=hook)
    return np.array(out).reshape(-1, 4)


def along_event(xs, A1, B1, A2) -> np.ndarray:
    """Convert fixed-time boundary gradients to derivatives along the boundary event.

    At a departure from target 1 the event time moves by
    ``tau' = -(dR1/dth - e) / (A1 - B1)``; each target's state moves with it at
    its pre-departure rate (``A1 - B1`` at the occupied target, ``A2`` at the other).
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    rate = A1 - B1
    tp = np.stack([-(xs[:, 0] - 1.0) / rate, -xs[:, 1] / rate], axis=1)
    out = np.empty_like(xs)
    out[:, 0:2] = xs[:, 0:2] + rate * tp
    out[:, 2:4] = xs[:, 2:4] + A2 * tp
    return out


def engine_cycles(A1, B1, A2, B2, cycles: int, distance=1.0, R0=(2.0, 3.0)):
    """Run the engine long enough to observe ``cycles`` boundaries after the first.

    Returns the boundary gradients (first row is the initial zero vector) and the
    spec that produced them.
    """
    period = cycle_period(A1, B1, A2, B2, distance)
    horizon = (cycles + 3) * (period if np.isfinite(period) else 10 * distance) + sum(R0)
    for _ in range(20):
        spec = two_target_mission(A1, B1, A2, B2, horizon, distance, R0)
        xs = engine_cycle_gradients(spec)
        if len(xs) > cycles:
            return xs[:cycles + 1], spec
        horizon *= 2
    raise RuntimeError("could not observe the requested number of cycles")
