"""Infinitesimal perturbation analysis of the patrol cost.

Every derivative lives on the threshold grid ``(p, q, z)``: a gradient row of
target ``i`` is an ``(M, M, N)`` array holding ``dR_i / dtheta[p, q, z]``.
Between events those rows are constant, so the cost gradient is a sum of
rectangle areas, and all the work happens in the per-event jump rules below.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hybrid_sim import Simulation, SimResult
from .scenario import MissionSpec

GUARD_TOL = 1e-9


class SingularGuardError(ArithmeticError):
    """An endogenous event was hit with (numerically) zero guard speed."""

    def __init__(self, message, time=None, target=None):
        super().__init__(message)
        self.time = time
        self.target = target


def _unit(shape, entry):
    e = np.zeros(shape)
    e[entry] = 1.0
    return e


def _check_rate(rate, what):
    if abs(rate) < GUARD_TOL:
        raise SingularGuardError(f"{what}: guard speed {rate!r} is too close to zero")


def on_event1(dR_i: np.ndarray, entry, rate: float) -> np.ndarray:
    """Event-time derivative when ``R_i`` falls to the agent's own threshold.

    ``entry`` is the ``(i, i, a)`` index of that threshold and ``rate`` the
    slope ``A_i - B_i N_i`` just before the event.
    """
    _check_rate(rate, "Event1")
    return -(dR_i - _unit(dR_i.shape, entry)) / rate


def on_event2(dR_j: np.ndarray, entry, rate: float) -> np.ndarray:
    """Event-time derivative when neighbor ``R_j`` climbs to ``theta[i, j, a]``."""
    _check_rate(rate, "Event2")
    return -(dR_j - _unit(dR_j.shape, entry)) / rate


def on_dep1(dR_i: np.ndarray, tau: np.ndarray, B_i: float) -> np.ndarray:
    """Row of the node left after an Event1-induced departure.

    Equivalent to ``(A-B(N-1))/(A-BN) dR - [entry] B/(A-BN)`` with ``tau``
    from :func:`on_event1`.
    """
    return dR_i - B_i * tau


def on_dep2(dR_i: np.ndarray, tau: np.ndarray, B_i: float) -> np.ndarray:
    """Row of the node left after an Event2-induced departure with ``R_i > 0``.

    The jump is ``-B_i tau`` where ``tau`` carries the neighbor row ``dR_j``.
    """
    return dR_i - B_i * tau


def on_dep3(tau: np.ndarray, A_i: float, B_i: float, n_after: int) -> np.ndarray:
    """Row of a node left while its uncertainty rests at zero.

    If the remaining agents cannot hold it at zero the target starts growing
    at ``A_i - B_i n_after`` and inherits ``-(A_i - B_i n_after) tau``;
    otherwise it stays at zero with a zero row.
    """
    growth = A_i - B_i * n_after
    if growth > 0:
        return -growth * tau
    return np.zeros_like(tau)


def on_arr(dR_j: np.ndarray, tau: np.ndarray, B_j: float) -> np.ndarray:
    """Row of the node reached by an agent carrying event-time derivative ``tau``."""
    return dR_j + B_j * tau


def on_event3(dR_i: np.ndarray) -> np.ndarray:
    """Reset of a row when its target reaches zero and stays there."""
    return np.zeros_like(dR_i)


def accumulate(gradJ: np.ndarray, dR: np.ndarray, dt: float, horizon: float) -> np.ndarray:
    """Add the contribution of one inter-event interval of length ``dt``."""
    gradJ += dR.sum(axis=0) * (dt / horizon)
    return gradJ


class GradientTracker:
    """Gradient state co-evolving with a :class:`~patrolgrad.hybrid_sim.Simulation`."""

    def __init__(self, spec: MissionSpec, trace: bool = False, on_departure=None):
        M, N = spec.M, spec.N
        self.shape = (M, M, N)
        self.horizon = spec.horizon
        self.A = spec.A.tolist()
        self.B = spec.B.tolist()
        self.dR = np.zeros((M, M, M, N))
        self.gradJ = np.zeros((M, M, N))
        self._row_sum = np.zeros((M, M, N))
        self._dirty = False
        self.pending = [None] * N
        self.trace = [] if trace else None
        self.on_departure = on_departure
        self.sim = None

    def zeros(self):
        return np.zeros(self.shape)

    def _set_row(self, i, row):
        self.dR[i] = row
        self._dirty = True
        if self.trace is not None:
            self._trace_row(i)

    def _trace_row(self, i):
        t = self.sim.state.t if self.sim else float("nan")
        k = len(self.sim.events) if self.sim else -1
        nz = np.argwhere(self.dR[i] != 0.0)
        if len(nz) == 0:
            self.trace.append((k, t, i + 1, 0, 0, 0, 0.0))
        for p, q, z in nz:
            self.trace.append((k, t, i + 1, p + 1, q + 1, z + 1, float(self.dR[i, p, q, z])))

    def accumulate(self, dt):
        if self._dirty:
            self._row_sum = self.dR.sum(axis=0)
            self._dirty = False
        self.gradJ += self._row_sum * (dt / self.horizon)

    def event_time_derivative(self, i, entry, rate):
        try:
            return on_event1(self.dR[i], entry, rate) if entry[0] == entry[1] \
                else on_event2(self.dR[i], entry, rate)
        except SingularGuardError as err:
            t = self.sim.state.t if self.sim else None
            raise SingularGuardError(f"{err} at target {i + 1}, t={t}", time=t, target=i + 1) from None

    def pending_of(self, a):
        tau = self.pending[a]
        if tau is None:
            raise RuntimeError(f"agent {a + 1} has no event-time derivative to carry")
        return tau

    def arrival(self, a, j, zero_mode):
        tau = self.pending_of(a)
        if not zero_mode:
            self._set_row(j, on_arr(self.dR[j], tau, self.B[j]))

    def departure(self, a, i, j, tau, kind, n_after):
        if self.on_departure is not None:
            self.on_departure(a, i, j, self.dR)
        if kind == "DEP3_1":
            self._set_row(i, on_dep3(tau, self.A[i], self.B[i], n_after))
        elif kind == "DEP3_2":
            # node stays at zero (enough agents remain, or it is a way point)
            if self.dR[i].any():
                self._set_row(i, np.zeros(self.shape))
        elif kind == "DEP1":
            self._set_row(i, on_dep1(self.dR[i], tau, self.B[i]))
        else:
            self._set_row(i, on_dep2(self.dR[i], tau, self.B[i]))
        self.pending[a] = tau

    def reset(self, i):
        if self.dR[i].any():
            self._set_row(i, on_event3(self.dR[i]))


@dataclass
class GradResult:
    grad: np.ndarray             # dJ/dtheta, shape (M, M, N); zero on non-edges
    J: float
    sim: SimResult
    trace: list | None = None


def _check_frozen(sim: Simulation):
    # a dwelling agent above its own threshold on a target with zero net rate
    # never reaches the guard: the perturbation calculus is undefined there
    st = sim.state
    for a, ag in enumerate(st.agents):
        if ag.traveling:
            continue
        i = ag.node
        if (not st.zero[i] and st.R[i] > sim.theta[i, i, a]
                and abs(st.rate(i)) < GUARD_TOL):
            raise SingularGuardError(
                f"agent {a + 1} holds target {i + 1} at a frozen level R={st.R[i]:.6g} "
                f"above its threshold (A - B N = 0)", time=st.t, target=i + 1)


class _GradSimulation(Simulation):
    def _instant(self, records):
        super()._instant(records)
        _check_frozen(self)


def grad_J(spec: MissionSpec, theta=None, trace: bool = False, record: bool = False,
           on_departure=None) -> GradResult:
    """Cost and its IPA gradient with respect to every threshold entry."""
    if theta is None:
        theta = spec.theta0
    tracker = GradientTracker(spec, trace=trace, on_departure=on_departure)
    sim = _GradSimulation(spec, theta, tracker=tracker, record=record)
    tracker.sim = sim
    res = sim.run()
    grad = tracker.gradJ.copy()
    grad[~np.isfinite(sim.theta)] = 0.0
    return GradResult(grad=grad, J=res.J, sim=res, trace=tracker.trace)
