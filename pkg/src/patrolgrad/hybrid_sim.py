"""Exact event-driven simulation of the threshold-controlled patrol system.

Target uncertainties are piecewise linear between events, so every guard
crossing is found in closed form and the cost integral is accumulated exactly.

Processing order at an event instant (times within ``TIME_TOL`` are merged):

1. guard events detected for the instant (Event1, Event2, Event3 candidates,
   arrivals) are logged in the order Event1, Event2, ARR; within a kind by
   target id, then agent id;
2. arrivals join their node;
3. every dwelling agent re-evaluates the threshold policy and departs if told
   to (DEP records);
4. targets sitting at zero are settled last: a target whose rate after the
   instant cannot be positive enters its zero mode (Event3), a zero-mode
   target left with too few agents starts growing again (Event4).

Settling zero states after departures matters when a diagonal threshold is 0:
an agent that empties its node and leaves at the same instant never lets the
target rest at zero, so no Event3 reset happens.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .scenario import MissionSpec, validate_thresholds

log = logging.getLogger(__name__)

TIME_TOL = 1e-12

EVENT_KINDS = ("Event1", "Event2", "Event3", "Event4", "DEP1", "DEP2", "DEP3_1", "DEP3_2",
               "ARR1", "ARR2", "Horizon")


@dataclass(frozen=True, slots=True)
class EventRecord:
    """One logged event.  ``agent``, ``target`` and ``aux`` are 1-based ids (0 = none)."""

    time: float
    kind: str
    agent: int = 0
    target: int = 0
    aux: int = 0
    R_after: float = float("nan")


@dataclass
class AgentState:
    node: int                    # current node, or origin while traveling (0-based)
    dest: int = -1               # destination while traveling
    depart_time: float = 0.0
    arrival_time: float = np.inf
    dep_kind: str = ""           # kind of the departure that started the current trip

    @property
    def traveling(self) -> bool:
        return self.dest >= 0


@dataclass
class SimState:
    """Hybrid state: uncertainties, zero modes, dwelling counts, agent modes and clock."""

    t: float
    R: list
    zero: list
    count: list
    agents: list
    A: list
    B: list
    waypoint: list

    @classmethod
    def initial(cls, spec: MissionSpec) -> "SimState":
        M = spec.M
        A = spec.A.tolist()
        B = spec.B.tolist()
        wp = spec.waypoints.tolist()
        R = [0.0 if wp[i] else float(spec.R0[i]) for i in range(M)]
        count = [0] * M
        agents = []
        for a in spec.agents:
            agents.append(AgentState(node=a.start_node - 1))
            count[a.start_node - 1] += 1
        zero = [wp[i] or (R[i] == 0.0 and A[i] <= B[i] * count[i]) for i in range(M)]
        return cls(t=0.0, R=R, zero=zero, count=count, agents=agents, A=A, B=B, waypoint=wp)

    def rate(self, i: int) -> float:
        if self.zero[i]:
            return 0.0
        return self.A[i] - self.B[i] * self.count[i]

    def rates(self) -> list:
        return [self.rate(i) for i in range(len(self.R))]


@dataclass
class SimResult:
    J: float
    events: list
    trajectories: list           # per target: list of (t0, t1, R0, R1)
    sequences: list              # per agent: 1-based node ids where it dwelled
    horizon: float
    final_state: SimState | None = None
    flags: list = field(default_factory=list)    # diagnostic notes, e.g. simultaneous arrivals

    def kinds(self) -> list:
        return [(e.kind, e.agent, e.target, e.aux) for e in self.events]


def control_decision(R, theta: np.ndarray, a: int, i: int, neighbors) -> int | None:
    """Threshold policy for agent ``a`` dwelling at node ``i`` (0-based).

    Returns the 0-based destination, or ``None`` to stay.
    """
    if R[i] > theta[i, i, a]:
        return None
    for j in neighbors:
        if R[j] >= theta[i, j, a]:
            return j
    return None


def next_event(state: SimState, theta: np.ndarray, spec: MissionSpec):
    """Earliest upcoming event time and the records of every event due then.

    Returns ``(time, records)``; when nothing can happen before the horizon
    the single record is ``Horizon``.
    """
    T = spec.horizon
    t = state.t
    R = state.R
    rates = state.rates()
    neighbors = spec.graph.neighbors
    cands = []
    for i, r in enumerate(rates):
        if r < 0.0 and R[i] > 0.0:
            cands.append((t + R[i] / -r, 2, i, 0, 0))
    for a, ag in enumerate(state.agents):
        if ag.traveling:
            cands.append((ag.arrival_time, 3, ag.dest, a, ag.node))
            continue
        i = ag.node
        th = theta[i, i, a]
        if R[i] > th and rates[i] < 0.0:
            cands.append((t + (R[i] - th) / -rates[i], 0, i, a, 0))
        for j in neighbors[i]:
            th = theta[i, j, a]
            if R[j] < th and rates[j] > 0.0:
                cands.append((t + (th - R[j]) / rates[j], 1, j, a, i))
    if not cands:
        return T, [EventRecord(T, "Horizon")]
    t_min = min(c[0] for c in cands)
    if t_min >= T - TIME_TOL:
        return T, [EventRecord(T, "Horizon")]
    due = sorted((c for c in cands if c[0] <= t_min + TIME_TOL), key=lambda c: c[1:])
    names = ("Event1", "Event2", "Event3", "ARR")
    records = []
    for _, k, tgt, a, aux in due:
        if k == 0:
            records.append(EventRecord(t_min, "Event1", a + 1, tgt + 1))
        elif k == 1:
            records.append(EventRecord(t_min, "Event2", a + 1, aux + 1, tgt + 1))
        elif k == 2:
            records.append(EventRecord(t_min, "Event3", 0, tgt + 1))
        else:
            records.append(EventRecord(t_min, names[k], a + 1, tgt + 1, aux + 1))
    return t_min, records


class Simulation:
    """One run of the hybrid system under a fixed threshold array.

    ``tracker`` receives the hooks used by the gradient engine; it is ``None``
    for a plain cost evaluation.
    """

    def __init__(self, spec: MissionSpec, theta, tracker=None, record: bool = True):
        self.spec = spec
        self.theta = validate_thresholds(spec.graph, theta, spec.N)
        self.tracker = tracker
        self.record = record
        self.state = SimState.initial(spec)
        self.events: list[EventRecord] = []
        self.traj = [[] for _ in range(spec.M)]
        self.sequences = [[a.start_node] for a in spec.agents]
        self.area = 0.0
        self.flags = []
        self.max_events = 10_000_000

    def _log(self, kind, agent=0, target=0, aux=0):
        R = self.state.R[target - 1] if target else float("nan")
        self.events.append(EventRecord(self.state.t, kind, agent, target, aux, R))

    def _advance(self, t_new: float):
        st = self.state
        dt = t_new - st.t
        if dt > 0.0:
            for i in range(len(st.R)):
                r = st.rate(i)
                r0 = st.R[i]
                r1 = r0 + r * dt
                if r1 < 0.0:
                    r1 = 0.0
                if not st.waypoint[i]:
                    self.area += 0.5 * (r0 + r1) * dt
                if self.record:
                    self.traj[i].append((st.t, t_new, r0, r1))
                st.R[i] = r1
            if self.tracker is not None:
                self.tracker.accumulate(dt)
        st.t = t_new

    def run(self) -> SimResult:
        spec = self.spec
        st = self.state
        theta = self.theta
        self._instant([])
        n = 0
        while True:
            t_ev, records = next_event(st, theta, spec)
            if records[0].kind == "Horizon":
                self._advance(spec.horizon)
                self._log("Horizon")
                break
            self._advance(t_ev)
            self._instant(records)
            n += 1
            if n > self.max_events:
                raise RuntimeError(f"event budget exceeded at t={st.t}")
        if self.record:
            for i, segs in enumerate(self.traj):
                self.traj[i] = _merge_segments(segs)
        return SimResult(J=self.area / spec.horizon, events=self.events, trajectories=self.traj,
                         sequences=self.sequences, horizon=spec.horizon, final_state=st,
                         flags=self.flags)

    def _instant(self, records):
        st = self.state
        theta = self.theta
        spec = self.spec
        tr = self.tracker
        rates_before = st.rates()

        # snap guard values so that thresholds and zeros are hit exactly
        for ev in records:
            if ev.kind == "Event1":
                st.R[ev.target - 1] = float(theta[ev.target - 1, ev.target - 1, ev.agent - 1])
            elif ev.kind == "Event2":
                st.R[ev.aux - 1] = float(theta[ev.target - 1, ev.aux - 1, ev.agent - 1])
            elif ev.kind == "Event3":
                st.R[ev.target - 1] = 0.0

        fired1 = {}
        fired2 = {}
        for ev in records:
            a = ev.agent - 1
            if ev.kind == "Event1":
                i = ev.target - 1
                self._log("Event1", ev.agent, ev.target)
                fired1[a] = tr.event_time_derivative(i, (i, i, a), rates_before[i]) if tr else None
            elif ev.kind == "Event2":
                i, j = ev.target - 1, ev.aux - 1
                self._log("Event2", ev.agent, ev.target, ev.aux)
                fired2.setdefault(a, {})[j] = (
                    tr.event_time_derivative(j, (i, j, a), rates_before[j]) if tr else None)

        arrivals = [ev.target for ev in records if ev.kind == "ARR"]
        for tgt in sorted({x for x in arrivals if arrivals.count(x) > 1}):
            note = f"t={st.t!r}: simultaneous arrivals at target {tgt}, processed in agent order"
            self.flags.append(note)
            log.debug(note)

        arrived = set()
        for ev in records:
            if ev.kind != "ARR":
                continue
            a = ev.agent - 1
            ag = st.agents[a]
            j = ag.dest
            kind = "ARR1" if ag.dep_kind == "DEP1" else "ARR2"
            st.count[j] += 1
            ag.node, ag.dest, ag.arrival_time = j, -1, np.inf
            arrived.add(a)
            self.sequences[a].append(j + 1)
            if tr:
                tr.arrival(a, j, st.zero[j])
            self._log(kind, a + 1, j + 1, ev.aux)

        neighbors = spec.graph.neighbors
        for a, ag in enumerate(st.agents):
            if ag.traveling:
                continue
            i = ag.node
            j = control_decision(st.R, theta, a, i, neighbors[i])
            if j is None:
                continue
            if a in fired1:
                kind, tau = "DEP1", fired1[a]
            else:
                if a in fired2 and j in fired2[a]:
                    tau = fired2[a][j]
                elif a in arrived:
                    tau = tr.pending_of(a) if tr else None
                else:
                    tau = tr.zeros() if tr else None
                if st.zero[i]:
                    grows = not st.waypoint[i] and st.A[i] > st.B[i] * (st.count[i] - 1)
                    kind = "DEP3_1" if grows else "DEP3_2"
                else:
                    kind = "DEP2"
            st.count[i] -= 1
            if st.zero[i] and not st.waypoint[i] and st.A[i] > st.B[i] * st.count[i]:
                st.zero[i] = False
            if tr:
                tr.departure(a, i, j, tau, kind, st.count[i])
            ag.dest = j
            ag.depart_time = st.t
            ag.arrival_time = st.t + spec.graph.time(i + 1, j + 1)
            ag.dep_kind = kind
            self._log(kind, a + 1, i + 1, j + 1)
            if kind == "DEP3_1":
                self._log("Event4", 0, i + 1)

        for i in range(len(st.R)):
            if st.waypoint[i] or st.zero[i]:
                continue
            if st.R[i] <= 0.0 and st.A[i] <= st.B[i] * st.count[i]:
                st.R[i] = 0.0
                st.zero[i] = True
                if tr:
                    tr.reset(i)
                self._log("Event3", 0, i + 1)


def _merge_segments(segs):
    """Join consecutive collinear pieces of one target's trajectory."""
    out = []
    for s in segs:
        if out:
            t0, t1, r0, r1 = out[-1]
            if t1 == s[0] and r1 == s[2]:
                slope_prev = (r1 - r0) / (t1 - t0)
                slope = (s[3] - s[2]) / (s[1] - s[0])
                if abs(slope - slope_prev) <= 1e-12 * max(1.0, abs(slope)):
                    out[-1] = (t0, s[1], r0, s[3])
                    continue
        out.append(s)
    return out


def simulate(spec: MissionSpec, theta=None, record: bool = True) -> SimResult:
    """Simulate ``spec`` under thresholds ``theta`` (defaults to ``spec.theta0``)."""
    if theta is None:
        theta = spec.theta0
    return Simulation(spec, theta, record=record).run()


def visiting_sequence(result: SimResult, agent: int) -> list[int]:
    """Nodes (1-based) where ``agent`` (1-based) dwelled, in visiting order."""
    return list(result.sequences[agent - 1])
