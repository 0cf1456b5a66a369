"""Gridded dynamic programming reference for small missions.

Time advances in steps of ``dt``; uncertainties live on a grid of spacing
``dr`` clipped to ``[0, rmax]``; a traveling agent is tracked by its
destination and remaining steps (travel times rounded up to whole steps).
The reachable state space is enumerated forward from the initial state with
time included in the state, then solved by synchronous value iteration.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np

from .hybrid_sim import control_decision
from .scenario import MissionSpec

log = logging.getLogger(__name__)


class DpBudgetError(MemoryError):
    def __init__(self, n_states, budget):
        super().__init__(f"reachable state count exceeds budget: more than {n_states} states "
                         f"(budget {budget})")
        self.n_states = n_states
        self.budget = budget


@dataclass(frozen=True)
class DpConfig:
    dt: float = 1.0
    dr: float = 1.0
    rmax: float | None = None
    max_states: int = 2_000_000

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.dr > 0:
            raise ValueError("dr must be positive")
        if self.rmax is not None and not self.rmax > 0:
            raise ValueError("rmax must be positive")


@dataclass
class DpResult:
    J: float                     # optimal discretized cost
    rollout: list                # list of RolloutStep
    n_states: int
    iterations: int
    J_continuous: float          # the same schedule replayed on continuous dynamics
    values_history: list | None = None   # per sweep, in grid cost units


@dataclass(frozen=True)
class RolloutStep:
    step: int
    time: float
    positions: tuple             # per agent: (node, remaining) 1-based node; remaining 0 = dwelling
    R: tuple
    action: tuple                # per agent: 0 dwell/continue, else 1-based destination


class Grid:
    """Discretized dynamics shared by value iteration and policy rollouts."""

    def __init__(self, spec: MissionSpec, cfg: DpConfig):
        self.spec = spec
        self.cfg = cfg
        steps = spec.horizon / cfg.dt
        self.H = int(round(steps))
        if self.H < 1 or abs(steps - self.H) > 1e-9 * max(1.0, steps):
            raise ValueError(f"horizon {spec.horizon} is not a whole number of steps of {cfg.dt}")
        rmax = cfg.rmax
        if rmax is None:
            rmax = float(np.max(spec.R0 + spec.A * spec.horizon))
        self.kmax = int(math.ceil(rmax / cfg.dr - 1e-9))
        self.M = spec.M
        self.N = spec.N
        self.wp = spec.waypoints.tolist()
        self.nbrs = spec.graph.neighbors
        self.steps_to = {}
        for i in range(self.M):
            for j in self.nbrs[i]:
                self.steps_to[i, j] = max(1, int(math.ceil(spec.graph.time(i + 1, j + 1) / cfg.dt - 1e-9)))
        # rate of each target per agent count, in grid units per step
        self.dA = (spec.A * cfg.dt / cfg.dr).tolist()
        self.dB = (spec.B * cfg.dt / cfg.dr).tolist()
        # costs are summed in grid units (exact integers) and scaled once at the end
        self.scale = cfg.dr * cfg.dt / spec.horizon

    def quantize(self, r: float) -> int:
        return min(max(int(round(r / self.cfg.dr)), 0), self.kmax)

    def initial(self):
        R = tuple(0 if self.wp[i] else self.quantize(float(self.spec.R0[i])) for i in range(self.M))
        pos = tuple((a.start_node - 1, 0) for a in self.spec.agents)
        return pos, R

    def units(self, R) -> int:
        """Step cost in grid units; multiply by ``scale`` for the cost contribution."""
        return sum(r for r, w in zip(R, self.wp) if not w)

    def actions(self, pos):
        """Joint actions: per agent 0 (dwell or keep traveling) or 1 + destination."""
        per = []
        for node, rem in pos:
            per.append((0,) if rem > 0 else (0,) + tuple(j + 1 for j in self.nbrs[node]))
        return itertools.product(*per)

    def step(self, pos, R, action):
        count = [0] * self.M
        new_pos = []
        for (node, rem), act in zip(pos, action):
            if rem > 0:
                new_pos.append((node, rem - 1))
            elif act == 0:
                count[node] += 1
                new_pos.append((node, 0))
            else:
                j = act - 1
                new_pos.append((j, self.steps_to[node, j] - 1))
        R_new = []
        for i in range(self.M):
            if self.wp[i]:
                R_new.append(0)
                continue
            r = R[i] + self.dA[i] - self.dB[i] * count[i]
            R_new.append(min(max(int(round(r)), 0), self.kmax))
        return tuple(new_pos), tuple(R_new), count


def _enumerate(grid: Grid):
    """Forward reachable states per time layer and the successor table."""
    budget = grid.cfg.max_states
    start = grid.initial()
    index = {(0,) + start: 0}
    states = [(0,) + start]
    succ_rows = []
    frontier = [start]
    for n in range(grid.H):
        nxt = {}
        for pos, R in frontier:
            row = []
            for act in grid.actions(pos):
                p2, R2, _ = grid.step(pos, R, act)
                key = (n + 1, p2, R2)
                k = index.get(key)
                if k is None:
                    k = len(states)
                    index[key] = k
                    states.append(key)
                    nxt[(p2, R2)] = None
                    if len(states) > budget:
                        raise DpBudgetError(len(states), budget)
                row.append(k)
            succ_rows.append(row)
        frontier = list(nxt)
    succ_rows.extend([] for _ in frontier)  # terminal layer
    width = max(len(r) for r in succ_rows)
    succ = np.full((len(states), max(width, 1)), -1, dtype=np.int64)
    for k, row in enumerate(succ_rows):
        succ[k, :len(row)] = row
    return states, index, succ


def value_iteration(spec: MissionSpec, cfg: DpConfig = DpConfig(), keep_history: bool = False) -> DpResult:
    """Optimal cost of the gridded mission by synchronous value iteration.

    Values start at infinity (zero on the terminal layer) and each sweep
    applies the Bellman backup to every state at once, so they only decrease;
    with time in the state the sweep count is at most ``H + 1``.
    """
    grid = Grid(spec, cfg)
    states, index, succ = _enumerate(grid)
    S = len(states)
    log.info("dp: %d reachable states over %d steps", S, grid.H)
    cost = np.array([grid.units(s[2]) for s in states], dtype=float)
    terminal = np.array([s[0] == grid.H for s in states])
    V = np.full(S, np.inf)
    V[terminal] = 0.0
    padded = np.append(V, np.inf)
    hist = [V.copy()] if keep_history else None
    iterations = 0
    while True:
        iterations += 1
        padded[:S] = V
        best = padded[succ].min(axis=1)
        V_new = np.where(terminal, 0.0, cost + best)
        if keep_history:
            hist.append(V_new.copy())
        if np.array_equal(V_new, V):
            break
        V = V_new
    padded[:S] = V
    rollout = _greedy_rollout(grid, states, index, succ, padded)
    return DpResult(J=float(V[0]) * grid.scale, rollout=rollout, n_states=S, iterations=iterations,
                    J_continuous=replay_continuous(spec, grid, rollout), values_history=hist)


def _greedy_rollout(grid, states, index, succ, padded):
    out = []
    k = 0
    while True:
        n, pos, R = states[k]
        if n == grid.H:
            break
        acts = list(grid.actions(pos))
        vals = padded[succ[k, :len(acts)]]
        a = int(np.argmin(vals))
        out.append(RolloutStep(step=n, time=n * grid.cfg.dt,
                               positions=tuple((p + 1, r) for p, r in pos), R=R,
                               action=acts[a]))
        k = int(succ[k, a])
    return out


def replay_continuous(spec: MissionSpec, grid: Grid, rollout) -> float:
    """Cost of the rollout's occupancy schedule under exact continuous dynamics."""
    R = np.where(spec.waypoints, 0.0, spec.R0).astype(float)
    dt = grid.cfg.dt
    area = 0.0
    for st in rollout:
        pos = [(p - 1, r) for p, r in st.positions]
        _, _, count = grid.step(pos, st.R, st.action)
        rate = spec.A - spec.B * np.asarray(count)
        for i in range(spec.M):
            if spec.waypoints[i]:
                continue
            area += _clipped_area(R[i], rate[i], dt)
            R[i] = max(R[i] + rate[i] * dt, 0.0)
    return area / spec.horizon


def _clipped_area(r0, rate, dt):
    if rate >= 0 or r0 + rate * dt >= 0:
        return (r0 + 0.5 * rate * dt) * dt
    t0 = r0 / -rate
    return 0.5 * r0 * t0


def threshold_rollout(spec: MissionSpec, theta, cfg: DpConfig = DpConfig()) -> float:
    """Cost of the threshold policy played on the gridded dynamics.

    The policy sees grid uncertainties ``k * dr``; a dwelling agent it would
    send away departs at once, matching the continuous controller.
    """
    grid = Grid(spec, cfg)
    theta = np.asarray(theta, dtype=float)
    pos, R = grid.initial()
    total = 0
    for n in range(grid.H):
        total += grid.units(R)
        Rv = [r * cfg.dr for r in R]
        act = []
        for a, (node, rem) in enumerate(pos):
            if rem > 0:
                act.append(0)
                continue
            j = control_decision(Rv, theta, a, node, grid.nbrs[node])
            act.append(0 if j is None else j + 1)
        pos, R, _ = grid.step(pos, R, tuple(act))
    return total * grid.scale
