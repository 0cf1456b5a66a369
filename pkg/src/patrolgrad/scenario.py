"""Mission descriptions: targets, graph topology, agents and threshold matrices.

A mission is read from a small sectioned text format::

    [mission]
    horizon = 100

    [targets]
    # id  x  y  A  B  R0  waypoint
    1  0  0  1  20  19  0
    2  4  0  1  20  14  0

    [edges]
    # i  j  [travel_time]
    1  2

    [agents]
    # id  start_node
    1  1

    [thresholds]
    init = 5.0

The ``[thresholds]`` section either holds ``init = <scalar>`` (applied to every
finite entry) or one block per agent, introduced by ``agent = <id>`` and
followed by ``M`` rows of ``M`` numbers with ``inf`` on non-edges.

Node and agent ids are 1-based in files, in neighborhoods and in visiting
sequences.  Arrays (``A``, ``B``, ``R0``, threshold matrices) are indexed from 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np


class ScenarioError(ValueError):
    """Raised for unparsable or invalid mission documents."""


@dataclass(frozen=True)
class TargetSpec:
    id: int
    position: tuple[float, float]
    A: float
    B: float
    R0: float
    is_waypoint: bool = False


@dataclass(frozen=True)
class AgentSpec:
    id: int
    start_node: int


@dataclass(frozen=True)
class Graph:
    """Undirected graph over nodes ``1..M`` with fixed travel times.

    ``neighbors[i]`` holds the 0-based indices of the neighbors of node ``i+1``
    ordered by distance, ties broken by ascending id.
    """

    M: int
    edges: frozenset
    travel_time: dict = field(compare=True)
    overrides: frozenset = frozenset()
    neighbors: tuple = ()

    def degree(self, node: int) -> int:
        return len(self.neighbors[node - 1])

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.edges

    def time(self, i: int, j: int) -> float:
        return self.travel_time[(min(i, j), max(i, j))]


@dataclass(frozen=True, eq=False)
class MissionSpec:
    horizon: float
    targets: tuple
    agents: tuple
    graph: Graph
    theta0: np.ndarray
    name: str = ""

    @property
    def M(self) -> int:
        return len(self.targets)

    @property
    def N(self) -> int:
        return len(self.agents)

    @property
    def A(self) -> np.ndarray:
        return np.array([t.A for t in self.targets], dtype=float)

    @property
    def B(self) -> np.ndarray:
        return np.array([t.B for t in self.targets], dtype=float)

    @property
    def R0(self) -> np.ndarray:
        return np.array([t.R0 for t in self.targets], dtype=float)

    @property
    def waypoints(self) -> np.ndarray:
        return np.array([t.is_waypoint for t in self.targets], dtype=bool)

    @property
    def positions(self) -> np.ndarray:
        return np.array([t.position for t in self.targets], dtype=float)

    def finite_mask(self) -> np.ndarray:
        """Boolean ``(M, M, N)`` mask of the entries that are real parameters."""
        return edge_mask(self.graph)[:, :, None].repeat(self.N, axis=2)

    def replace(self, **changes) -> "MissionSpec":
        fields = dict(horizon=self.horizon, targets=self.targets, agents=self.agents,
                      graph=self.graph, theta0=self.theta0, name=self.name)
        fields.update(changes)
        return MissionSpec(**fields)

    def __eq__(self, other):
        if not isinstance(other, MissionSpec):
            return NotImplemented
        return (self.horizon == other.horizon and self.targets == other.targets
                and self.agents == other.agents and self.graph == other.graph
                and self.theta0.shape == other.theta0.shape
                and np.array_equal(self.theta0, other.theta0))

    __hash__ = None


def edge_mask(graph: Graph) -> np.ndarray:
    """``(M, M)`` mask, True on the diagonal and on every edge."""
    mask = np.eye(graph.M, dtype=bool)
    for i, j in graph.edges:
        mask[i - 1, j - 1] = mask[j - 1, i - 1] = True
    return mask


def build_graph(positions, edges, overrides=None) -> Graph:
    """Assemble a :class:`Graph` from node positions and 1-based edge pairs.

    ``overrides`` maps an edge to an explicit travel time; all other edges use
    the Euclidean distance between their endpoints (agents move at unit speed).
    """
    positions = np.asarray(positions, dtype=float)
    M = len(positions)
    overrides = {(min(i, j), max(i, j)): float(v) for (i, j), v in (overrides or {}).items()}
    edge_set = set()
    for i, j in edges:
        if i == j:
            raise ScenarioError(f"self-loop on node {i}")
        for n in (i, j):
            if not 1 <= n <= M:
                raise ScenarioError(f"edge ({i}, {j}) references unknown node {n}")
        edge_set.add((min(i, j), max(i, j)))
    for e in overrides:
        if e not in edge_set:
            raise ScenarioError(f"travel time given for non-edge {e}")

    travel = {}
    for i, j in sorted(edge_set):
        if (i, j) in overrides:
            tt = overrides[(i, j)]
        else:
            tt = float(np.hypot(*(positions[i - 1] - positions[j - 1])))
        if not tt > 0:
            raise ScenarioError(f"travel time of edge ({i}, {j}) must be positive, got {tt}")
        travel[(i, j)] = tt

    neighbors = []
    for i in range(1, M + 1):
        nbrs = [j for j in range(1, M + 1) if (min(i, j), max(i, j)) in edge_set]
        dist = {j: float(np.hypot(*(positions[j - 1] - positions[i - 1]))) for j in nbrs}
        nbrs.sort(key=lambda j: (dist[j], j))
        neighbors.append(tuple(j - 1 for j in nbrs))

    graph = Graph(M=M, edges=frozenset(edge_set), travel_time=travel,
                  overrides=frozenset(overrides), neighbors=tuple(neighbors))
    if M > 1 and not _connected(graph):
        raise ScenarioError("graph is not connected")
    return graph


def _connected(graph: Graph) -> bool:
    seen = {0}
    stack = [0]
    while stack:
        i = stack.pop()
        for j in graph.neighbors[i]:
            if j not in seen:
                seen.add(j)
                stack.append(j)
    return len(seen) == graph.M


def ordered_neighborhood(spec: MissionSpec, node: int) -> list[int]:
    """Neighbors of ``node`` (1-based) sorted by distance, ties by id."""
    if not 1 <= node <= spec.M:
        raise ScenarioError(f"node {node} out of range 1..{spec.M}")
    return [j + 1 for j in spec.graph.neighbors[node - 1]]


def uniform_thresholds(graph: Graph, n_agents: int, value: float) -> np.ndarray:
    """Threshold array with ``value`` on every finite entry and ``inf`` elsewhere."""
    theta = np.where(edge_mask(graph), float(value), np.inf)
    return np.repeat(theta[:, :, None], n_agents, axis=2)


def validate_thresholds(graph: Graph, theta: np.ndarray, n_agents: int) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (graph.M, graph.M, n_agents):
        raise ScenarioError(f"threshold array has shape {theta.shape}, "
                            f"expected {(graph.M, graph.M, n_agents)}")
    mask = edge_mask(graph)
    for z in range(n_agents):
        for p in range(graph.M):
            for q in range(graph.M):
                v = theta[p, q, z]
                if mask[p, q]:
                    if not (math.isfinite(v) and v >= 0):
                        raise ScenarioError(f"threshold ({p + 1},{q + 1}) of agent {z + 1} "
                                            f"must be finite and >= 0, got {v}")
                elif v != np.inf:
                    raise ScenarioError(f"threshold ({p + 1},{q + 1}) of agent {z + 1} "
                                        f"is finite but ({p + 1},{q + 1}) is not an edge")
    return theta


def make_mission(horizon, targets, edges, agents, theta=5.0, overrides=None, name="") -> MissionSpec:
    """Validate and assemble a :class:`MissionSpec`.

    ``targets`` is a sequence of :class:`TargetSpec`, ``agents`` of
    :class:`AgentSpec`; ``theta`` is a scalar or an ``(M, M, N)`` array.
    """
    horizon = float(horizon)
    if not horizon > 0:
        raise ScenarioError(f"horizon must be positive, got {horizon}")
    targets = tuple(targets)
    agents = tuple(agents)
    M = len(targets)
    if M == 0:
        raise ScenarioError("mission needs at least one target")
    for k, t in enumerate(targets, start=1):
        if t.id != k:
            raise ScenarioError(f"target ids must be 1..M in order, got {t.id} at row {k}")
        if not (t.A > 0 and t.B > 0):
            raise ScenarioError(f"target {t.id}: rates must be positive (A={t.A}, B={t.B})")
        if t.R0 < 0:
            raise ScenarioError(f"target {t.id}: R0 must be >= 0, got {t.R0}")
        if t.is_waypoint and t.R0 != 0:
            raise ScenarioError(f"way point {t.id} must have R0 = 0")
    for k, a in enumerate(agents, start=1):
        if a.id != k:
            raise ScenarioError(f"agent ids must be 1..N in order, got {a.id} at row {k}")
        if not 1 <= a.start_node <= M:
            raise ScenarioError(f"agent {a.id}: start node {a.start_node} out of range 1..{M}")
    graph = build_graph([t.position for t in targets], edges, overrides)
    if np.ndim(theta) == 0:
        theta = uniform_thresholds(graph, len(agents), float(theta))
    theta = validate_thresholds(graph, theta, len(agents))
    return MissionSpec(horizon=horizon, targets=targets, agents=agents, graph=graph,
                       theta0=theta, name=name)


# -- text format -------------------------------------------------------------

_SECTIONS = ("mission", "targets", "edges", "agents", "thresholds")


def _num(tok: str, lineno: int, what: str) -> float:
    try:
        return float(tok)
    except ValueError:
        raise ScenarioError(f"line {lineno}: cannot read {what} from {tok!r}") from None


def _int(tok: str, lineno: int, what: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise ScenarioError(f"line {lineno}: cannot read {what} from {tok!r}") from None


def load_scenario(text: str, name: str = "") -> MissionSpec:
    """Parse and validate a mission document."""
    sections: dict[str, list[tuple[int, str]]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ScenarioError(f"line {lineno}: malformed section header {line!r}")
            current = line[1:-1].strip().lower()
            if current not in _SECTIONS:
                raise ScenarioError(f"line {lineno}: unknown section [{current}]")
            if current in sections:
                raise ScenarioError(f"line {lineno}: duplicate section [{current}]")
            sections[current] = []
            continue
        if current is None:
            raise ScenarioError(f"line {lineno}: content before the first section")
        sections[current].append((lineno, line))

    for sec in ("mission", "targets", "agents"):
        if sec not in sections:
            raise ScenarioError(f"missing section [{sec}]")

    horizon = None
    for lineno, line in sections["mission"]:
        key, sep, value = line.partition("=")
        if not sep:
            raise ScenarioError(f"line {lineno}: expected key = value in [mission]")
        key = key.strip().lower()
        if key == "horizon":
            horizon = _num(value.strip(), lineno, "horizon")
        elif key == "name":
            name = name or value.strip()
        else:
            raise ScenarioError(f"line {lineno}: unknown key {key!r} in [mission]")
    if horizon is None:
        raise ScenarioError("key 'horizon' missing from [mission]")

    targets = []
    for lineno, line in sections["targets"]:
        tok = line.split()
        if len(tok) not in (6, 7):
            raise ScenarioError(f"line {lineno}: target rows are 'id x y A B R0 [waypoint]'")
        wp = bool(_int(tok[6], lineno, "waypoint flag")) if len(tok) == 7 else False
        targets.append(TargetSpec(
            id=_int(tok[0], lineno, "target id"),
            position=(_num(tok[1], lineno, "x"), _num(tok[2], lineno, "y")),
            A=_num(tok[3], lineno, "A"), B=_num(tok[4], lineno, "B"),
            R0=_num(tok[5], lineno, "R0"), is_waypoint=wp))
    M = len(targets)

    edges, overrides = [], {}
    for lineno, line in sections.get("edges", []):
        tok = line.split()
        if len(tok) not in (2, 3):
            raise ScenarioError(f"line {lineno}: edge rows are 'i j [travel_time]'")
        i, j = _int(tok[0], lineno, "edge end"), _int(tok[1], lineno, "edge end")
        edges.append((i, j))
        if len(tok) == 3:
            overrides[(i, j)] = _num(tok[2], lineno, "travel time")

    agents = []
    for lineno, line in sections["agents"]:
        tok = line.split()
        if len(tok) != 2:
            raise ScenarioError(f"line {lineno}: agent rows are 'id start_node'")
        agents.append(AgentSpec(id=_int(tok[0], lineno, "agent id"),
                                start_node=_int(tok[1], lineno, "start node")))
    N = len(agents)

    theta = 5.0
    rows = sections.get("thresholds", [])
    if rows:
        theta = _parse_thresholds(rows, M, N)
    return make_mission(horizon, targets, edges, agents, theta, overrides, name=name)


def _parse_thresholds(rows, M, N):
    first_line, first = rows[0]
    key, sep, value = first.partition("=")
    if sep and key.strip().lower() == "init":
        if len(rows) > 1:
            raise ScenarioError(f"line {rows[1][0]}: 'init' must be the only entry in [thresholds]")
        return _num(value.strip(), first_line, "init")

    theta = np.full((M, M, N), np.nan)
    seen = set()
    k = 0
    while k < len(rows):
        lineno, line = rows[k]
        key, sep, value = line.partition("=")
        if not sep or key.strip().lower() != "agent":
            raise ScenarioError(f"line {lineno}: expected 'agent = <id>' or 'init = <value>'")
        z = _int(value.strip(), lineno, "agent id")
        if not 1 <= z <= N:
            raise ScenarioError(f"line {lineno}: agent {z} out of range 1..{N}")
        if z in seen:
            raise ScenarioError(f"line {lineno}: thresholds for agent {z} given twice")
        seen.add(z)
        block = rows[k + 1:k + 1 + M]
        if len(block) < M:
            raise ScenarioError(f"line {lineno}: agent {z} needs {M} threshold rows")
        for p, (ln, row) in enumerate(block):
            tok = row.split()
            if len(tok) != M or "=" in row:
                raise ScenarioError(f"line {ln}: threshold row needs {M} values")
            theta[p, :, z - 1] = [_num(t, ln, "threshold") for t in tok]
        k += 1 + M
    if len(seen) != N:
        missing = sorted(set(range(1, N + 1)) - seen)
        raise ScenarioError(f"thresholds missing for agents {missing}")
    return theta


def _fmt(x: float) -> str:
    if x == np.inf:
        return "inf"
    return repr(float(x))


def dump_scenario(spec: MissionSpec) -> str:
    """Serialize ``spec`` so that :func:`load_scenario` reproduces it exactly."""
    out = ["[mission]", f"horizon = {_fmt(spec.horizon)}"]
    if spec.name:
        out.append(f"name = {spec.name}")
    out += ["", "[targets]", "# id x y A B R0 waypoint"]
    for t in spec.targets:
        out.append(" ".join([str(t.id), _fmt(t.position[0]), _fmt(t.position[1]),
                             _fmt(t.A), _fmt(t.B), _fmt(t.R0), str(int(t.is_waypoint))]))
    out += ["", "[edges]"]
    for e in sorted(spec.graph.edges):
        row = f"{e[0]} {e[1]}"
        if e in spec.graph.overrides:
            row += " " + _fmt(spec.graph.travel_time[e])
        out.append(row)
    out += ["", "[agents]"]
    out += [f"{a.id} {a.start_node}" for a in spec.agents]
    out += ["", "[thresholds]"]
    for z in range(spec.N):
        out.append(f"agent = {z + 1}")
        for p in range(spec.M):
            out.append(" ".join(_fmt(v) for v in spec.theta0[p, :, z]))
    return "\n".join(out) + "\n"


def read_scenario(path) -> MissionSpec:
    """Load a mission from ``path``; bare names fall back to the bundled configs."""
    p = Path(path)
    if p.is_file():
        return load_scenario(p.read_text(encoding="utf-8"), name=p.stem)
    stem = p.name[:-4] if p.name.endswith(".cfg") else p.name
    if stem in bundled_configs():
        return bundled(stem)
    raise FileNotFoundError(f"no such config: {path}")


def bundled_configs() -> list[str]:
    """Names of the reproduction configs shipped with the package."""
    root = resources.files("patrolgrad") / "configs"
    return sorted(f.name[:-4] for f in root.iterdir() if f.name.endswith(".cfg"))


def bundled(name: str) -> MissionSpec:
    text = (resources.files("patrolgrad") / "configs" / f"{name}.cfg").read_text(encoding="utf-8")
    return load_scenario(text, name=name)


def random_mission(rng: np.random.Generator, n_targets: int, n_agents: int,
                   horizon: float = 40.0, edge_prob: float = 0.5,
                   waypoint_prob: float = 0.0) -> MissionSpec:
    """Random connected mission used for gradient checks.

    Rates satisfy ``A < B`` and thresholds are drawn away from zero so that
    generic instances avoid coincident guards. Target 1 is never a way point.
    """
    pos = rng.uniform(0.0, 6.0, size=(n_targets, 2))
    order = rng.permutation(n_targets)
    edges = {(min(order[k], order[k + 1]) + 1, max(order[k], order[k + 1]) + 1)
             for k in range(n_targets - 1)}
    for i in range(n_targets):
        for j in range(i + 1, n_targets):
            if rng.random() < edge_prob:
                edges.add((i + 1, j + 1))
    targets = []
    for k in range(n_targets):
        wp = k > 0 and waypoint_prob > 0 and bool(rng.random() < waypoint_prob)
        targets.append(TargetSpec(id=k + 1, position=(float(pos[k, 0]), float(pos[k, 1])),
                                  A=float(rng.uniform(0.5, 2.0)), B=float(rng.uniform(4.0, 12.0)),
                                  R0=0.0 if wp else float(rng.uniform(0.0, 8.0)), is_waypoint=wp))
    agents = [AgentSpec(id=a + 1, start_node=int(rng.integers(1, n_targets + 1)))
              for a in range(n_agents)]
    graph = build_graph(pos, edges)
    theta = np.where(edge_mask(graph)[:, :, None],
                     rng.uniform(0.5, 10.0, size=(n_targets, n_targets, n_agents)), np.inf)
    return make_mission(horizon, targets, sorted(edges), agents, theta)
