"""Projected gradient descent on the threshold array."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .ipa import SingularGuardError, grad_J
from .scenario import MissionSpec, validate_thresholds

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DescentConfig:
    """Iteration budget and diminishing step schedule ``beta0 / (1 + l) ** gamma``."""

    iterations: int = 300
    beta0: float = 1.0
    gamma: float = 0.6
    tol: float | None = None

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")
        if not self.beta0 > 0:
            raise ValueError("beta0 must be positive")
        if not 0.5 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0.5, 1]")
        if self.tol is not None and self.tol < 0:
            raise ValueError("tol must be nonnegative")

    def step(self, l: int) -> float:
        return self.beta0 / (1.0 + l) ** self.gamma


@dataclass
class DescentTrace:
    thetas: list = field(default_factory=list)
    costs: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    grads: list = field(default_factory=list)
    sequences: list = field(default_factory=list)
    converged: bool = False
    error: SingularGuardError | None = None

    def __len__(self):
        return len(self.costs)

    @property
    def theta_final(self) -> np.ndarray:
        return self.thetas[-1]

    @property
    def J_final(self) -> float:
        return self.costs[-1]

    def diagonals(self, agent: int | None = None) -> np.ndarray:
        """Diagonal thresholds per iterate, shape ``(len, M, N)`` or ``(len, M)``."""
        d = np.array([np.diagonal(th, axis1=0, axis2=1).T for th in self.thetas])
        return d if agent is None else d[:, :, agent - 1]

    def grad_diagonals(self) -> np.ndarray:
        return np.array([np.diagonal(g, axis1=0, axis2=1).T for g in self.grads])


def project(theta: np.ndarray) -> np.ndarray:
    """Clamp finite entries at zero; infinite entries pass through."""
    out = theta.copy()
    fin = np.isfinite(out)
    out[fin] = np.maximum(out[fin], 0.0)
    return out


def descend(spec: MissionSpec, theta0=None, cfg: DescentConfig = DescentConfig()) -> DescentTrace:
    """Run ``cfg.iterations`` projected steps starting from ``theta0``.

    The trace holds ``L + 1`` evaluated iterates (fewer on early stop). A
    singular guard aborts the loop; the partial trace is returned with the
    error attached.
    """
    theta = validate_thresholds(spec.graph, spec.theta0 if theta0 is None else theta0, spec.N)
    fin = np.isfinite(theta)
    trace = DescentTrace()
    for l in range(cfg.iterations + 1):
        try:
            res = grad_J(spec, theta)
        except SingularGuardError as err:
            log.warning("descent stopped at iterate %d: %s", l, err)
            trace.error = err
            return trace
        trace.thetas.append(theta.copy())
        trace.costs.append(res.J)
        trace.grads.append(res.grad)
        trace.grad_norms.append(float(np.linalg.norm(res.grad)))
        trace.sequences.append([list(s) for s in res.sim.sequences])
        log.debug("l=%d J=%.6g |grad|=%.3g", l, res.J, trace.grad_norms[-1])
        if l == cfg.iterations:
            break
        nxt = theta.copy()
        nxt[fin] = theta[fin] - cfg.step(l) * res.grad[fin]
        nxt = project(nxt)
        if cfg.tol is not None and np.max(np.abs(nxt[fin] - theta[fin]), initial=0.0) < cfg.tol:
            trace.converged = True
            theta = nxt
            res = grad_J(spec, theta)
            trace.thetas.append(theta.copy())
            trace.costs.append(res.J)
            trace.grads.append(res.grad)
            trace.grad_norms.append(float(np.linalg.norm(res.grad)))
            trace.sequences.append([list(s) for s in res.sim.sequences])
            break
        theta = nxt
    return trace


def theorem1_check(spec: MissionSpec, theta0=None, cfg: DescentConfig = DescentConfig()):
    """Diagonal thresholds along a single-agent descent run.

    Returns ``(diagonals, trace)`` with ``diagonals`` of shape ``(len, M)``.
    """
    if spec.N != 1:
        raise ValueError("the diagonal-decay check applies to a single agent")
    if np.any(spec.A >= spec.B):
        raise ValueError("every target needs A < B")
    trace = descend(spec, theta0, cfg)
    return trace.diagonals(agent=1), trace
