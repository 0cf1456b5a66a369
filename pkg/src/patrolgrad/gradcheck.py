"""Central finite differences of the simulated cost, as an independent check on IPA."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .hybrid_sim import simulate
from .ipa import grad_J
from .scenario import MissionSpec


@dataclass
class GradCheckRow:
    entry: tuple                 # 1-based (p, q, z)
    ipa: float
    fd: float
    rel_error: float
    sequence_changed: bool


def _signature(res):
    return [(e.kind, e.agent, e.target, e.aux) for e in res.events]


def fd_probe(spec: MissionSpec, theta: np.ndarray, entry, h: float):
    """Central difference of J along one entry.

    Returns ``(derivative, changed)`` where ``changed`` flags a probe pair whose
    event sequences differ (the cost is only piecewise differentiable).
    """
    up = theta.copy()
    dn = theta.copy()
    up[entry] += h
    if theta[entry] - h >= 0.0:
        dn[entry] -= h
        span = 2 * h
    else:
        # thresholds are nonnegative: one-sided (right) difference at the boundary
        span = h
    r_up = simulate(spec, up, record=False)
    r_dn = simulate(spec, dn, record=False)
    return (r_up.J - r_dn.J) / span, _signature(r_up) != _signature(r_dn)


def _probe_job(args):
    spec, theta, entry, h = args
    return fd_probe(spec, theta, entry, h)


def probe_step(value: float, h: float = 1e-4) -> float:
    return h * max(1.0, abs(value))


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("PATROLGRAD_THREADS", "1")))
    except ValueError:
        return 1


def gradcheck(spec: MissionSpec, theta=None, h: float = 1e-4, workers: int | None = None):
    """Compare IPA with central differences on every finite threshold entry.

    The probe step is ``h * max(1, theta)``; entries closer than one step to
    zero get a forward difference instead.
    """
    if theta is None:
        theta = spec.theta0
    theta = np.asarray(theta, dtype=float)
    ipa = grad_J(spec, theta).grad
    entries = [tuple(int(k) for k in e) for e in np.argwhere(np.isfinite(theta))]
    jobs = [(spec, theta, e, probe_step(theta[e], h)) for e in entries]
    workers = worker_count() if workers is None else workers
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            probes = list(pool.map(_probe_job, jobs))
    else:
        probes = [_probe_job(j) for j in jobs]
    rows = []
    for e, (fd, changed) in zip(entries, probes):
        g = float(ipa[e])
        scale = max(abs(fd), abs(g))
        rel = abs(g - fd) / scale if scale > 0 else 0.0
        rows.append(GradCheckRow(entry=(e[0] + 1, e[1] + 1, e[2] + 1), ipa=g, fd=fd,
                                 rel_error=rel, sequence_changed=changed))
    return rows


def max_relative_error(rows, floor: float = 1e-3) -> float:
    """Largest relative error over unflagged rows with a component above ``floor``."""
    errs = [r.rel_error for r in rows
            if not r.sequence_changed and max(abs(r.ipa), abs(r.fd)) > floor]
    return max(errs, default=0.0)
