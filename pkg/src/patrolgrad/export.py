"""Deterministic CSV writers: 17 significant digits, ``\\n`` line endings."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def atomic_write(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# --- tables -----------------------------------------------------------------

def events_table(result):
    header = ["k", "time", "kind", "agent", "target", "aux_target", "R_target_after"]
    rows = [(k, e.time, e.kind, e.agent, e.target, e.aux, e.R_after)
            for k, e in enumerate(result.events)]
    return header, rows


def trajectories_table(result):
    header = ["target", "segment_start", "segment_end", "R_start", "R_end"]
    rows = [(i + 1, t0, t1, r0, r1)
            for i, segs in enumerate(result.trajectories) for t0, t1, r0, r1 in segs]
    return header, rows


def sequences_table(result):
    header = ["agent", "visit", "node"]
    rows = [(a + 1, v, n) for a, seq in enumerate(result.sequences) for v, n in enumerate(seq)]
    return header, rows


def gradient_trace_table(trace):
    return ["k", "time", "target", "p", "q", "z", "dR"], list(trace)


def gradient_table(grad, theta):
    """Finite entries of a ``(M, M, N)`` array as 1-based ``(p, q, z, value)`` rows."""
    rows = [(p + 1, q + 1, z + 1, grad[p, q, z])
            for p, q, z in np.argwhere(np.isfinite(theta))]
    return ["p", "q", "z", "value"], rows


def theta_table(theta):
    """Threshold array in long form; absent edges written as ``inf``."""
    M, _, N = theta.shape
    rows = [(z + 1, p + 1, q + 1, theta[p, q, z])
            for z in range(N) for p in range(M) for q in range(M)]
    return ["agent", "p", "q", "theta"], rows


def theta_trace_table(thetas, theta_mask):
    rows = [(l, p + 1, q + 1, z + 1, th[p, q, z])
            for l, th in enumerate(thetas) for p, q, z in np.argwhere(theta_mask)]
    return ["l", "p", "q", "z", "theta"], rows


def cost_trace_table(trace):
    return ["l", "J", "grad_norm"], [(l, J, g) for l, (J, g)
                                     in enumerate(zip(trace.costs, trace.grad_norms))]


def visit_log_table(trace):
    rows = [(l, a + 1, "-".join(str(n) for n in seq))
            for l, seqs in enumerate(trace.sequences) for a, seq in enumerate(seqs)]
    return ["l", "agent", "sequence"], rows


def gradcheck_table(rows):
    header = ["p", "q", "z", "ipa", "fd", "rel_error", "sequence_changed"]
    return header, [(*r.entry, r.ipa, r.fd, r.rel_error, r.sequence_changed) for r in rows]


def spectral_table(reports):
    header = ["rho", "max_norm"] + [f"eig{k}_{part}" for k in range(1, 5) for part in ("real", "imag")]
    rows = []
    for r in reports:
        row = [r.rho, r.max_norm]
        for z in r.eigenvalues:
            row += [z.real, z.imag]
        rows.append(row)
    return header, rows


_CYCLE_COLS = ("dR1_dth1", "dR1_dth2", "dR2_dth1", "dR2_dth2")


def grad_cycles_table(map_xs, engine_xs=None, event_xs=None):
    """Boundary gradients per cycle: map iterates, engine (fixed time), engine (along event)."""
    header = ["k"] + [f"map_{c}" for c in _CYCLE_COLS]
    extra = [(name, xs) for name, xs in (("engine", engine_xs), ("event", event_xs)) if xs is not None]
    for name, _ in extra:
        header += [f"{name}_{c}" for c in _CYCLE_COLS]
    rows = []
    for k, x in enumerate(map_xs):
        row = [k, *x]
        for _, xs in extra:
            row += list(xs[k]) if k < len(xs) else [float("nan")] * 4
        rows.append(row)
    return header, rows


def rollout_table(rollout):
    header = ["step", "time", "agent", "node", "remaining_steps", "action"]
    header += [f"R{i + 1}" for i in range(len(rollout[0].R))] if rollout else []
    rows = []
    for st in rollout:
        for a, ((node, rem), act) in enumerate(zip(st.positions, st.action)):
            rows.append([st.step, st.time, a + 1, node, rem, act, *st.R])
    return header, rows


class Emitter:
    """Single writer for one run's artifacts; records checksums for the manifest."""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.artifacts = {}

    def table(self, name, header, rows):
        return self.text(name, csv_text(header, rows))

    def text(self, name, text):
        path = self.out_dir / name
        atomic_write(path, text)
        self.artifacts[name] = sha256(path)
        return path

    def manifest(self, subcommand, config, params, duration):
        doc = {
            "subcommand": subcommand,
            "config": None if config is None else str(config),
            "parameters": params,
            "output_dir": str(self.out_dir),
            "duration_s": duration,
            "artifacts": dict(sorted(self.artifacts.items())),
        }
        atomic_write(self.out_dir / "manifest.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return doc
