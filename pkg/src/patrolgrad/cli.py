"""Command line entry point: ``patrolgrad <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 singular guard, 4 DP state budget exceeded.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time

import numpy as np

from . import export
from .dp_baseline import DpBudgetError, DpConfig, value_iteration
from .gradcheck import gradcheck, max_relative_error
from .ipa import SingularGuardError, grad_J
from .optimizer import DescentConfig, descend
from .scenario import ScenarioError, dump_scenario, random_mission, read_scenario
from . import theory

log = logging.getLogger("patrolgrad")

EXIT_CONFIG = 2
EXIT_SINGULAR = 3
EXIT_BUDGET = 4


class ConfigError(Exception):
    pass


def _load(path, horizon=None):
    try:
        spec = read_scenario(path)
    except (ScenarioError, FileNotFoundError, OSError) as err:
        raise ConfigError(str(err)) from err
    if horizon is not None:
        if not horizon > 0:
            raise ConfigError("--horizon must be positive")
        spec = spec.replace(horizon=float(horizon))
    return spec


def cmd_simulate(args, em):
    spec = _load(args.config, args.horizon)
    res = grad_J(spec, trace=args.gradient, record=True)
    sim = res.sim
    em.table("events.csv", *export.events_table(sim))
    em.table("trajectories.csv", *export.trajectories_table(sim))
    em.table("sequences.csv", *export.sequences_table(sim))
    if args.gradient:
        em.table("gradient.csv", *export.gradient_table(res.grad, spec.theta0))
        em.table("gradient_trace.csv", *export.gradient_trace_table(res.trace))
    for note in sim.flags:
        log.warning(note)
    print(f"J = {res.J:.12g}")
    for a, seq in enumerate(sim.sequences, start=1):
        head = "-".join(str(n) for n in seq[:12])
        print(f"agent {a}: {head}{'-...' if len(seq) > 12 else ''}")
    return {"horizon": spec.horizon, "J": res.J}


def cmd_optimize(args, em):
    spec = _load(args.config, args.horizon)
    try:
        cfg = DescentConfig(iterations=args.iters, beta0=args.beta0, gamma=args.gamma, tol=args.tol)
    except ValueError as err:
        raise ConfigError(str(err)) from err
    trace = descend(spec, spec.theta0, cfg)
    if trace.costs:
        em.table("cost_trace.csv", *export.cost_trace_table(trace))
        em.table("theta_final.csv", *export.theta_table(trace.theta_final))
        em.table("visits.csv", *export.visit_log_table(trace))
        if args.theta_trace:
            em.table("theta_trace.csv",
                     *export.theta_trace_table(trace.thetas, np.isfinite(spec.theta0)))
        print(f"J: {trace.costs[0]:.10g} -> {trace.J_final:.10g} after {len(trace) - 1} steps")
        for z in range(spec.N):
            diag = np.diagonal(trace.theta_final[:, :, z])
            print(f"agent {z + 1} diagonal: " + " ".join(f"{v:.4g}" for v in diag))
    if trace.error is not None:
        raise trace.error
    return {"iterations": args.iters, "beta0": args.beta0, "gamma": args.gamma, "tol": args.tol,
            "J_initial": trace.costs[0], "J_final": trace.J_final}


def cmd_gradcheck(args, em):
    if args.config:
        spec = _load(args.config, args.horizon)
    else:
        rng = np.random.default_rng(args.seed)
        spec = random_mission(rng, args.targets, args.agents,
                              horizon=args.horizon if args.horizon else 40.0)
        em.text("scenario.cfg", dump_scenario(spec))
    rows = gradcheck(spec, h=args.h)
    em.table("gradcheck.csv", *export.gradcheck_table(rows))
    print(f"{'entry':>12} {'ipa':>14} {'fd':>14} {'rel_err':>10} changed")
    for r in rows:
        print(f"{str(r.entry):>12} {r.ipa:14.6e} {r.fd:14.6e} {r.rel_error:10.2e} "
              f"{'yes' if r.sequence_changed else ''}")
    worst = max_relative_error(rows)
    print(f"max relative error (unflagged, |d| > 1e-3): {worst:.3e}")
    return {"seed": args.seed, "h": args.h, "max_rel_error": worst,
            "flagged": sum(r.sequence_changed for r in rows)}


def cmd_dp(args, em):
    spec = _load(args.config, args.horizon)
    try:
        cfg = DpConfig(dt=args.dt, dr=args.dr, rmax=args.rmax, max_states=args.max_states)
        res = value_iteration(spec, cfg)
    except ValueError as err:
        raise ConfigError(str(err)) from err
    em.text("dp_cost.txt", f"J_DP {export.fmt(res.J)}\nJ_continuous {export.fmt(res.J_continuous)}\n"
                           f"states {res.n_states}\niterations {res.iterations}\n")
    em.table("dp_policy_rollout.csv", *export.rollout_table(res.rollout))
    print(f"J_DP = {res.J:.10g} (continuous replay {res.J_continuous:.10g}), "
          f"{res.n_states} states, {res.iterations} sweeps")
    return {"dt": args.dt, "dr": args.dr, "rmax": args.rmax, "J_DP": res.J,
            "states": res.n_states}


def _grid(text):
    if ":" in text:
        lo, hi, step = (float(x) for x in text.split(":"))
        n = int(round((hi - lo) / step)) + 1
        return [round(lo + k * step, 12) for k in range(n)]
    return [float(x) for x in text.split(",") if x.strip()]


def cmd_analyze(args, em):
    if args.rho is not None:
        A1 = A2 = args.rho
        B1 = B2 = 1.0
    else:
        A1, B1, A2, B2 = args.A1, args.B1, args.A2, args.B2
    try:
        rhos = _grid(args.grid)
        reports = theory.spectral_scan(rhos)
        cmap = theory.build_cycle_map(A1, B1, A2, B2)
        exact = theory.exact_cycle_map(A1, B1, A2, B2)
    except ValueError as err:
        raise ConfigError(str(err)) from err
    em.table("spectral.csv", *export.spectral_table(reports))
    it = theory.converge_gradients(cmap, args.cycles)
    try:
        engine, _ = theory.engine_cycles(A1, B1, A2, B2, args.cycles)
    except RuntimeError as err:
        log.warning("engine cross-check skipped: %s", err)
        engine = None
    event = None if engine is None else theory.along_event(engine, A1, B1, A2)
    em.table("grad_cycles.csv", *export.grad_cycles_table(it.xs, engine, event))
    rep = theory.spectral_report(A1, B1, A2, B2)
    print(f"|lambda|_max = {rep.max_norm:.10g}")
    if rep.equilibrium is not None:
        print("equilibrium: " + " ".join(f"{v:.6g}" for v in rep.equilibrium))
    if it.diverged:
        print(f"cycle-map iteration diverged at cycle {it.diverged_at}")
    else:
        print("map after {} cycles: {}".format(args.cycles, " ".join(f"{v:.6g}" for v in it.xs[-1])))
    if engine is not None:
        x_exact = theory.converge_gradients(exact, len(engine) - 1, engine[0]).xs
        print("engine after {} cycles: {}".format(len(engine) - 1,
                                                  " ".join(f"{v:.6g}" for v in engine[-1])))
        print("engine along event: " + " ".join(f"{v:.6g}" for v in event[-1]))
        k = min(len(engine), len(it.xs))
        x_printed = theory.converge_gradients(cmap, k - 1, event[0]).xs
        print(f"engine vs exact map: {np.max(np.abs(x_exact - engine)):.3e}; "
              f"engine (along event) vs sequential map: {np.max(np.abs(x_printed - event[:k])):.3e}")
    return {"A1": A1, "B1": B1, "A2": A2, "B2": B2, "grid": rhos, "cycles": args.cycles,
            "max_norm": rep.max_norm, "diverged": it.diverged}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="patrolgrad", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required,
                        help="scenario file, or the name of a bundled config")
        sp.add_argument("--horizon", type=float, default=None, help="override the mission horizon")
        sp.add_argument("--out-dir", default="out", help="artifact directory (default: out)")

    sp = sub.add_parser("simulate", help="simulate a scenario and export events")
    common(sp)
    sp.add_argument("--gradient", action="store_true", help="also export the IPA gradient and its trace")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("optimize", help="projected gradient descent on the thresholds")
    common(sp)
    sp.add_argument("--iters", type=int, default=300)
    sp.add_argument("--beta0", type=float, default=1.0)
    sp.add_argument("--gamma", type=float, default=0.6)
    sp.add_argument("--tol", type=float, default=None)
    sp.add_argument("--theta-trace", action="store_true", help="write every iterate")
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("gradcheck", help="compare IPA with finite differences")
    common(sp, config_required=False)
    sp.add_argument("--seed", type=int, default=0, help="seed for the random scenario")
    sp.add_argument("--targets", type=int, default=4)
    sp.add_argument("--agents", type=int, default=1)
    sp.add_argument("--h", type=float, default=1e-4, help="relative probe step")
    sp.set_defaults(func=cmd_gradcheck)

    sp = sub.add_parser("dp", help="gridded dynamic programming reference")
    common(sp)
    sp.add_argument("--dt", type=float, default=1.0)
    sp.add_argument("--dr", type=float, default=1.0)
    sp.add_argument("--rmax", type=float, default=None)
    sp.add_argument("--max-states", type=int, default=2_000_000)
    sp.set_defaults(func=cmd_dp)

    sp = sub.add_parser("analyze-1a2t", help="cycle-map analysis of one agent and two targets")
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--rho", type=float, default=None, help="homogeneous ratio A/B (B = 1)")
    g.add_argument("--A1", type=float, default=None)
    sp.add_argument("--B1", type=float, default=1.0)
    sp.add_argument("--A2", type=float, default=None)
    sp.add_argument("--B2", type=float, default=1.0)
    sp.add_argument("--grid", default="0.05:0.45:0.05", help="rho grid, lo:hi:step or a comma list")
    sp.add_argument("--cycles", type=int, default=200)
    sp.add_argument("--out-dir", default="out")
    sp.set_defaults(func=cmd_analyze)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "analyze-1a2t":
        if args.rho is None and args.A1 is None:
            args.rho = 0.3
        if args.A1 is not None and args.A2 is None:
            args.A2 = args.A1
    em = export.Emitter(args.out_dir)
    t0 = time.perf_counter()
    try:
        params = args.func(args, em)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except SingularGuardError as err:
        print(f"numerical diagnostic: {err}", file=sys.stderr)
        return EXIT_SINGULAR
    except DpBudgetError as err:
        print(f"resource budget: {err}", file=sys.stderr)
        return EXIT_BUDGET
    config = getattr(args, "config", None)
    em.manifest(args.command, config, params, time.perf_counter() - t0)
    return 0


if __name__ == "__main__":
    sys.exit(main())
