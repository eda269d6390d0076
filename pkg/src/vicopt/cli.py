"""Command-line interface.

Verbs:
  run       simulate one scenario episode; write trajectory.csv,
            updates.csv, metrics.txt and scenario_resolved.json
  fig2      offline contact-tuning comparison: optimize gains for the
            time-weighted velocity cost and the time-weighted error cost
            on the bundled contact scenario, simulate both next to a
            hand-tuned reference, and write the three traces
  compare   run one or more scenarios under several controller modes
            with shared seeds and tabulate the metrics
  validate  parse a scenario file and print its fully-resolved form

Verbosity is controlled by the VICOPT_LOG_LEVEL environment variable
(error | warn | info | debug; default warn).  All floats in generated
files use the %.9g format and no wall-clock quantity is ever written,
so outputs are byte-identical across reruns with the same seed.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .dynamics import N_AXES, N_INPUTS, PlantState, input_from_gains, recover_gains
from .objective import LiveForceSource, fitave, itae, simulate_rollout
from .optimizer import sqp_solve
from .runtime import MODES, TrajectoryLog, compute_metrics, run_episode
from .safety import bound_rows
from .scenario import (
    ParseError,
    Scenario,
    ValidationError,
    bundled_scenario_names,
    load_bundled,
    load_scenario,
)

log = logging.getLogger("vicopt.cli")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_TERMINAL = 3

_LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "warning": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


def _setup_logging():
    name = os.environ.get("VICOPT_LOG_LEVEL", "warn").strip().lower()
    level = _LOG_LEVELS.get(name)
    logging.basicConfig(
        level=level if level is not None else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if level is None and name:
        log.warning("unknown VICOPT_LOG_LEVEL %r, using 'warn'", name)


def _fmt(x) -> str:
    """Canonical float formatting for generated files."""
    if x is None:
        return "N/A"
    return "%.9g" % float(x)


def _load(path_or_name: str, seed_override=None) -> Scenario:
    if path_or_name.startswith("bundled:"):
        return load_bundled(path_or_name[len("bundled:") :], seed_override)
    if os.path.exists(path_or_name):
        return load_scenario(path_or_name, seed_override)
    if path_or_name in bundled_scenario_names():
        return load_bundled(path_or_name, seed_override)
    raise ParseError(f"no such scenario file or bundled name: {path_or_name}")


def write_trajectory_csv(path, tlog: TrajectoryLog):
    """One header line plus one line per tick: state, wrench, applied input."""
    header = (
        ["t"]
        + [f"e{i + 1}" for i in range(N_AXES)]
        + [f"edot{i + 1}" for i in range(N_AXES)]
        + [f"F{i + 1}" for i in range(N_AXES)]
        + [f"u{j + 1}" for j in range(N_INPUTS)]
        + ["h_min", "event"]
    )
    flags = tlog.event_flags()
    h_min = tlog.h.min(axis=1) if tlog.h.size else np.full(tlog.n_ticks, np.nan)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for k in range(tlog.n_ticks):
            cells = (
                [_fmt(tlog.t[k])]
                + [_fmt(v) for v in tlog.e[k]]
                + [_fmt(v) for v in tlog.e_dot[k]]
                + [_fmt(v) for v in tlog.f[k]]
                + [_fmt(v) for v in tlog.u[k]]
                + [_fmt(h_min[k]), flags[k]]
            )
            fh.write(",".join(cells) + "\n")


def write_updates_csv(path, tlog: TrajectoryLog):
    """One line per low-frequency solve (timings are never serialized)."""
    header = [
        "tick",
        "t",
        "status",
        "iterations",
        "n_cost_evals",
        "cost_before",
        "cost_after",
        "kkt_residual",
        "applied_tick",
    ] + [f"u_after{j + 1}" for j in range(N_INPUTS)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for up in tlog.updates:
            cells = [
                str(up.tick),
                _fmt(up.t),
                up.status,
                str(up.iterations),
                str(up.n_cost_evals),
                _fmt(up.cost_before),
                _fmt(up.cost_after),
                _fmt(up.kkt_residual),
                str(up.applied_tick),
            ] + [_fmt(v) for v in up.u_after]
            fh.write(",".join(cells) + "\n")


def write_metrics_txt(path, sc: Scenario, tlog: TrajectoryLog, report):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# scenario: {sc.resolved_json()}\n")
        fh.write(f"# seed: {sc.seed}\n")
        fh.write(f"approaching_time = {_fmt(report.approaching_time)}\n")
        fh.write(f"settling_time = {_fmt(report.settling_time)}\n")
        fh.write(f"steady_force_variance = {_fmt(report.steady_force_variance)}\n")
        fh.write(f"min_barrier = {_fmt(report.min_barrier)}\n")
        fh.write(f"fitave_total = {_fmt(report.fitave_total)}\n")
        fh.write(f"itae_total = {_fmt(report.itae_total)}\n")
        fh.write(f"settling_band = {_fmt(report.settling_band)}\n")
        fh.write(f"steady_state_error = {_fmt(report.steady_state_error)}\n")
        fh.write(f"axis = {report.axis}\n")
        fh.write(f"n_updates = {len(tlog.updates)}\n")
        fh.write(f"terminal = {tlog.terminal or 'none'}\n")


def cmd_run(args) -> int:
    sc = _load(args.scenario, args.seed)
    if args.latency is not None:
        sc = sc.with_latency(args.latency)
    out = Path(args.out) if args.out else Path("vicopt_out") / sc.name
    out.mkdir(parents=True, exist_ok=True)
    log.info("running scenario '%s' (seed %d, mode %s)", sc.name, sc.seed, sc.loop.baseline_mode)
    tlog = run_episode(sc)
    report = compute_metrics(tlog, sc.metrics, contact_axis=sc.contact_axis())
    write_trajectory_csv(out / "trajectory.csv", tlog)
    write_updates_csv(out / "updates.csv", tlog)
    write_metrics_txt(out / "metrics.txt", sc, tlog, report)
    with open(out / "scenario_resolved.json", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(sc.resolved_json(indent=2) + "\n")
    for up in tlog.updates:
        log.info(
            "update @ tick %d: %s in %d iters, cost %.6g -> %.6g",
            up.tick,
            up.status,
            up.iterations,
            up.cost_before,
            up.cost_after,
        )
    print(f"wrote {out}/trajectory.csv ({tlog.n_ticks} ticks), updates.csv "
          f"({len(tlog.updates)} updates), metrics.txt, scenario_resolved.json")
    print(
        "approaching_time={} settling_time={} steady_force_variance={} min_barrier={}".format(
            _fmt(report.approaching_time),
            _fmt(report.settling_time),
            _fmt(report.steady_force_variance),
            _fmt(report.min_barrier),
        )
    )
    if tlog.terminal is not None:
        print(f"episode ended early: {tlog.terminal}", file=sys.stderr)
        return EXIT_TERMINAL
    return EXIT_OK


def run_fig2(out_dir=None, seed=None) -> dict:
    """Offline gain-tuning comparison on the bundled contact scenario.

    Optimizes the gain input for the time-weighted velocity cost (two
    starts: the hand-tuned gains and the error-cost optimum) and for the
    time-weighted error cost, then scores every candidate by simulating
    the full episode and integrating the cost over the resulting trace.
    The reported 'fitave' and 'itae' gain sets are the argmins of those
    trace scores, so the comparison is evaluator-consistent.
    """
    sc = load_bundled("fig2", seed_override=seed)
    lo, hi = sc.loop.u_min, sc.loop.u_max
    dt = 1.0 / sc.loop.tick_rate
    horizon = sc.episode_length
    substeps = sc.loop.substeps
    axis = sc.contact_axis() or 0
    source = LiveForceSource(tuple(sc.surfaces), None)

    def init():
        return PlantState(sc.e0.copy(), sc.edot0.copy(), 0.0)

    def trace(u):
        return simulate_rollout(u, init(), source, horizon, dt, substeps)

    def cost_fn(kind):
        from .objective import rollout_cost

        return lambda u: rollout_cost(u, init(), source, horizon, dt, kind, substeps)

    rows = bound_rows(lo, hi)
    opts = sc.loop.sqp
    u_manual = np.clip(input_from_gains(sc.constant_gains), lo, hi)

    rep_i = sqp_solve(cost_fn("itae"), u_manual.copy(), rows, opts, bounds=(lo, hi))
    itae_candidates = [np.clip(rep_i.solution, lo, hi), u_manual]
    itae_scores = [itae(trace(u)) for u in itae_candidates]
    u_itae = itae_candidates[int(np.argmin(itae_scores))]

    rep_f1 = sqp_solve(cost_fn("fitave"), u_manual.copy(), rows, opts, bounds=(lo, hi))
    rep_f2 = sqp_solve(cost_fn("fitave"), u_itae.copy(), rows, opts, bounds=(lo, hi))
    fitave_candidates = [
        np.clip(rep_f1.solution, lo, hi),
        np.clip(rep_f2.solution, lo, hi),
        u_itae,
        u_manual,
    ]
    fitave_scores = [fitave(trace(u)) for u in fitave_candidates]
    u_fitave = fitave_candidates[int(np.argmin(fitave_scores))]

    labels = ("fitave", "itae", "manual")
    inputs = {"fitave": u_fitave, "itae": u_itae, "manual": u_manual}
    traces = {name: trace(u) for name, u in inputs.items()}

    summary = {}
    for name in labels:
        w = traces[name]
        fa = w.f[:, axis]
        touched = np.nonzero(np.abs(fa) > 0.0)[0]
        touch_t = float(w.t[touched[0]]) if touched.size else None
        peak = float(np.max(np.abs(w.e_dot[touched[0] :, axis]))) if touched.size else None
        gains = recover_gains(inputs[name])
        summary[name] = {
            "fitave": fitave(w),
            "itae": itae(w),
            "touch_time": touch_t,
            "post_touch_velocity_peak": peak,
            "m": float(gains.m[axis]),
            "kd": float(gains.kd[axis]),
            "kp": float(gains.kp[axis]),
            "u": inputs[name].tolist(),
        }

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        t = traces["fitave"].t
        with open(out / "fig2_trajectories.csv", "w", encoding="utf-8", newline="\n") as fh:
            cols = ["t"]
            for name in labels:
                cols += [f"e_{name}", f"edot_{name}", f"F_{name}"]
            fh.write(",".join(cols) + "\n")
            for k in range(len(t)):
                cells = [_fmt(t[k])]
                for name in labels:
                    w = traces[name]
                    cells += [_fmt(w.e[k, axis]), _fmt(w.e_dot[k, axis]), _fmt(w.f[k, axis])]
                fh.write(",".join(cells) + "\n")
        with open(out / "fig2_summary.txt", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"# scenario: {sc.resolved_json()}\n")
            fh.write(f"# seed: {sc.seed}\n")
            for name in labels:
                s = summary[name]
                fh.write(
                    f"{name}: fitave = {_fmt(s['fitave'])}, itae = {_fmt(s['itae'])}, "
                    f"touch_time = {_fmt(s['touch_time'])}, "
                    f"post_touch_velocity_peak = {_fmt(s['post_touch_velocity_peak'])}, "
                    f"m = {_fmt(s['m'])}, kd = {_fmt(s['kd'])}, kp = {_fmt(s['kp'])}\n"
                )
    return summary


def cmd_fig2(args) -> int:
    out = Path(args.out) if args.out else Path("vicopt_out") / "fig2"
    summary = run_fig2(out_dir=out, seed=args.seed)
    for name in ("fitave", "itae", "manual"):
        s = summary[name]
        print(
            f"{name:7s} fitave={_fmt(s['fitave'])} itae={_fmt(s['itae'])} "
            f"touch={_fmt(s['touch_time'])} vel_peak={_fmt(s['post_touch_velocity_peak'])} "
            f"(m={_fmt(s['m'])}, kd={_fmt(s['kd'])}, kp={_fmt(s['kp'])})"
        )
    print(f"wrote {out}/fig2_trajectories.csv, fig2_summary.txt")
    return EXIT_OK


_COMPARE_FIELDS = (
    "approaching_time",
    "settling_time",
    "steady_force_variance",
    "min_barrier",
    "fitave_total",
    "itae_total",
)


def cmd_compare(args) -> int:
    modes = list(args.modes)
    if len(modes) < 2:
        print("compare needs at least two --modes", file=sys.stderr)
        return EXIT_USAGE
    for m in modes:
        if m not in MODES:
            print(f"unknown mode '{m}' (choose from {', '.join(MODES)})", file=sys.stderr)
            return EXIT_USAGE
    rows = []
    for scenario_path in args.scenarios:
        sc = _load(scenario_path, args.seed)
        log.info("comparing scenario '%s' across modes %s", sc.name, modes)
        results = {}
        for m in modes:
            tlog = run_episode(sc.with_mode(m))
            results[m] = compute_metrics(tlog, sc.metrics, contact_axis=sc.contact_axis())
        for m in modes:
            rows.append((sc.name, m, results[m]))

    header = ["scenario", "mode"] + list(_COMPARE_FIELDS)
    table = [header]
    for name, m, rep in rows:
        table.append([name, m] + [_fmt(getattr(rep, f)) for f in _COMPARE_FIELDS])
    widths = [max(len(r[i]) for r in table) for i in range(len(header))]
    for r in table:
        print("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())

    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "comparison.csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(header) + "\n")
            for name, m, rep in rows:
                fh.write(
                    ",".join([name, m] + [_fmt(getattr(rep, f)) for f in _COMPARE_FIELDS]) + "\n"
                )
        print(f"wrote {out}/comparison.csv")
    return EXIT_OK


def cmd_validate(args) -> int:
    sc = _load(args.scenario, None)
    print(sc.resolved_json(indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="vicopt",
        description="Safe online impedance-gain optimization: simulate, tune, compare.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="simulate one scenario episode and write logs")
    run_p.add_argument("scenario", help="scenario JSON path or bundled name (see 'validate --list')")
    run_p.add_argument("--out", default=None, help="output directory (default vicopt_out/<name>)")
    run_p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run_p.add_argument("--latency", type=float, default=None, help="simulated gain-solve latency [s]")
    run_p.set_defaults(fn=cmd_run)

    fig2_p = sub.add_parser("fig2", help="offline contact-tuning comparison (three gain sets)")
    fig2_p.add_argument("--out", default=None, help="output directory (default vicopt_out/fig2)")
    fig2_p.add_argument("--seed", type=int, default=None)
    fig2_p.set_defaults(fn=cmd_fig2)

    cmp_p = sub.add_parser("compare", help="run scenarios under several modes and tabulate metrics")
    cmp_p.add_argument("scenarios", nargs="+", help="scenario JSON paths or bundled names")
    cmp_p.add_argument("--modes", nargs="+", default=list(MODES), help=f"two or more of {MODES}")
    cmp_p.add_argument("--out", default=None, help="also write comparison.csv here")
    cmp_p.add_argument("--seed", type=int, default=None)
    cmp_p.set_defaults(fn=cmd_compare)

    val_p = sub.add_parser("validate", help="parse a scenario and print its resolved form")
    val_p.add_argument("scenario", nargs="?", default=None)
    val_p.add_argument("--list", action="store_true", help="list bundled scenario names")
    val_p.set_defaults(fn=cmd_validate)

    return p


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "validate" and args.list:
        for name in bundled_scenario_names():
            print(name)
        return EXIT_OK
    if args.command == "validate" and args.scenario is None:
        print("validate needs a scenario path (or --list)", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.fn(args)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
