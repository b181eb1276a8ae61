"""Command-line interface: simulate scenarios, run verification suites,
sweep a parameter across values.

Exit codes: 0 success, 1 verification failure, 2 unusable configuration or
arguments, 3 divergence during integration.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, bundled_scenario_path, load_scenario
from .controllers import Gains
from .csvio import write_metrics_json, write_trajectory_csv
from .simulation import simulate
from .verify import SUITES, run_suites

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3

SWEEP_PARAMS = ("kp", "kd", "h", "dt")


def _use_color() -> bool:
    return sys.stdout.isatty() and not os.environ.get("NO_COLOR")


def _status(ok: bool) -> str:
    word = "PASS" if ok else "FAIL"
    if _use_color():
        code = "32" if ok else "31"
        return f"\x1b[{code}m{word}\x1b[0m"
    return word


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="taskreg",
        description="Closed-loop task-space regulation simulator and verifier")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one scenario and write its "
                         "trajectory CSV and metrics")
    sim.add_argument("--config", type=Path, default=None,
                     help="scenario file (default: bundled scenario)")
    sim.add_argument("--out", type=Path, required=True, help="output directory")
    sim.add_argument("--controller", choices=["full", "vf", "sat"],
                     help="override the controller kind from the file")
    sim.add_argument("--dt", type=float, help="override the integration step")
    sim.add_argument("--t-end", type=float, help="override the horizon")

    ver = sub.add_parser("verify", help="run numerical verification suites")
    ver.add_argument("--suite", default="all",
                     choices=["all", *SUITES], help="suite to run")

    swp = sub.add_parser("sweep", help="run the scenario once per parameter value")
    swp.add_argument("--config", type=Path, default=None)
    swp.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    swp.add_argument("--values", required=True,
                     help="comma-separated list of values")
    swp.add_argument("--out", type=Path, required=True)
    return parser


def cmd_simulate(args) -> int:
    path = args.config if args.config is not None else bundled_scenario_path()
    overrides = {}
    if args.controller:
        overrides["controller"] = args.controller
    if args.dt is not None:
        overrides["dt"] = args.dt
    if args.t_end is not None:
        overrides["t_end"] = args.t_end
    scn = load_scenario(path, overrides)

    args.out.mkdir(parents=True, exist_ok=True)
    log, m = simulate(scn)
    write_trajectory_csv(log, args.out / "trajectory.csv")
    write_metrics_json(m, args.out / "metrics.json")

    print(f"controller: {scn.controller}   steps: {log.t.size - 1}   "
          f"status: {log.status}")
    print(f"settling time      : {m.settling_time:.3f} s (tol "
          f"{scn.settle_tol:g} m)")
    print(f"steady-state error : {m.steady_state_error:.6g} m")
    print(f"peak torque        : {m.peak_torque:.6g} N m")
    print(f"min |det J|        : {m.min_abs_det_j:.6g}")
    print(f"dissipation defect : {m.dissipation_defect:.6g}")
    for t_ev, msg in log.events:
        print(f"event t={t_ev:.3f}: {msg}")
    print(f"wrote {args.out / 'trajectory.csv'} and {args.out / 'metrics.json'}")
    return EXIT_DIVERGED if log.status == "diverged" else EXIT_OK


def cmd_verify(args) -> int:
    results = run_suites(args.suite)
    w_suite = max(len(r.suite) for r in results)
    w_name = max(len(r.name) for r in results)
    all_ok = True
    for r in results:
        all_ok &= r.passed
        note = f"  ({r.note})" if r.note else ""
        print(f"{r.suite:<{w_suite}}  {r.name:<{w_name}}  "
              f"measured {r.value:<12.4g} tol {r.tolerance:<10.3g} "
              f"{_status(r.passed)}{note}")
    n_pass = sum(r.passed for r in results)
    print(f"\n{n_pass}/{len(results)} checks passed")
    return EXIT_OK if all_ok else EXIT_VERIFY_FAILED


def cmd_sweep(args) -> int:
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"--values: {exc}") from exc
    if not values:
        raise ConfigError("--values: at least one value is required")
    values = sorted(values)

    path = args.config if args.config is not None else bundled_scenario_path()
    base = load_scenario(path)
    args.out.mkdir(parents=True, exist_ok=True)

    rows = []
    worst = EXIT_OK
    for v in values:
        if args.param == "dt":
            scn = replace(base, dt=v)
        else:
            g = base.gains
            gains = Gains(kp=v if args.param == "kp" else g.kp,
                          kd=v if args.param == "kd" else g.kd,
                          h=v if args.param == "h" else g.h)
            scn = replace(base, gains=gains)
        run_dir = args.out / f"{args.param}_{v:g}"
        run_dir.mkdir(parents=True, exist_ok=True)
        log, m = simulate(scn)
        write_trajectory_csv(log, run_dir / "trajectory.csv")
        write_metrics_json(m, run_dir / "metrics.json")
        rows.append((v, m))
        if log.status == "diverged":
            worst = EXIT_DIVERGED
        print(f"{args.param}={v:g}: settling {m.settling_time:.3f} s, "
              f"sse {m.steady_state_error:.4g} m, peak u {m.peak_torque:.4g}, "
              f"status {m.status}")

    table = args.out / "sweep.csv"
    with table.open("w") as fh:
        fh.write(f"{args.param},settling_time,steady_state_error,peak_torque,"
                 "min_abs_det_j,dissipation_defect,status\n")
        for v, m in rows:
            fh.write(f"{v:.17g},{m.settling_time:.17g},"
                     f"{m.steady_state_error:.17g},{m.peak_torque:.17g},"
                     f"{m.min_abs_det_j:.17g},{m.dissipation_defect:.17g},"
                     f"{m.status}\n")
    print(f"wrote {table}")
    return worst


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "verify":
            return cmd_verify(args)
        return cmd_sweep(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
