"""Command-line front end.

Exit codes: 0 ok/stable, 1 unstable or marginal, 2 invalid input,
3 numerical failure. Data goes to files (or stdout where noted); human
summaries to stdout; diagnostics to stderr.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from predcacc import _backend
from predcacc.core import (
    ScenarioConfig,
    ScenarioError,
    load_scenario_file,
    scenario_to_dict,
)
from predcacc.numerics import NumericalError
from predcacc.simlab import (
    TimeSeriesLog,
    response_metrics,
    run_platoon_sim,
    run_reference_closed_loop,
)
from predcacc.stability import (
    SCAN_AXES,
    LoopParams,
    experiment_params,
    gain_scan,
    stability_report,
)

REPORT_SCHEMA_VERSION = 1

EXIT_OK, EXIT_UNSTABLE, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, code: int, message: str) -> None:
        super().__init__(message)
        self.code = code


def _load(path) -> ScenarioConfig:
    try:
        return load_scenario_file(path)
    except OSError as exc:
        raise CliError(EXIT_INVALID, f"cannot read scenario: {exc}") from None
    except ScenarioError as exc:
        raise CliError(EXIT_INVALID, str(exc)) from None


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(EXIT_INVALID, f"cannot create output directory: {exc}") from None
    return out


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def follower_params(cfg: ScenarioConfig, i: int) -> LoopParams:
    p, g = cfg.vehicles[i], cfg.gains[i - 1]
    return LoopParams(tau=p.tau, phi=p.phi, headway=p.headway, kp=g.kp, kd=g.kd, ts=cfg.ts)


def _verdicts(cfg: ScenarioConfig) -> dict:
    out = {}
    for i in range(1, len(cfg.vehicles)):
        rep = stability_report(follower_params(cfg, i), cfg.controllers[i - 1])
        out[f"veh{i}"] = {k: rep[k] for k in ("controller", "spectral_radius", "verdict", "dimension")}
    return out


def _simulate(cfg: ScenarioConfig) -> TimeSeriesLog:
    try:
        return run_platoon_sim(cfg)
    except NumericalError as exc:
        raise CliError(EXIT_NUMERICAL, str(exc)) from None


def cmd_simulate(args) -> int:
    cfg = _load(args.scenario)
    out = _out_dir(args.out)
    t0 = time.perf_counter()
    log = _simulate(cfg)
    log_path = out / "log.csv"
    log.write_csv(log_path)
    try:
        verdicts = _verdicts(cfg)
    except NumericalError as exc:
        raise CliError(EXIT_NUMERICAL, str(exc)) from None
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "scenario": scenario_to_dict(cfg),
        "metrics": response_metrics(log),
        "stability": verdicts,
        "outputs": [str(log_path)],
        "samples": len(log),
        "backend": _backend.NAME,
        "wall_clock_s": time.perf_counter() - t0,
    }
    report_path = out / "report.json"
    report["outputs"].append(str(report_path))
    _write_json(report_path, report)
    print(f"simulated {cfg.duration:g} s, {len(cfg.vehicles)} vehicles, {len(log)} samples -> {log_path}")
    for name, m in report["metrics"].items():
        print(f"  {name}: peak|x1|={m['peak_abs_x1']:.6g} peak|x3|={m['peak_abs_x3']:.6g} "
              f"at t={m['time_peak_abs_x3']:.4g} s, {verdicts[name]['verdict']}")
    return EXIT_OK


def _loop_params_from_args(args) -> list[tuple[str, LoopParams, str]]:
    if args.scenario:
        cfg = _load(args.scenario)
        return [(f"veh{i}", follower_params(cfg, i), cfg.controllers[i - 1])
                for i in range(1, len(cfg.vehicles))]
    base = experiment_params()
    tau = base.tau if args.tau is None else args.tau
    kp = base.kp if args.kp is None else args.kp
    p = LoopParams(
        tau=tau,
        phi=base.phi if args.phi is None else args.phi,
        headway=base.headway if args.headway is None else args.headway,
        kp=kp,
        kd=0.7 - kp * tau if args.kd is None else args.kd,
        ts=base.ts if args.ts is None else args.ts,
    )
    for name in ("tau", "headway", "ts"):
        if not getattr(p, name) > 0:
            raise CliError(EXIT_INVALID, f"{name} must be positive")
    if p.phi < 0:
        raise CliError(EXIT_INVALID, "phi must be nonnegative")
    try:
        p.timing
    except ValueError as exc:
        raise CliError(EXIT_INVALID, str(exc)) from None
    return [("veh1", p, args.controller)]


def cmd_stability(args) -> int:
    entries = _loop_params_from_args(args)
    reports = {}
    for name, p, controller in entries:
        try:
            reports[name] = stability_report(p, controller)
        except NumericalError as exc:
            raise CliError(EXIT_NUMERICAL, str(exc)) from None
    doc = {"schema_version": REPORT_SCHEMA_VERSION, "reports": reports}
    if args.out:
        _write_json(_out_dir(args.out) / "stability.json", doc)
    if args.json:
        print(json.dumps(doc, indent=2))
    else:
        for name, rep in reports.items():
            print(f"{name}: {rep['controller']} controller, A_cl {rep['dimension']}x{rep['dimension']}, "
                  f"spectral radius {rep['spectral_radius']:.12f} -> {rep['verdict']}")
            for re, im in rep["eigenvalues"]:
                print(f"  {re:+.12e} {im:+.12e}j  |{math.hypot(re, im):.12f}|")
    return EXIT_OK if all(r["stable"] for r in reports.values()) else EXIT_UNSTABLE


def parse_grid(specs: list[str]) -> dict:
    """``name=start:stop:count`` (inclusive linspace) or ``name=v1,v2,...``."""
    axes = {}
    for spec in specs:
        for part in filter(None, (s.strip() for s in spec.split(";"))):
            name, sep, rhs = part.partition("=")
            name = name.strip()
            if not sep or name not in SCAN_AXES:
                raise CliError(EXIT_INVALID, f"bad grid spec {part!r}; axes are {SCAN_AXES}")
            if name in axes:
                raise CliError(EXIT_INVALID, f"grid axis {name!r} given twice")
            try:
                if ":" in rhs:
                    start, stop, count = rhs.split(":")
                    values = np.linspace(float(start), float(stop), int(count)).tolist()
                else:
                    values = [float(v) for v in rhs.split(",")]
            except ValueError:
                raise CliError(EXIT_INVALID, f"bad grid values in {part!r}") from None
            if not values or not all(math.isfinite(v) for v in values):
                raise CliError(EXIT_INVALID, f"grid axis {name!r} must have finite values")
            axes[name] = values
    if not axes:
        raise CliError(EXIT_INVALID, "at least one --grid axis is required")
    return axes


def cmd_scan(args) -> int:
    axes = parse_grid(args.grid)
    _, base, _ = _loop_params_from_args(args)[0]
    rows = gain_scan(base, axes, workers=args.workers)
    fields = [*axes, "spectral_radius", "stable", "status"]
    if args.out:
        path = _out_dir(args.out) / "scan.csv"
        fh = open(path, "w", encoding="utf-8", newline="")
    else:
        path, fh = None, sys.stdout
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for row in rows:
            writer.writerow([f"{row[k]:.15g}" for k in axes]
                            + [f"{row['spectral_radius']:.15g}", str(row["stable"]).lower(), row["status"]])
    finally:
        if path is not None:
            fh.close()
    if path is not None:
        n_stable = sum(r["stable"] for r in rows)
        print(f"scanned {len(rows)} points ({n_stable} stable) -> {path}")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load(args.scenario)
    out = _out_dir(args.out)
    t0 = time.perf_counter()
    logs = {
        "predictor": _simulate(cfg.with_controllers("predictor")),
        "conventional": _simulate(cfg.with_controllers("conventional")),
    }
    refine = 10
    ts_fine = cfg.ts / refine
    lead = cfg.vehicles[1]
    for kind, key in (("predicted", "reference_predicted"), ("delayed", "reference_delayed")):
        logs[key] = run_reference_closed_loop(
            kind, lead, cfg.gains[0], cfg.initial_errors[0], cfg.leader_profile,
            ts_fine=ts_fine, duration=cfg.duration, log_every=refine,
        )
    paths = []
    metrics = {}
    for key, log in logs.items():
        path = out / f"{key}.csv"
        log.write_csv(path)
        paths.append(str(path))
        metrics[key] = response_metrics(log)
    p_pred = metrics["reference_predicted"]["veh1"]["peak_abs_x3"]
    p_del = metrics["reference_delayed"]["veh1"]["peak_abs_x3"]
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "scenario": scenario_to_dict(cfg),
        "metrics": metrics,
        "peak_x3_ratio_delayed_over_predicted": p_del / p_pred if p_pred > 0 else None,
        "reference_follower": 1,
        "outputs": paths,
        "wall_clock_s": time.perf_counter() - t0,
    }
    _write_json(out / "compare.json", report)
    ratio = report["peak_x3_ratio_delayed_over_predicted"]
    print(f"wrote {len(paths)} logs to {out}")
    for key in logs:
        m = metrics[key]["veh1"]
        print(f"  {key:>15}: peak|x3|={m['peak_abs_x3']:.6g} at t={m['time_peak_abs_x3']:.4g} s")
    print(f"  peak |x3| ratio delayed/predicted: {ratio:.4f}" if ratio is not None else "  ratio undefined")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="predcacc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_params(p):
        p.add_argument("--scenario", help="scenario document (overrides parameter flags)")
        for flag, help_ in (("ts", "sampling time [s]"), ("tau", "driveline time constant [s]"),
                            ("phi", "actuation delay [s]"), ("headway", "time headway [s]"),
                            ("kp", "proportional gain [1/s^2]"),
                            ("kd", "derivative gain [1/s] (default 0.7 - kp*tau)")):
            p.add_argument(f"--{flag}", type=float, help=help_)
        p.add_argument("--controller", choices=("predictor", "conventional"), default="predictor")

    p = sub.add_parser("simulate", help="run a scenario, write log.csv and report.json")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("stability", help="unit-disk test of the lifted closed loop")
    add_params(p)
    p.add_argument("--out", help="also write stability.json here")
    p.add_argument("--json", action="store_true", help="print the JSON report instead of a summary")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("scan", help="stability map over a parameter grid")
    add_params(p)
    p.add_argument("--grid", action="append", required=True,
                   help="axis spec name=start:stop:count or name=v1,v2 (repeatable)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="write scan.csv here (default: stdout)")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("compare", help="predictor vs conventional vs continuous references")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    try:
        return args.func(args)
    except CliError as exc:
        print(f"predcacc {args.command}: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
