"""Command-line experiment runner.

Subcommands:
  run       one scenario, one or both engines, metrics to stdout or a file
  sweep     grid of scenarios, long-format CSV (one row per metric)
  validate  fluid vs Monte Carlo agreement check with pass/fail exit status
  plan      print or dump the paging plan for a scenario

Exit codes: 0 success, 1 runtime error, 2 usage or parameter validation
error, 3 validation-suite failure.
"""

from __future__ import annotations

import argparse
import math
import sys

from .config import (SCHEMES, InvalidParameter, ScenarioConfig, derive,
                     load_scenario, validate)
from .ensemble import run_ensemble
from .fluid import run_fluid
from .mc import run_replication
from .metrics import METRIC_COLUMNS, MetricsReport, compute_report
from .paging import build_plan
from .scheduler import schedule

SWEEP_HEADER = "# scptmlab-sweep v1"

# Metrics compared by the validate subcommand.
VALIDATE_METRICS = ("p_access", "d_access_ms", "d_total_ms")


def _fluid_report(config: ScenarioConfig) -> MetricsReport:
    derived = derive(config)
    plan = build_plan(config, derived)
    trace = run_fluid(config, derived, plan)
    sched = schedule(trace, config, derived)
    return compute_report(trace, sched, plan, config, derived)


def _mc_report(config: ScenarioConfig, seed: int) -> MetricsReport:
    derived = derive(config)
    plan = build_plan(config, derived)
    mc = run_replication(config, derived, plan, seed)
    sched = schedule(mc.trace, config, derived)
    return compute_report(mc.trace, sched, plan, config, derived)


def _emit(text: str, out_path: str | None) -> None:
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    else:
        print(text)


# ---------------------------------------------------------------- run -------

def cmd_run(args) -> int:
    config = load_scenario(args.scenario, args.set)
    lines = []
    json_payloads = []
    if args.engine in ("fluid", "both"):
        report = _fluid_report(config)
        lines.append(report.csv_row())
        json_payloads.append(report.to_json())
        _maybe_dump(args, config, "fluid")
    if args.engine in ("mc", "both"):
        if args.reps > 1:
            derived = derive(config)
            plan = build_plan(config, derived)
            result = run_ensemble(config, derived, plan, args.reps, args.seed)
            cells = ["montecarlo-mean"] + [
                f"{result.mean[c]:.10g}" for c in METRIC_COLUMNS]
            lines.append(",".join(cells))
            json_payloads.append(_ensemble_json(result))
        else:
            report = _mc_report(config, args.seed)
            lines.append(report.csv_row())
            json_payloads.append(report.to_json())
            _maybe_dump(args, config, "mc")
    if args.format == "json":
        body = "[\n" + ",\n".join(json_payloads) + "\n]"
    else:
        body = "\n".join([MetricsReport.csv_header()] + lines)
    _emit(body, args.out)
    return 0


def _ensemble_json(result) -> str:
    import json as _json
    return _json.dumps({
        "provenance": "montecarlo-mean",
        "num_replications": result.num_replications,
        "base_seed": result.base_seed,
        **{c: (None if math.isnan(result.mean[c]) else result.mean[c])
           for c in METRIC_COLUMNS},
        "half_ci95": {c: (None if math.isnan(result.half_ci95[c])
                          else result.half_ci95[c]) for c in METRIC_COLUMNS},
    }, indent=2)


def _maybe_dump(args, config: ScenarioConfig, engine: str) -> None:
    derived = derive(config)
    plan = build_plan(config, derived)
    if args.dump_plan:
        plan.dump_csv(args.dump_plan)
    if not (args.dump_trace or args.dump_schedule or args.dump_events):
        return
    if engine == "fluid":
        trace = run_fluid(config, derived, plan)
        mc = None
    else:
        mc = run_replication(config, derived, plan, args.seed)
        trace = mc.trace
    if args.dump_trace:
        trace.dump_csv(args.dump_trace)
    if args.dump_schedule:
        schedule(trace, config, derived).dump_csv(args.dump_schedule)
    if args.dump_events and mc is not None:
        mc.dump_events_csv(args.dump_events)


# -------------------------------------------------------------- sweep -------

def _parse_sweep(spec: str) -> tuple[str, list[str]]:
    key, sep, body = spec.partition("=")
    if not sep or not body:
        raise InvalidParameter(f"sweep spec {spec!r} is not key=values")
    if key == "N":
        key = "num_devices"
    if ":" in body:
        parts = body.split(":")
        if len(parts) != 3:
            raise InvalidParameter(f"range sweep {spec!r} must be key=START:STOP:STEP")
        start, stop, step = (int(p) for p in parts)
        if step <= 0 or stop < start:
            raise InvalidParameter(f"bad sweep range in {spec!r}")
        values = [str(v) for v in range(start, stop + 1, step)]
    else:
        values = body.split(",")
    return key, values


def cmd_sweep(args) -> int:
    key, values = _parse_sweep(args.spec)
    schemes = args.schemes.split(",") if args.schemes else [None]
    engines = ["fluid", "mc"] if args.engine == "both" else [args.engine]
    rows = []
    for value in values:
        for scheme in schemes:
            overrides = list(args.set) + [f"{key}={value}"]
            if scheme is not None:
                overrides.append(f"scheme={scheme}")
            config = load_scenario(args.scenario, overrides)
            for engine in engines:
                if engine == "fluid":
                    vals = _fluid_report(config).values()
                    ci = {c: "" for c in METRIC_COLUMNS}
                elif args.reps > 1:
                    derived = derive(config)
                    plan = build_plan(config, derived)
                    result = run_ensemble(config, derived, plan,
                                          args.reps, args.seed)
                    vals = result.mean
                    ci = {c: f"{result.half_ci95[c]:.10g}"
                          for c in METRIC_COLUMNS}
                else:
                    vals = _mc_report(config, args.seed).values()
                    ci = {c: "" for c in METRIC_COLUMNS}
                for metric in METRIC_COLUMNS:
                    rows.append((value, config.scheme, engine, metric,
                                 f"{vals[metric]:.10g}", ci[metric]))
    lines = [SWEEP_HEADER, f"{key},scheme,engine,metric,value,half_ci95"]
    lines += [",".join(r) for r in rows]
    _emit("\n".join(lines), args.out)
    return 0


# ----------------------------------------------------------- validate -------

def cmd_validate(args) -> int:
    schemes = args.schemes.split(",") if args.schemes else list(SCHEMES)
    failed = False
    lines = []
    for scheme in schemes:
        overrides = list(args.set) + [f"scheme={scheme}"]
        config = load_scenario(args.scenario, overrides)
        fluid_vals = _fluid_report(config).values()
        derived = derive(config)
        plan = build_plan(config, derived)
        result = run_ensemble(config, derived, plan, args.reps, args.seed)
        for metric in VALIDATE_METRICS:
            f_val = fluid_vals[metric]
            m_val = result.mean[metric]
            half = result.half_ci95[metric]
            rel = abs(f_val - m_val) / abs(f_val) if f_val != 0 else abs(m_val)
            in_ci = abs(f_val - m_val) <= half
            ok = rel <= args.tolerance or in_ci
            failed |= not ok
            lines.append(
                f"{'PASS' if ok else 'FAIL'} {scheme} {metric}: "
                f"fluid={f_val:.6g} mc={m_val:.6g} (+/- {half:.3g}) "
                f"rel={rel:.4f} tol={args.tolerance}")
    body = "\n".join(lines)
    _emit(body, args.out)
    return 3 if failed else 0


# --------------------------------------------------------------- plan -------

def cmd_plan(args) -> int:
    config = load_scenario(args.scenario, args.set)
    derived = derive(config)
    plan = build_plan(config, derived)
    if args.out:
        plan.dump_csv(args.out)
        return 0
    print(f"scheme={plan.scheme} subgroups={plan.num_subgroups} "
          f"devices={plan.num_devices}")
    for q, (vf, n) in enumerate(zip(plan.paging_vfs, plan.group_sizes)):
        print(f"  subgroup {q + 1}: {n} devices paged at VF {vf}")
    return 0


# ------------------------------------------------------------- parser -------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("scenario", help="path to a JSON scenario file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a scenario parameter (repeatable)")
    p.add_argument("--out", default=None, help="write output to this file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scptmlab",
        description="Group-paging and SC-PTM multicast performance laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario and report metrics")
    _add_common(p)
    p.add_argument("--engine", choices=("fluid", "mc", "both"), default="fluid")
    p.add_argument("--reps", type=int, default=1,
                   help="Monte Carlo replications (mc engine)")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--dump-trace", default=None, metavar="PATH")
    p.add_argument("--dump-schedule", default=None, metavar="PATH")
    p.add_argument("--dump-plan", default=None, metavar="PATH")
    p.add_argument("--dump-events", default=None, metavar="PATH",
                   help="per-device event log (mc engine only)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a parameter sweep, long-format CSV")
    _add_common(p)
    p.add_argument("spec", help="sweep spec, e.g. N=100:500:100 or scheme=SP,GP")
    p.add_argument("--schemes", default=None,
                   help="comma-separated schemes to cross with the sweep")
    p.add_argument("--engine", choices=("fluid", "mc", "both"), default="fluid")
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate",
                       help="compare fluid and Monte Carlo metric estimates")
    _add_common(p)
    p.add_argument("--schemes", default=None,
                   help="comma-separated schemes (default: all four)")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--tolerance", type=float, default=0.05)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("plan", help="show the paging plan for a scenario")
    _add_common(p)
    p.set_defaults(func=cmd_plan)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except InvalidParameter as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
