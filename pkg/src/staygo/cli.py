"""Command-line entry point: ``staygo gen-trace|run|summarize|plot-data``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .events import TraceFormatError
from .harness import (
    ResultTable,
    Scenario,
    ScenarioError,
    emit_plot_data,
    scenario_traces,
    run_scenario,
    summarize,
    write_summary,
)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _load_scenario(args) -> Scenario:
    scenario = Scenario.load(args.scenario)
    if getattr(args, "seed", None) is not None:
        scenario.seeds = [args.seed]
    if getattr(args, "timesteps", None) is not None:
        if args.timesteps < 0:
            raise ScenarioError("--timesteps must be >= 0")
        scenario.timesteps = args.timesteps
    if getattr(args, "strict_formula", False):
        scenario.strict_formula = True
    return scenario


def cmd_gen_trace(args) -> int:
    scenario = _load_scenario(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seq = scenario.sequence()
    seq.to_json(out / "sequence.json")
    scenario_traces(scenario, seq, out / "traces")
    print(f"wrote {len(scenario.seeds)} trace(s) for sequence {seq.sequence_id} to {out / 'traces'}")
    return EXIT_OK


def cmd_run(args) -> int:
    scenario = _load_scenario(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table = run_scenario(scenario, trace_dir=out / "traces")
    table.to_csv(out / "results.csv")
    write_summary(summarize(table), out / "summary.csv")
    (out / "scenario.json").write_text(json.dumps(scenario.to_dict(), indent=1, sort_keys=True) + "\n")
    print(f"wrote {len(table.rows)} rows to {out / 'results.csv'}")
    _print_summary(summarize(table))
    return EXIT_OK


def _print_summary(summary: dict) -> None:
    print(f"{'method':<14} {'max inc':>9} {'median inc':>11} {'max opp':>8} {'median opp':>11}")
    for meth in sorted(summary):
        s = summary[meth]
        if s is None:
            print(f"{meth:<14} no data")
            continue
        ri, od = s["relative_increase"], s["opposite_decisions"]
        print(f"{meth:<14} {ri['max']:>8.2%} {ri['median']:>10.2%} {od['max']:>8.2f} {od['median']:>11.2f}")


def cmd_summarize(args) -> int:
    table = ResultTable.from_csv(args.results)
    summary = summarize(table)
    _print_summary(summary)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        write_summary(summary, Path(args.out) / "summary.csv")
    return EXIT_OK


def cmd_plot_data(args) -> int:
    table = ResultTable.from_csv(args.results)
    files = emit_plot_data(table, args.out)
    print(f"wrote {len(files)} files to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="staygo", description="Stay-or-go decision experiments for survey drones.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-trace", help="sample and store the event traces of a scenario")
    g.add_argument("--scenario", required=True)
    g.add_argument("--seed", type=int, help="only this seed (overrides the scenario's list)")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_trace)

    r = sub.add_parser("run", help="run every method of a scenario and write results")
    r.add_argument("--scenario", required=True)
    r.add_argument("--seed", type=int, help="only this seed (overrides the scenario's list)")
    r.add_argument("--out", required=True, help="output directory; traces found in OUT/traces are reused")
    r.add_argument("--timesteps", type=int, help="RL training budget per mission")
    r.add_argument("--strict-formula", action="store_true", help="use the closed-form mission time instead of the timeline")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("summarize", help="max/median of a results file")
    s.add_argument("--results", required=True)
    s.add_argument("--out", help="also write summary.csv here")
    s.set_defaults(func=cmd_summarize)

    d = sub.add_parser("plot-data", help="series and box-summary files for plotting")
    d.add_argument("--results", required=True)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_plot_data)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ScenarioError, FileNotFoundError) as exc:
        print(f"staygo: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TraceFormatError, ValueError, OSError) as exc:
        print(f"staygo: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
