"""Command-line driver: validate scenarios, run periods, run experiments.

Usage:
    powertalk validate <scenario.yaml>
    powertalk run <scenario.yaml> [--seed S] [--out DIR]
    powertalk exp {quantization,detection,cost} --scenario <scenario.yaml>
                  [--out DIR] [--seed S] [--trials N]

Outputs are CSV tables plus matching gnuplot command files.  The output
directory resolves as --out, else $POWERTALK_OUTDIR, else ./powertalk_out.
Failures print one JSON line on stderr with a machine-readable category
(``parse``, ``validation``, ``runtime``) and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .errors import ParseError, PowerTalkError, ValidationError
from .experiments import (experiment_cost_tradeoff, experiment_detection,
                          experiment_quantization, gnuplot_script,
                          run_scenario_period, summary_table, trace_table,
                          write_table)
from .scenario import load_scenario

EXPERIMENTS = {
    "quantization": experiment_quantization,
    "detection": experiment_detection,
    "cost": experiment_cost_tradeoff,
}


def _out_dir(args) -> Path:
    if args.out:
        return Path(args.out)
    env = os.environ.get("POWERTALK_OUTDIR")
    return Path(env) if env else Path("powertalk_out")


def _cmd_validate(args) -> int:
    scenario = load_scenario(args.scenario)
    print(f"ok: scenario '{scenario.name}' with {scenario.microgrid.num_ders} DERs "
          f"in {scenario.microgrid.num_types} types on "
          f"{scenario.microgrid.num_buses} bus(es)")
    return 0


def _cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    trace = run_scenario_period(scenario, seed=args.seed)
    out = _out_dir(args)
    trace_path = write_table(trace_table(trace), out / "period_trace.csv")
    summary_path = write_table(summary_table(trace), out / "period_summary.csv")
    print(f"wrote {trace_path} and {summary_path}")
    print(f"period cost {trace.outcome.period_cost!r} "
          f"({trace.detection_errors}/{trace.detection_decisions} slot errors)")
    return 0


def _cmd_exp(args) -> int:
    scenario = load_scenario(args.scenario)
    table = EXPERIMENTS[args.experiment](scenario, trials=args.trials,
                                         seed=args.seed)
    out = _out_dir(args)
    csv_path = write_table(table, out / f"{args.experiment}.csv")
    gp_path = out / f"{args.experiment}.gp"
    gp_path.write_text(gnuplot_script(table, csv_path.name), encoding="utf-8")
    print(f"wrote {csv_path} and {gp_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="powertalk",
        description="DC microgrid droop-signaling and dispatch simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a scenario file")
    p.add_argument("scenario")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("run", help="run one dispatch period and dump its trace")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("exp", help="run one of the bundled experiments")
    p.add_argument("experiment", choices=sorted(EXPERIMENTS))
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--trials", type=int, default=None)
    p.set_defaults(func=_cmd_exp)
    return parser


def _fail(category: str, exc: Exception) -> int:
    print(json.dumps({"error": {"category": category, "message": str(exc)}}),
          file=sys.stderr)
    return 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        return _fail("parse", exc)
    except ValidationError as exc:
        return _fail("validation", exc)
    except PowerTalkError as exc:
        return _fail("runtime", exc)


if __name__ == "__main__":
    sys.exit(main())
