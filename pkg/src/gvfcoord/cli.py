"""Command-line runner: execute scenario files, validate them, run oracles.

Exit codes: 0 run completed and every scenario-declared tolerance held;
2 tolerance violation; 3 simulation aborted (degeneracy, divergence,
collision); 4 invalid scenario document.  The last line on stdout is always
a machine-readable JSON object describing the outcome.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from . import oracles, plots, scenario_io, sim
from .errors import ScenarioValidationError, SimulationError

EXIT_OK = 0
EXIT_TOLERANCE = 2
EXIT_SIMULATION = 3
EXIT_INVALID = 4


def _json_default(obj):
    import numpy as np

    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _emit(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True, default=_json_default))


def _cmd_run(args) -> int:
    try:
        scenario = scenario_io.load_scenario(args.scenario)
    except ScenarioValidationError as err:
        _emit({"status": "invalid", "violations": err.violations})
        return EXIT_INVALID
    except (OSError, json.JSONDecodeError) as err:
        _emit({"status": "invalid", "violations": [f"document: {err}"]})
        return EXIT_INVALID

    overrides = {}
    if args.dt is not None:
        overrides["dt"] = args.dt
    if args.t_end is not None:
        overrides["t_end"] = args.t_end
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        try:
            scenario = dataclasses.replace(scenario, **overrides)
        except ValueError as err:
            _emit({"status": "invalid", "violations": [f"overrides: {err}"]})
            return EXIT_INVALID

    out_dir = args.out or os.path.join("out", scenario.name)
    os.makedirs(out_dir, exist_ok=True)

    try:
        trace = sim.run(scenario)
    except SimulationError as err:
        payload = {"status": "simulation_error", "reason": str(err),
                   "error_type": type(err).__name__}
        t = getattr(err, "t", None)
        if t is not None:
            payload["t"] = t
        _emit(payload)
        return EXIT_SIMULATION

    written = []
    if scenario.outputs.trace:
        trace_path = os.path.join(out_dir, "trace.csv")
        sim.export_csv(trace, trace_path)
        written.append(trace_path)
    if scenario.outputs.plots and not args.no_plots:
        written.extend(plots.emit_plots(trace, scenario, out_dir))

    summary = sim.summarize(trace, scenario.tolerances)
    violations = []
    tol = scenario.tolerances
    if tol is not None:
        if tol.phi_final is not None and summary["final_phi_max"] > tol.phi_final:
            violations.append(
                f"final_phi_max {summary['final_phi_max']:.6g} > {tol.phi_final:.6g}")
        if tol.coord_final is not None and summary["final_coord_max"] > tol.coord_final:
            violations.append(
                f"final_coord_max {summary['final_coord_max']:.6g} > {tol.coord_final:.6g}")
    status = "ok" if not violations else "tolerance_violation"
    payload = {"status": status, "scenario": scenario.name, "summary": summary,
               "outputs": written}
    if violations:
        payload["violations"] = violations
    if scenario.outputs.summary:
        summary_path = os.path.join(out_dir, "summary.json")
        with open(summary_path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        written.append(summary_path)
    _emit(payload)
    return EXIT_OK if not violations else EXIT_TOLERANCE


def _cmd_validate(args) -> int:
    try:
        scenario = scenario_io.load_scenario(args.scenario)
    except ScenarioValidationError as err:
        _emit({"status": "invalid", "violations": err.violations})
        return EXIT_INVALID
    except (OSError, json.JSONDecodeError) as err:
        _emit({"status": "invalid", "violations": [f"document: {err}"]})
        return EXIT_INVALID
    _emit({"status": "ok", "scenario": scenario.name,
           "robots": scenario.graph.n_nodes, "mode": scenario.mode})
    return EXIT_OK


def _cmd_oracle(args) -> int:
    names = sorted(oracles.ORACLES) if args.name == "all" else [args.name]
    all_ok = True
    results = {}
    for name in names:
        try:
            result = oracles.run_oracle(name)
        except ValueError as err:
            _emit({"status": "invalid", "violations": [str(err)]})
            return EXIT_INVALID
        results[name] = result
        all_ok &= bool(result.get("pass", False))
    _emit({"status": "ok" if all_ok else "oracle_failure", "results": results})
    return EXIT_OK if all_ok else EXIT_TOLERANCE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gvfcoord",
        description="coordinated path-following simulation runner")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario file")
    p_run.add_argument("scenario", help="path to a scenario JSON document")
    p_run.add_argument("--out", help="output directory (default out/<name>)")
    p_run.add_argument("--dt", type=float, help="override the integration step")
    p_run.add_argument("--t-end", type=float, dest="t_end",
                       help="override the duration")
    p_run.add_argument("--seed", type=int, help="override the RNG seed")
    p_run.add_argument("--no-plots", action="store_true",
                       help="skip SVG plot emission")
    p_run.set_defaults(func=_cmd_run)

    p_val = sub.add_parser("validate", help="validate a scenario file")
    p_val.add_argument("scenario", help="path to a scenario JSON document")
    p_val.set_defaults(func=_cmd_validate)

    p_or = sub.add_parser("oracle", help="run a named verification oracle")
    p_or.add_argument("name", choices=sorted(oracles.ORACLES) + ["all"],
                      help="oracle name")
    p_or.set_defaults(func=_cmd_oracle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
