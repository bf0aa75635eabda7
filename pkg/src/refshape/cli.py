"""Command line interface.

    refshape run <scenario> [--out DIR] [--nh 1,2,5] [--qv 1e-3]
    refshape gcode <scenario> [--out DIR] [--nh ...] [--qv ...]
    refshape verify-fixture [scenario]
    refshape metrics <trace.csv> <ref.csv>

Exit codes: 0 success, 1 usage error, 2 solver failure, 3 invalid scenario.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import scenario as scenario_mod
from .gcode import GcodeError
from .lqr import DareError, SingularTargetError
from .metrics import format_csv, format_table, report
from .pipeline import load_trace, run_scenario, verify_fixture

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_SCENARIO = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _holds(text: str) -> list[int]:
    try:
        holds = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not holds or any(h < 1 for h in holds):
        raise argparse.ArgumentTypeError("hold lengths must be integers >= 1")
    return holds


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="refshape", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name, help_ in (("run", "run a scenario: traces, metrics and G-code"),
                        ("gcode", "emit G-code for a scenario only")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("scenario", help="scenario file or bundled scenario name")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--nh", type=_holds, help="comma-separated hold lengths")
        p.add_argument("--qv", type=float, help="smoothness weight Q_v")

    p = sub.add_parser("verify-fixture", help="recompute the LQR gain of the bundled model")
    p.add_argument("scenario", nargs="?", help="take A, B, Q, R from this scenario instead")

    p = sub.add_parser("metrics", help="RMSE and settling time of a trace against a reference")
    p.add_argument("trace", type=Path)
    p.add_argument("reference", type=Path)
    return parser


def _out_dir(args, scen) -> Path:
    if args.out is not None:
        return args.out
    if scen.outputs:
        return Path(scen.outputs)
    return Path("out") / scen.name


def _cmd_run(args, gcode_only=False) -> int:
    try:
        scen = scenario_mod.load(args.scenario)
    except scenario_mod.ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    out = _out_dir(args, scen)
    try:
        result = run_scenario(scen, out, holds=args.nh, Q_v=args.qv,
                              write_traces=not gcode_only)
    except (DareError, SingularTargetError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    if not gcode_only:
        print(result.table(), end="")
    for run in result.runs:
        if run.optimization is not None and run.status.value != "optimal":
            print(f"{run.label}: solver status {run.status.value}: {run.optimization.message}",
                  file=sys.stderr)
    print(f"wrote {len(result.files)} file(s) to {out}")
    return EXIT_OK if result.ok else EXIT_SOLVER


def _cmd_verify(args) -> int:
    if args.scenario:
        try:
            scen = scenario_mod.load(args.scenario)
        except scenario_mod.ScenarioError as exc:
            print(f"invalid scenario: {exc}", file=sys.stderr)
            return EXIT_SCENARIO
        checks = verify_fixture(scen.system, scen.weights)
    else:
        checks = verify_fixture()
    for c in checks:
        print(c.line())
    return EXIT_OK


def _reference_column(cols: dict) -> np.ndarray:
    for name in ("r_F", "r", "reference"):
        if name in cols:
            return cols[name]
    numeric = [k for k in cols if k not in ("k", "t")]
    if len(numeric) == 1:
        return cols[numeric[0]]
    raise ValueError("reference file needs an r_F column")


def _cmd_metrics(args) -> int:
    try:
        trace = load_trace(args.trace)
        ref = _reference_column(load_trace(args.reference))
        F = trace["F"]
    except (OSError, KeyError, ValueError) as exc:
        print(f"cannot read inputs: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if len(ref) == len(F) - 1:
        ref = np.append(ref, ref[-1])
    if len(ref) != len(F):
        print(f"length mismatch: {len(F)} trace rows vs {len(ref)} reference rows",
              file=sys.stderr)
        return EXIT_USAGE
    t = trace.get("t")
    dt = float(t[1] - t[0]) if t is not None and len(t) > 1 else 1.0
    rep = report(args.trace.stem, F, ref, dt)
    print(format_table([rep]), end="")
    print(format_csv([rep]), end="")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "gcode":
            return _cmd_run(args, gcode_only=True)
        if args.command == "verify-fixture":
            return _cmd_verify(args)
        if args.command == "metrics":
            return _cmd_metrics(args)
    except GcodeError as exc:
        print(f"G-code error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
