"""End-to-end runs: model -> LQR -> shaped references -> traces, metrics, G-code."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fixtures
from .gcode import emit_gcode
from .lqr import DareError, LqrDesign, LqrWeights, simulate_closed_loop, solve_dare
from .metrics import MetricsReport, format_csv, format_table, report
from .refopt import QPStatus, RefOptProblem, RefOptResult, solve
from .scenario import Scenario
from .sysmodel import ReferenceProfile, StateSpace, Trajectory, spectral_radius

log = logging.getLogger(__name__)


def fmt(x: float) -> str:
    """Shortest decimal that reads back to the same double."""
    return repr(float(x))


@dataclass
class RunResult:
    label: str
    slug: str
    hold: int | None
    reference: ReferenceProfile
    modified: ReferenceProfile
    trajectory: Trajectory
    metrics: MetricsReport
    status: QPStatus
    optimization: RefOptResult | None = None


@dataclass
class ScenarioRun:
    scenario: Scenario
    design: LqrDesign
    runs: list[RunResult]
    files: list[Path] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(r.status is QPStatus.OPTIMAL for r in self.runs)

    def table(self) -> str:
        return format_table([r.metrics for r in self.runs])

    def by_label(self, label: str) -> RunResult:
        return next(r for r in self.runs if r.label == label)


def _columns(name: str, width: int) -> list[str]:
    return [name] if width == 1 else [f"{name}_{i + 1}" for i in range(width)]


def trace_csv(sys: StateSpace, reference: ReferenceProfile, modified: ReferenceProfile,
              traj: Trajectory) -> str:
    """Rows k = 0..N; u and r_F_mod are blank on the final row."""
    target = reference.tracking_target()
    p, m, n = sys.n_outputs, sys.n_inputs, sys.n_states
    header = (["k", "t"] + _columns("r_F", p) + _columns("r_F_mod", p) + _columns("F", p)
              + _columns("u", m) + [f"x_{i + 1}" for i in range(n)])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    N = len(traj)
    for k in range(N + 1):
        last = k == N
        row = [str(k), fmt(k * sys.dt)]
        row += [fmt(v) for v in target[k]]
        row += [""] * p if last else [fmt(v) for v in modified.values[k]]
        row += [fmt(v) for v in traj.outputs[k]]
        row += [""] * m if last else [fmt(v) for v in traj.inputs[k]]
        row += [fmt(v) for v in traj.states[k]]
        w.writerow(row)
    return buf.getvalue()


def load_trace(path, sys: StateSpace | None = None, tol: float = 1e-9) -> dict[str, np.ndarray]:
    """Read a trace CSV into column arrays (blank cells become NaN).

    With ``sys`` given, every row is rechecked for F = C x.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    cols = {name: np.array([float(r[i]) if r[i] != "" else np.nan for r in body])
            for i, name in enumerate(header)}
    if sys is not None:
        X = np.column_stack([cols[f"x_{i + 1}"] for i in range(sys.n_states)])
        F = np.column_stack([cols[c] for c in _columns("F", sys.n_outputs)])
        err = np.max(np.abs(F - X @ sys.C.T))
        if err > tol:
            raise ValueError(f"{path}: F deviates from C x by {err:.3e}")
    return cols


def run_scenario(scenario: Scenario, out_dir=None, holds=None, Q_v=None,
                 write_traces: bool = True, write_gcode: bool = True) -> ScenarioRun:
    """Baseline plus one shaped run per hold length; writes artifacts to ``out_dir``."""
    design = solve_dare(scenario.system, scenario.weights)
    holds = tuple(holds) if holds else scenario.hold_lengths
    q_v = scenario.Q_v if Q_v is None else float(Q_v)
    refs = scenario.reference
    x0 = scenario.x0

    runs = []
    base_problem = RefOptProblem(design, refs, q_v, 1, scenario.bounds, x0)
    x0 = base_problem.x0
    baseline = simulate_closed_loop(design, x0, refs)
    target = refs.tracking_target()
    runs.append(RunResult("r_F", "baseline", None, refs, refs, baseline,
                          report("r_F", baseline.outputs, target, refs.dt), QPStatus.OPTIMAL))

    for h in holds:
        label = f"N_h={h}"
        result = solve(RefOptProblem(design, refs, q_v, h, scenario.bounds, x0))
        if result.solver_status is not QPStatus.OPTIMAL:
            log.warning("%s: solver status %s: %s", label, result.solver_status.value,
                        result.message)
        runs.append(RunResult(label, f"nh{h}", h, refs, result.r_modified, result.predicted,
                              report(label, result.predicted.outputs, target, refs.dt),
                              result.solver_status, result))

    out = ScenarioRun(scenario, design, runs)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for r in runs:
            if write_traces:
                p = out_dir / f"trace_{r.slug}.csv"
                p.write_text(trace_csv(scenario.system, refs, r.modified, r.trajectory))
                out.files.append(p)
            if write_gcode:
                try:
                    prog = emit_gcode(scenario.path, r.modified, r.hold or 1)
                except ValueError as exc:
                    log.warning("%s: no G-code written: %s", r.label, exc)
                else:
                    p = out_dir / f"program_{r.slug}.gcode"
                    p.write_text(prog.text)
                    out.files.append(p)
        if write_traces:
            reports = [r.metrics for r in runs]
            for name, text in (("metrics.csv", format_csv(reports)),
                               ("metrics.txt", format_table(reports))):
                p = out_dir / name
                p.write_text(text)
                out.files.append(p)
    return out


@dataclass
class Check:
    name: str
    ran: bool
    passed: bool
    detail: str

    def line(self) -> str:
        state = "SKIP" if not self.ran else ("PASS" if self.passed else "FAIL")
        return f"[{state}] {self.name}: {self.detail}"


def verify_fixture(sys: StateSpace | None = None, weights: LqrWeights | None = None,
                   expected_gain=fixtures.REPORTED_GAIN, rtol: float = 1e-3) -> list[Check]:
    """Recompute the LQR gain of a model and compare it with a reference gain."""
    sys = sys or fixtures.extruder_model()
    weights = weights or fixtures.extruder_weights()
    checks = []
    try:
        design = solve_dare(sys, weights)
    except DareError as exc:
        checks.append(Check("riccati solution", True, False, str(exc)))
        checks.append(Check("gain matches reference", False, False,
                            "not run: no Riccati solution"))
        checks.append(Check("closed-loop stability", False, False,
                            "not run: no Riccati solution"))
        return checks
    res = design.residual() / max(1.0, float(np.linalg.norm(design.P)))
    checks.append(Check("riccati solution", True, res < 1e-8, f"scaled residual {res:.2e}"))

    expected = np.asarray(expected_gain, dtype=float).reshape(design.K.shape)
    rel = np.abs(design.K - expected) / np.abs(expected)
    checks.append(Check(
        "gain matches reference", True, bool(np.all(rel <= rtol)),
        f"K = {np.array2string(design.K.ravel(), precision=4)}, "
        f"reference {np.array2string(expected.ravel(), precision=4)}, "
        f"max relative error {rel.max():.2e} (tolerance {rtol:g})"))

    rho = spectral_radius(design.closed_loop)
    checks.append(Check("closed-loop stability", True, rho < 1.0,
                        f"spectral radius of A - BK = {rho:.6f}"))
    return checks
