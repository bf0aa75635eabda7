"""Scenario files: one YAML document per experiment.

Example::

    name: paper_step
    system:
      dt: 0.01
      A: [[...], [...], [...]]     # row-major
      B: [[...], [...], [...]]
      C: [[...]]
    weights:
      Q: [[...], [...], [...]]
      R: [[0.00995]]
    reference:                     # exactly one of: step, values, path+schedule
      step: {initial: -3.0, final: -5.0, time: 0.5, horizon: 4.0}
    x0: steady_state               # or an explicit state vector
    qp:
      Q_v: 1.0e-3
      hold_lengths: [1, 2, 5]
      bounds:                      # [min, max]; null leaves a side open
        u: [0.0, 30.0]
        r: [-8.0, 0.0]
    toolpath: {start: [0, 0], direction: [1, 0], speed: 20.0}
    outputs: out/paper_step
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .gcode import ForceSchedule, PrintPath, schedule_to_reference
from .lqr import LqrWeights
from .refopt import BoxBounds
from .sysmodel import ReferenceProfile, StateSpace


class ScenarioError(ValueError):
    """Invalid scenario; ``where`` is the dotted path of the offending field."""

    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


@dataclass(frozen=True)
class Scenario:
    name: str
    system: StateSpace
    weights: LqrWeights
    reference: ReferenceProfile
    path: PrintPath
    x0: np.ndarray | None
    Q_v: float
    hold_lengths: tuple[int, ...]
    bounds: BoxBounds
    outputs: str | None = None
    source: str | None = None
    extra: dict = field(default_factory=dict)


def bundled_names() -> list[str]:
    root = resources.files("refshape") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def resolve_path(name_or_path: str) -> Path | None:
    """A filesystem path, or the bundled scenario of that name."""
    p = Path(name_or_path)
    if p.exists():
        return p
    if name_or_path in bundled_names():
        return Path(str(resources.files("refshape") / "scenarios" / f"{name_or_path}.yaml"))
    return None


def load(name_or_path: str) -> Scenario:
    path = resolve_path(name_or_path)
    if path is None:
        raise ScenarioError("<file>", f"no scenario file or bundled scenario named {name_or_path!r}")
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ScenarioError("<file>", f"not valid YAML: {exc}") from None
    return from_dict(doc, source=str(path))


def _get(doc, key, where, required=True, default=None):
    if not isinstance(doc, dict):
        raise ScenarioError(where, "expected a mapping")
    if key not in doc or doc[key] is None:
        if required:
            raise ScenarioError(f"{where}.{key}".lstrip("."), "missing required field")
        return default
    return doc[key]


def _matrix(value, where) -> np.ndarray:
    try:
        M = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ScenarioError(where, "expected a numeric matrix (list of rows)") from None
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.ndim != 2:
        raise ScenarioError(where, f"expected a matrix, got {M.ndim}-D array")
    if not np.all(np.isfinite(M)):
        raise ScenarioError(where, "contains non-finite entries")
    return M


def _number(value, where, positive=False, nonneg=False) -> float:
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise ScenarioError(where, f"expected a number, got {value!r}") from None
    if not math.isfinite(x):
        raise ScenarioError(where, "must be finite")
    if positive and x <= 0:
        raise ScenarioError(where, "must be positive")
    if nonneg and x < 0:
        raise ScenarioError(where, "must be nonnegative")
    return x


def _bound_side(value, where, fill):
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        return [fill if v is None else _number(v, f"{where}[{i}]") for i, v in enumerate(value)]
    return _number(value, where)


def _bounds(doc, where) -> BoxBounds:
    if doc is None:
        return BoxBounds.default()
    if not isinstance(doc, dict):
        raise ScenarioError(where, "expected a mapping of u/r/x to [min, max]")
    kwargs = {}
    for key in doc:
        if key not in ("u", "r", "x"):
            raise ScenarioError(f"{where}.{key}", "unknown bound (use u, r or x)")
    for key in ("u", "r", "x"):
        pair = doc.get(key)
        if pair is None:
            continue
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise ScenarioError(f"{where}.{key}", "expected [min, max]")
        lo = _bound_side(pair[0], f"{where}.{key}[0]", -math.inf)
        hi = _bound_side(pair[1], f"{where}.{key}[1]", math.inf)
        if lo is not None and hi is not None and np.any(np.asarray(lo) > np.asarray(hi)):
            raise ScenarioError(f"{where}.{key}", "minimum exceeds maximum")
        kwargs[f"{key}_min"] = lo
        kwargs[f"{key}_max"] = hi
    return BoxBounds(**kwargs)


def _path(doc, where) -> PrintPath:
    points = _get(doc, "points", where)
    speed = _get(doc, "speed", where, required=False)
    speeds = _get(doc, "speeds", where, required=False)
    if (speed is None) == (speeds is None):
        raise ScenarioError(where, "give exactly one of speed or speeds")
    try:
        pts = [(float(p[0]), float(p[1])) for p in points]
    except (TypeError, ValueError, IndexError):
        raise ScenarioError(f"{where}.points", "expected a list of [x, y] pairs") from None
    spd = _number(speed, f"{where}.speed", positive=True) if speed is not None else [
        _number(v, f"{where}.speeds[{i}]", positive=True) for i, v in enumerate(speeds)]
    z = _number(_get(doc, "z", where, required=False, default=0.0), f"{where}.z")
    try:
        return PrintPath.polyline(pts, spd, z)
    except ValueError as exc:
        raise ScenarioError(where, str(exc)) from None


def _line_for(refs: ReferenceProfile, doc, where) -> PrintPath:
    doc = doc or {}
    start = doc.get("start", [0.0, 0.0])
    direction = np.asarray(doc.get("direction", [1.0, 0.0]), dtype=float)
    speed = _number(doc.get("speed", 20.0), f"{where}.speed", positive=True)
    norm = float(np.linalg.norm(direction))
    if direction.shape != (2,) or norm == 0:
        raise ScenarioError(f"{where}.direction", "expected a nonzero [dx, dy]")
    length = speed * refs.duration
    end = np.asarray(start, dtype=float) + direction / norm * length
    z = _number(doc.get("z", 0.0), f"{where}.z")
    return PrintPath.polyline([start, end], speed, z)


def from_dict(doc, source: str | None = None) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("<root>", "scenario must be a mapping")
    name = str(doc.get("name") or (Path(source).stem if source else "scenario"))

    sysdoc = _get(doc, "system", "")
    dt = _number(_get(sysdoc, "dt", "system"), "system.dt", positive=True)
    mats = {k: _matrix(_get(sysdoc, k, "system"), f"system.{k}") for k in "ABC"}
    try:
        system = StateSpace(mats["A"], mats["B"], mats["C"], dt)
    except ValueError as exc:
        raise ScenarioError("system", str(exc)) from None

    wdoc = _get(doc, "weights", "")
    try:
        weights = LqrWeights(_matrix(_get(wdoc, "Q", "weights"), "weights.Q"),
                             _matrix(_get(wdoc, "R", "weights"), "weights.R"))
    except ValueError as exc:
        raise ScenarioError("weights", str(exc)) from None
    if weights.Q.shape != system.A.shape:
        raise ScenarioError("weights.Q", f"must be {system.n_states}x{system.n_states}")
    if weights.R.shape != (system.n_inputs, system.n_inputs):
        raise ScenarioError("weights.R", f"must be {system.n_inputs}x{system.n_inputs}")

    rdoc = _get(doc, "reference", "")
    if not isinstance(rdoc, dict):
        raise ScenarioError("reference", "expected a mapping")
    sources = [k for k in ("step", "values", "path") if rdoc.get(k) is not None]
    if len(sources) != 1:
        raise ScenarioError("reference", "specify exactly one of step, values or path+schedule")
    if "schedule" in rdoc and sources != ["path"]:
        raise ScenarioError("reference.schedule", "a schedule needs a path")
    kind = sources[0]
    if kind == "step":
        s = rdoc["step"]
        try:
            refs = ReferenceProfile.step(
                _number(_get(s, "initial", "reference.step"), "reference.step.initial"),
                _number(_get(s, "final", "reference.step"), "reference.step.final"),
                _number(_get(s, "time", "reference.step"), "reference.step.time", nonneg=True),
                _number(_get(s, "horizon", "reference.step"), "reference.step.horizon",
                        positive=True),
                dt)
        except ValueError as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError("reference.step", str(exc)) from None
        path = _line_for(refs, doc.get("toolpath"), "toolpath")
    elif kind == "values":
        try:
            refs = ReferenceProfile(np.asarray(rdoc["values"], dtype=float), dt)
        except (TypeError, ValueError) as exc:
            raise ScenarioError("reference.values", str(exc)) from None
        path = _line_for(refs, doc.get("toolpath"), "toolpath")
    else:
        path = _path(rdoc["path"], "reference.path")
        sched = _get(rdoc, "schedule", "reference")
        try:
            schedule = ForceSchedule.from_pairs((float(e[0]), float(e[1])) for e in sched)
            refs = schedule_to_reference(schedule, path, dt)
        except (TypeError, ValueError, IndexError) as exc:
            raise ScenarioError("reference.schedule", str(exc)) from None
    if refs.width != system.n_outputs:
        raise ScenarioError("reference", f"must have {system.n_outputs} channel(s)")

    x0doc = doc.get("x0", "steady_state")
    if x0doc == "steady_state":
        x0 = None
    else:
        try:
            x0 = np.asarray(x0doc, dtype=float).reshape(-1)
        except (TypeError, ValueError):
            raise ScenarioError("x0", "expected 'steady_state' or a state vector") from None
        if x0.shape != (system.n_states,):
            raise ScenarioError("x0", f"must have {system.n_states} entries")

    qdoc = doc.get("qp") or {}
    Q_v = _number(qdoc.get("Q_v", 1e-3), "qp.Q_v", nonneg=True)
    holds = qdoc.get("hold_lengths", [1, 2, 5])
    if not isinstance(holds, (list, tuple)) or not holds:
        raise ScenarioError("qp.hold_lengths", "expected a nonempty list of integers")
    for i, h in enumerate(holds):
        if not isinstance(h, int) or isinstance(h, bool) or h < 1:
            raise ScenarioError(f"qp.hold_lengths[{i}]", "must be an integer >= 1")
    bounds = _bounds(qdoc.get("bounds"), "qp.bounds")

    return Scenario(name=name, system=system, weights=weights, reference=refs, path=path,
                    x0=x0, Q_v=Q_v, hold_lengths=tuple(holds), bounds=bounds,
                    outputs=doc.get("outputs"), source=source,
                    extra={"notes": doc.get("notes")})
