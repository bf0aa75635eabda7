"""Planar toolpaths, their time sampling, and force-annotated G-code.

Dialect (one statement per line, LF endings)::

    G1 X<mm> Y<mm> F<mm/min>   linear move; the first G1 positions the head
    M700 S<newtons>            force reference, active from the current position
    ; text                     comment

Numbers are written as the shortest decimal string that reads back to
the same double.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .sysmodel import ReferenceProfile

FORCE_CODE = "M700"
ARC_TOL = 1e-9


class GcodeError(ValueError):
    """Malformed program; ``lineno`` is 1-based."""

    def __init__(self, message: str, lineno: int | None = None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


@dataclass(frozen=True)
class Segment:
    start: tuple[float, float]
    end: tuple[float, float]
    speed: float  # mm/s

    @property
    def length(self) -> float:
        return math.hypot(self.end[0] - self.start[0], self.end[1] - self.start[1])

    @property
    def duration(self) -> float:
        return self.length / self.speed

    def point_at(self, s: float) -> tuple[float, float]:
        """Point at arc length ``s`` from the segment start."""
        f = s / self.length
        return (self.start[0] + f * (self.end[0] - self.start[0]),
                self.start[1] + f * (self.end[1] - self.start[1]))


@dataclass(frozen=True)
class PrintPath:
    segments: tuple[Segment, ...]
    z: float = 0.0

    def __post_init__(self):
        segs = tuple(
            s if isinstance(s, Segment)
            else Segment(tuple(map(float, s[0])), tuple(map(float, s[1])), float(s[2]))
            for s in self.segments
        )
        if not segs:
            raise ValueError("path has no segments")
        for i, s in enumerate(segs):
            if not (np.isfinite(s.speed) and s.speed > 0):
                raise ValueError(f"segment {i}: speed must be positive, got {s.speed}")
            if not s.length > 0:
                raise ValueError(f"segment {i} has zero length")
            if i and math.dist(segs[i - 1].end, s.start) > ARC_TOL:
                raise ValueError(f"segment {i} does not start where segment {i - 1} ends")
        object.__setattr__(self, "segments", segs)

    @classmethod
    def polyline(cls, points, speeds, z: float = 0.0) -> "PrintPath":
        pts = [tuple(map(float, p)) for p in points]
        if np.ndim(speeds) == 0:
            speeds = [float(speeds)] * (len(pts) - 1)
        if len(speeds) != len(pts) - 1:
            raise ValueError("need one speed per segment")
        return cls(tuple(Segment(a, b, float(v)) for a, b, v in zip(pts, pts[1:], speeds)), z)

    @property
    def length(self) -> float:
        return float(sum(s.length for s in self.segments))

    @property
    def duration(self) -> float:
        return float(sum(s.duration for s in self.segments))

    @property
    def start(self) -> tuple[float, float]:
        return self.segments[0].start

    def _cumulative(self):
        lengths = np.array([s.length for s in self.segments])
        times = np.array([s.duration for s in self.segments])
        return (np.concatenate([[0.0], np.cumsum(lengths)]),
                np.concatenate([[0.0], np.cumsum(times)]))


@dataclass(frozen=True)
class TimeSampling:
    """Head position and arc length at t_k = k * dt, k = 0..N."""

    times: np.ndarray
    positions: np.ndarray
    arc_length: np.ndarray
    dt: float

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1


def sample_count(duration: float, dt: float) -> int:
    # Guard against ceil(50.000000000001) when duration/dt is integral.
    q = duration / dt
    return max(1, math.ceil(q - 1e-9 * max(1.0, q)))


def space_to_time(path: PrintPath, dt: float) -> TimeSampling:
    """Sample constant-speed motion along ``path`` every ``dt`` seconds."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    arc, tcum = path._cumulative()
    N = sample_count(tcum[-1], dt)
    t = np.minimum(np.arange(N + 1) * dt, tcum[-1])
    idx = np.clip(np.searchsorted(tcum, t, side="right") - 1, 0, len(path.segments) - 1)
    speeds = np.array([s.speed for s in path.segments])[idx]
    s = np.minimum(arc[idx] + speeds * (t - tcum[idx]), arc[idx + 1])
    s[t >= tcum[-1]] = arc[-1]
    pos = np.array([path.segments[i].point_at(si - arc[i]) for i, si in zip(idx, s)])
    return TimeSampling(t, pos, s, float(dt))


@dataclass(frozen=True)
class ForceSchedule:
    """Piecewise-constant force (N) as a function of arc length (mm)."""

    distances: tuple[float, ...]
    forces: tuple[float, ...]

    def __post_init__(self):
        d = tuple(float(x) for x in self.distances)
        f = tuple(float(x) for x in self.forces)
        if not d or len(d) != len(f):
            raise ValueError("schedule needs matching, nonempty distances and forces")
        if d[0] != 0.0:
            raise ValueError("schedule must start at distance 0")
        if any(b <= a for a, b in zip(d, d[1:])):
            raise ValueError("schedule distances must be strictly increasing")
        if not all(math.isfinite(x) and x <= 0 for x in f):
            raise ValueError("schedule forces must be finite and <= 0 (compressive sign)")
        object.__setattr__(self, "distances", d)
        object.__setattr__(self, "forces", f)

    @classmethod
    def from_pairs(cls, pairs) -> "ForceSchedule":
        pairs = list(pairs)
        return cls(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))

    def force_at(self, s: float) -> float:
        i = int(np.searchsorted(np.asarray(self.distances), s + ARC_TOL, side="right")) - 1
        return self.forces[max(i, 0)]


def schedule_to_reference(schedule: ForceSchedule, path: PrintPath, dt: float) -> ReferenceProfile:
    """Force commanded over each sample interval [t_k, t_k+1), k = 0..N-1."""
    if schedule.distances[-1] > path.length + ARC_TOL:
        raise ValueError(
            f"schedule entry at {schedule.distances[-1]} mm lies past the path end "
            f"({path.length} mm)")
    sampling = space_to_time(path, dt)
    values = [schedule.force_at(s) for s in sampling.arc_length[:-1]]
    return ReferenceProfile(np.array(values), dt)


def fmt_number(x: float) -> str:
    x = float(x)
    if x == 0:
        return "0"
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


@dataclass(frozen=True)
class GcodeProgram:
    lines: tuple[str, ...] = field(default_factory=tuple)

    @property
    def text(self) -> str:
        return "".join(line + "\n" for line in self.lines)

    @classmethod
    def from_text(cls, text: str) -> "GcodeProgram":
        return cls(tuple(text.splitlines()))

    def moves(self) -> list[str]:
        return [ln for ln in self.lines if ln.startswith("G1 ")]


def _move(point, speed):
    return f"G1 X{fmt_number(point[0])} Y{fmt_number(point[1])} F{fmt_number(speed * 60.0)}"


def emit_gcode(path: PrintPath, modified: ReferenceProfile, hold: int = 1,
               header: bool = True) -> GcodeProgram:
    """Program that switches force at the position of each value change."""
    if int(hold) != hold or hold < 1:
        raise ValueError(f"hold length must be a positive integer, got {hold}")
    if modified.width != 1:
        raise ValueError("G-code carries a single force channel")
    sampling = space_to_time(path, modified.dt)
    if len(modified) != sampling.n_steps:
        raise ValueError(
            f"reference has {len(modified)} samples but the path spans "
            f"{sampling.n_steps} at dt={modified.dt}")
    values = modified.values[:, 0]
    change = np.flatnonzero(np.concatenate([[True], values[1:] != values[:-1]]))
    events = [(float(sampling.arc_length[k]), float(values[k])) for k in change]
    if any(f > 0 for _, f in events):
        raise ValueError("force references must be <= 0 (compressive sign)")

    lines = []
    if header:
        lines += [
            "; force-controlled planar toolpath",
            f"; dt {fmt_number(modified.dt)} s, hold length {int(hold)} samples",
            f"; z {fmt_number(path.z)} mm",
        ]
    first = path.segments[0]
    lines.append(_move(first.start, first.speed))

    e = 0
    a = 0.0
    for seg in path.segments:
        b = a + seg.length
        while e < len(events) and events[e][0] <= a + ARC_TOL:
            lines.append(f"{FORCE_CODE} S{fmt_number(events[e][1])}")
            e += 1
        while e < len(events) and events[e][0] < b - ARC_TOL:
            lines.append(_move(seg.point_at(events[e][0] - a), seg.speed))
            lines.append(f"{FORCE_CODE} S{fmt_number(events[e][1])}")
            e += 1
        lines.append(_move(seg.end, seg.speed))
        a = b
    if e != len(events):
        raise ValueError("force change beyond the end of the path")
    return GcodeProgram(tuple(lines))


def _parse_words(body: str, lineno: int, allowed: str) -> dict[str, float]:
    words = {}
    for tok in body.split():
        letter, raw = tok[0].upper(), tok[1:]
        if letter not in allowed:
            raise GcodeError(f"unexpected word {tok!r}", lineno)
        if letter in words:
            raise GcodeError(f"duplicate field {letter}", lineno)
        try:
            value = float(raw)
        except ValueError:
            raise GcodeError(f"malformed number in field {letter}: {raw!r}", lineno) from None
        if not math.isfinite(value):
            raise GcodeError(f"non-finite value in field {letter}", lineno)
        words[letter] = value
    return words


def parse_gcode(program, z: float = 0.0) -> tuple[PrintPath, ForceSchedule]:
    """Rebuild the path and force schedule from a program."""
    if isinstance(program, str):
        program = GcodeProgram.from_text(program)
    pos = None
    feed = None
    dist = 0.0
    segments: list[Segment] = []
    schedule: list[tuple[float, float]] = []
    for lineno, raw in enumerate(program.lines, start=1):
        code = raw.split(";", 1)[0].strip()
        if not code:
            continue
        head, _, body = code.partition(" ")
        head = head.upper()
        if head in ("G1", "G01"):
            w = _parse_words(body, lineno, "XYF")
            if "F" in w:
                if w["F"] <= 0:
                    raise GcodeError("feedrate F must be positive", lineno)
                feed = w["F"]
            if pos is None:
                if "X" not in w or "Y" not in w:
                    raise GcodeError("first move must give both X and Y", lineno)
                pos = (w["X"], w["Y"])
                continue
            target = (w.get("X", pos[0]), w.get("Y", pos[1]))
            if feed is None:
                raise GcodeError("move without a feedrate", lineno)
            if target == pos:
                raise GcodeError("zero-length move", lineno)
            if not schedule or schedule[0][0] != 0.0:
                raise GcodeError("force reference not set before the first move", lineno)
            seg = Segment(pos, target, feed / 60.0)
            segments.append(seg)
            dist += seg.length
            pos = target
        elif head == FORCE_CODE:
            w = _parse_words(body, lineno, "S")
            if "S" not in w:
                raise GcodeError(f"{FORCE_CODE} needs an S field", lineno)
            if schedule and schedule[-1][0] == dist:
                schedule[-1] = (dist, w["S"])
            else:
                schedule.append((dist, w["S"]))
        else:
            raise GcodeError(f"unknown statement {head!r}", lineno)
    if not segments:
        raise GcodeError("program contains no motion")
    if schedule[-1][0] >= dist:
        # A trailing force change at the path end has no effect; drop it.
        schedule = schedule[:-1] or schedule
    try:
        return PrintPath(tuple(segments), z), ForceSchedule.from_pairs(schedule)
    except ValueError as exc:
        raise GcodeError(str(exc)) from None
