"""LQR force control and closed-loop reference shaping for extrusion printing."""

from .gcode import (
    ForceSchedule,
    GcodeError,
    GcodeProgram,
    PrintPath,
    Segment,
    emit_gcode,
    parse_gcode,
    schedule_to_reference,
    space_to_time,
)
from .lqr import (
    DareError,
    LqrDesign,
    LqrWeights,
    SingularTargetError,
    SteadyStateTarget,
    closed_loop_step,
    simulate_closed_loop,
    solve_dare,
    steady_state_target,
)
from .metrics import MetricsReport, rmse, settling_time
from .refopt import (
    BoxBounds,
    QPStatus,
    RefOptProblem,
    RefOptResult,
    condense,
    expand_blocks,
    solve,
)
from .sysmodel import ReferenceProfile, StateSpace, Trajectory, simulate, spectral_radius

__version__ = "0.1.0"
