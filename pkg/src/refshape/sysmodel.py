"""Discrete-time linear state-space models and their simulation.

    x[k+1] = A x[k] + B u[k]
    F[k]   = C x[k]

States, inputs and outputs are kept as 2-D arrays with time along the
first axis, so a trajectory of a 3-state single-input model has
``states.shape == (N + 1, 3)`` and ``inputs.shape == (N, 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DimensionError(ValueError):
    """Raised when array shapes do not agree with the model."""


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _as_matrix(name: str, M) -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2:
        raise DimensionError(f"{name} must be a matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} contains non-finite entries")
    return M


def as_samples(values, width: int, name: str = "values") -> np.ndarray:
    """Coerce a sequence of scalars or vectors into an (N, width) array."""
    a = np.asarray(values, dtype=float)
    if a.ndim == 1 and width == 1:
        a = a.reshape(-1, 1)
    elif a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[1] != width:
        raise DimensionError(
            f"{name} must have {width} component(s) per sample, got shape {a.shape}"
        )
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def as_vector(value, size: int, name: str = "vector") -> np.ndarray:
    v = np.asarray(value, dtype=float).reshape(-1)
    if v.shape != (size,):
        raise DimensionError(f"{name} must have dimension {size}, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    return v


@dataclass(frozen=True)
class StateSpace:
    """Discrete LTI model with sample time ``dt`` in seconds."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    dt: float

    def __post_init__(self):
        A = _as_matrix("A", self.A)
        B = _as_matrix("B", self.B)
        C = _as_matrix("C", self.C)
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise DimensionError(f"B must have {n} rows, got {B.shape}")
        if C.shape[1] != n:
            raise DimensionError(f"C must have {n} columns, got {C.shape}")
        dt = float(self.dt)
        if not (np.isfinite(dt) and dt > 0):
            raise ValueError(f"dt must be a positive finite number, got {self.dt!r}")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "B", _frozen(B))
        object.__setattr__(self, "C", _frozen(C))
        object.__setattr__(self, "dt", dt)

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.B.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class Trajectory:
    """Simulated state, input and output sequences.

    ``states`` and ``outputs`` hold N + 1 samples (k = 0..N); ``inputs``
    holds the N inputs applied in between.
    """

    states: np.ndarray
    inputs: np.ndarray
    outputs: np.ndarray
    dt: float

    def __post_init__(self):
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        inputs = np.asarray(self.inputs, dtype=float)
        outputs = np.atleast_2d(np.asarray(self.outputs, dtype=float))
        if inputs.ndim == 1:
            inputs = inputs.reshape(-1, 1)
        if len(states) != len(outputs) or len(states) != len(inputs) + 1:
            raise DimensionError(
                f"inconsistent lengths: {len(states)} states, {len(inputs)} inputs, "
                f"{len(outputs)} outputs"
            )
        object.__setattr__(self, "states", _frozen(states))
        object.__setattr__(self, "inputs", _frozen(inputs))
        object.__setattr__(self, "outputs", _frozen(outputs))
        object.__setattr__(self, "dt", float(self.dt))

    def __len__(self) -> int:
        """Number of steps N."""
        return len(self.inputs)

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.states)) * self.dt

    def output_residual(self, sys: StateSpace) -> float:
        """Largest deviation of ``outputs`` from ``C @ states``."""
        return float(np.max(np.abs(self.outputs - self.states @ sys.C.T)))


@dataclass(frozen=True)
class ReferenceProfile:
    """Sampled force reference, one p-vector per step (newtons).

    Sample k is the reference commanded over [k*dt, (k+1)*dt).
    """

    values: np.ndarray
    dt: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if values.ndim != 2 or len(values) < 1:
            raise DimensionError(f"reference needs at least one sample, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("reference contains non-finite values")
        dt = float(self.dt)
        if not (np.isfinite(dt) and dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "dt", dt)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def duration(self) -> float:
        return len(self) * self.dt

    def tracking_target(self) -> np.ndarray:
        """Desired outputs for k = 0..N, holding the last sample at k = N."""
        return np.vstack([self.values, self.values[-1:]])

    @classmethod
    def step(cls, initial: float, final: float, step_time: float, horizon: float,
             dt: float) -> "ReferenceProfile":
        """Scalar step from ``initial`` to ``final`` at ``step_time`` seconds."""
        n = int(round(horizon / dt))
        k_step = int(round(step_time / dt))
        if n < 1 or not 0 <= k_step <= n:
            raise ValueError(f"invalid step: horizon={horizon}, step_time={step_time}, dt={dt}")
        values = np.full(n, float(initial))
        values[k_step:] = float(final)
        return cls(values, dt)


def simulate(sys: StateSpace, x0, inputs) -> Trajectory:
    """Open-loop response of ``sys`` from ``x0`` under an input sequence."""
    x = as_vector(x0, sys.n_states, "x0")
    u = np.asarray(inputs, dtype=float)
    if u.size == 0:
        u = u.reshape(0, sys.n_inputs)
    u = as_samples(u, sys.n_inputs, "inputs")
    states = np.empty((len(u) + 1, sys.n_states))
    states[0] = x
    for k in range(len(u)):
        states[k + 1] = sys.A @ states[k] + sys.B @ u[k]
    return Trajectory(states, u, states @ sys.C.T, sys.dt)


def spectral_radius(M) -> float:
    """Largest eigenvalue magnitude of a square matrix."""
    M = _as_matrix("M", M)
    if M.shape[0] != M.shape[1]:
        raise DimensionError(f"spectral radius needs a square matrix, got {M.shape}")
    return float(np.max(np.abs(np.linalg.eigvals(M))))
