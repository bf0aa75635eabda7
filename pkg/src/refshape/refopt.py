"""Closed-loop reference shaping.

Given a desired force profile r and a fixed LQR tracking loop, find a
perturbation v so that commanding r' = r + v makes the closed-loop
force follow r as closely as possible:

    minimize   sum_{k=1..N} |F_k - r_k|^2 + Q_v sum_{k=0..N-2} |v_{k+1} - v_k|^2

subject to the closed-loop dynamics and box limits on u, r' and x.  The
perturbation is held constant over blocks of ``hold`` samples, so the
decision variables are one value per block.  Because the loop is linear
and the steady-state targets are linear in r', every trajectory quantity
is affine in the block values and the problem condenses to a small
dense QP.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lqr import LqrDesign, steady_state_target, target_gains
from .qp import QPStatus, solve_qp
from .sysmodel import DimensionError, ReferenceProfile, StateSpace, Trajectory, as_vector

__all__ = [
    "AffineMap",
    "BoxBounds",
    "CondensedProblem",
    "QPStatus",
    "RefOptProblem",
    "RefOptResult",
    "ReferenceProfile",
    "block_count",
    "condense",
    "expand_blocks",
    "expansion_matrix",
    "solve",
]

FEAS_TOL = 1e-9


def block_count(N: int, hold: int) -> int:
    return math.ceil(N / hold)


def expand_blocks(c, N: int, hold: int) -> np.ndarray:
    """Zero-order hold of block values: ``out[k] = c[k // hold]``."""
    if hold < 1:
        raise ValueError(f"hold length must be >= 1, got {hold}")
    c = np.asarray(c, dtype=float)
    if c.ndim == 1:
        c = c.reshape(-1, 1)
    if len(c) != block_count(N, hold):
        raise ValueError(
            f"expected {block_count(N, hold)} block values for N={N}, hold={hold}; got {len(c)}")
    return c[np.arange(N) // hold]


def expansion_matrix(N: int, hold: int, width: int = 1) -> np.ndarray:
    """Matrix E with ``vec(v) = E @ vec(c)`` (time-major vectorization)."""
    nb = block_count(N, hold)
    E = np.zeros((N, nb))
    E[np.arange(N), np.arange(N) // hold] = 1.0
    return np.kron(E, np.eye(width))


@dataclass(frozen=True)
class BoxBounds:
    """Axis-aligned limits; ``None`` or +/-inf leaves a side unbounded.

    Scalars broadcast over all components.
    """

    u_min: object = None
    u_max: object = None
    r_min: object = None
    r_max: object = None
    x_min: object = None
    x_max: object = None

    @classmethod
    def default(cls, u_max: float = 30.0) -> "BoxBounds":
        return cls(u_min=0.0, u_max=u_max, r_min=-8.0, r_max=0.0)

    @staticmethod
    def _side(value, size, fill):
        if value is None:
            return np.full(size, fill)
        a = np.broadcast_to(np.asarray(value, dtype=float), (size,)).copy()
        a[np.isnan(a)] = fill
        return a

    def resolve(self, n: int, m: int, p: int) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        out = {}
        for key, size in (("u", m), ("r", p), ("x", n)):
            lo = self._side(getattr(self, f"{key}_min"), size, -np.inf)
            hi = self._side(getattr(self, f"{key}_max"), size, np.inf)
            if np.any(lo > hi):
                raise ValueError(f"{key} bounds: minimum exceeds maximum")
            out[key] = (lo, hi)
        return out


@dataclass(frozen=True)
class RefOptProblem:
    design: LqrDesign
    refs: ReferenceProfile
    Q_v: float = 1e-3
    hold: int = 1
    bounds: BoxBounds = field(default_factory=BoxBounds)
    x0: np.ndarray | None = None

    def __post_init__(self):
        if int(self.hold) != self.hold or self.hold < 1:
            raise ValueError(f"hold length must be a positive integer, got {self.hold}")
        if not (np.isfinite(self.Q_v) and self.Q_v >= 0):
            raise ValueError(f"Q_v must be nonnegative, got {self.Q_v}")
        sys = self.design.sys
        if self.refs.width != sys.n_outputs:
            raise DimensionError("reference width does not match the model outputs")
        if self.x0 is None:
            x0 = steady_state_target(sys, self.refs.values[0]).x_ss
        else:
            x0 = as_vector(self.x0, sys.n_states, "x0")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "hold", int(self.hold))
        object.__setattr__(self, "Q_v", float(self.Q_v))

    @property
    def sys(self) -> StateSpace:
        return self.design.sys

    @property
    def n_blocks(self) -> int:
        return block_count(len(self.refs), self.hold)


@dataclass(frozen=True)
class AffineMap:
    """``value(c) = offset + matrix @ c`` reshaped to ``shape``."""

    matrix: np.ndarray
    offset: np.ndarray
    shape: tuple

    def __call__(self, c) -> np.ndarray:
        return (self.offset + self.matrix @ np.asarray(c, dtype=float)).reshape(self.shape)


@dataclass(frozen=True)
class CondensedProblem:
    """Objective ``0.5 c'Hc + g'c + constant`` and the trajectory maps."""

    H: np.ndarray
    g: np.ndarray
    constant: float
    states: AffineMap
    inputs: AffineMap
    outputs: AffineMap
    r_modified: AffineMap
    v: AffineMap
    target: np.ndarray

    def objective(self, c) -> float:
        c = np.asarray(c, dtype=float)
        return float(0.5 * c @ self.H @ c + self.g @ c + self.constant)

    def gradient(self, c) -> np.ndarray:
        return self.H @ np.asarray(c, dtype=float) + self.g


def condense(problem: RefOptProblem) -> CondensedProblem:
    sys, design = problem.sys, problem.design
    n, m, p = sys.n_states, sys.n_inputs, sys.n_outputs
    N = len(problem.refs)
    nv = problem.n_blocks * p
    E = expansion_matrix(N, problem.hold, p)
    r = problem.refs.values

    Sx, Su = target_gains(sys)
    # u_k = -K x_k + L r'_k
    L = design.K @ Sx + Su
    Acl = sys.A - sys.B @ design.K
    Bcl = sys.B @ L

    Xo = np.empty((N + 1, n))
    Xc = np.empty((N + 1, n, nv))
    Uo = np.empty((N, m))
    Uc = np.empty((N, m, nv))
    Xo[0] = problem.x0
    Xc[0] = 0.0
    for k in range(N):
        Ek = E[k * p:(k + 1) * p]
        Uo[k] = -design.K @ Xo[k] + L @ r[k]
        Uc[k] = -design.K @ Xc[k] + L @ Ek
        Xo[k + 1] = Acl @ Xo[k] + Bcl @ r[k]
        Xc[k + 1] = Acl @ Xc[k] + Bcl @ Ek
    Fo = Xo @ sys.C.T
    Fc = np.einsum("ij,kjv->kiv", sys.C, Xc)

    states = AffineMap(Xc.reshape(-1, nv), Xo.reshape(-1), (N + 1, n))
    inputs = AffineMap(Uc.reshape(-1, nv), Uo.reshape(-1), (N, m))
    outputs = AffineMap(Fc.reshape(-1, nv), Fo.reshape(-1), (N + 1, p))
    v_map = AffineMap(E, np.zeros(N * p), (N, p))
    r_mod = AffineMap(E, r.reshape(-1), (N, p))

    target = problem.refs.tracking_target()
    # Tracking covers k = 1..N; F_0 does not depend on c.
    Gt = Fc[1:].reshape(-1, nv)
    et = (Fo[1:] - target[1:]).reshape(-1)
    H = 2.0 * Gt.T @ Gt
    g = 2.0 * Gt.T @ et
    constant = float(et @ et)
    if N > 1 and problem.Q_v > 0:
        Dt = np.diff(np.eye(N), axis=0)
        DE = np.kron(Dt, np.eye(p)) @ E
        H = H + 2.0 * problem.Q_v * DE.T @ DE
    H = 0.5 * (H + H.T)
    return CondensedProblem(H, g, constant, states, inputs, outputs, r_mod, v_map, target)


@dataclass(frozen=True)
class RefOptResult:
    v: np.ndarray
    r_modified: ReferenceProfile
    predicted: Trajectory
    objective: float
    solver_status: QPStatus
    blocks: np.ndarray
    kkt_residual: float = 0.0
    iterations: int = 0
    message: str = ""

    @property
    def tracking_cost(self) -> float:
        target = self.r_modified.values - self.v
        target = np.vstack([target, target[-1:]])
        e = self.predicted.outputs[1:] - target[1:]
        return float(np.sum(e * e))


def _constraint_rows(problem: RefOptProblem, cond: CondensedProblem):
    """Stack finite bounds as ``lo <= M c <= hi`` with row labels."""
    sys = problem.sys
    limits = problem.bounds.resolve(sys.n_states, sys.n_inputs, sys.n_outputs)
    N = len(problem.refs)
    M_rows, lo_rows, hi_rows, labels = [], [], [], []

    def add(key, amap, steps, first):
        lo, hi = limits[key]
        width = len(lo)
        mask = np.isfinite(lo) | np.isfinite(hi)
        if not mask.any():
            return
        for k in range(steps):
            for i in np.flatnonzero(mask):
                row = (first + k) * width + i
                M_rows.append(amap.matrix[row])
                lo_rows.append(lo[i] - amap.offset[row])
                hi_rows.append(hi[i] - amap.offset[row])
                labels.append(f"{key}[{first + k}][{i}]")

    add("r", cond.r_modified, N, 0)
    add("u", cond.inputs, N, 0)
    add("x", cond.states, N, 1)
    if not M_rows:
        nv = len(cond.g)
        return np.zeros((0, nv)), np.zeros(0), np.zeros(0), []
    return np.array(M_rows), np.array(lo_rows), np.array(hi_rows), labels


def _infeasible_reference_block(problem: RefOptProblem):
    sys = problem.sys
    lo, hi = problem.bounds.resolve(sys.n_states, sys.n_inputs, sys.n_outputs)["r"]
    r = problem.refs.values
    hold = problem.hold
    for j in range(problem.n_blocks):
        seg = r[j * hold:(j + 1) * hold]
        need_lo = np.max(lo - seg, axis=0)
        need_hi = np.min(hi - seg, axis=0)
        bad = np.flatnonzero(need_lo > need_hi + FEAS_TOL)
        if bad.size:
            return (f"reference bound r[{j * hold}][{bad[0]}]: no constant perturbation "
                    f"over block {j} keeps r' inside [{lo[bad[0]]}, {hi[bad[0]]}]")
    return None


def _result(problem, cond, c, status, kkt=0.0, iterations=0, message=""):
    sys = problem.sys
    v = cond.v(c)
    r_mod = ReferenceProfile(problem.refs.values + v, problem.refs.dt)
    states = cond.states(c)
    traj = Trajectory(states, cond.inputs(c), states @ sys.C.T, sys.dt)
    e = traj.outputs[1:] - cond.target[1:]
    J = float(np.sum(e * e))
    if len(v) > 1:
        J += problem.Q_v * float(np.sum(np.diff(v, axis=0) ** 2))
    blocks = np.asarray(c, dtype=float).reshape(problem.n_blocks, sys.n_outputs)
    return RefOptResult(v, r_mod, traj, J, status, blocks, kkt, iterations, message)


def solve(problem: RefOptProblem, *, tol: float = 1e-6, max_iter: int = 50_000) -> RefOptResult:
    """Optimal blocked reference perturbation for a shaping problem."""
    cond = condense(problem)
    nv = len(cond.g)
    sys = problem.sys
    limits = problem.bounds.resolve(sys.n_states, sys.n_inputs, sys.n_outputs)

    lo_x, hi_x = limits["x"]
    x0 = problem.x0
    if np.any(x0 < lo_x - FEAS_TOL) or np.any(x0 > hi_x + FEAS_TOL):
        i = int(np.flatnonzero((x0 < lo_x - FEAS_TOL) | (x0 > hi_x + FEAS_TOL))[0])
        return _result(problem, cond, np.zeros(nv), QPStatus.INFEASIBLE,
                       message=f"state bound x[0][{i}]: initial state lies outside the box")
    reason = _infeasible_reference_block(problem)
    if reason:
        return _result(problem, cond, np.zeros(nv), QPStatus.INFEASIBLE, message=reason)

    M, lo, hi, labels = _constraint_rows(problem, cond)

    # Unconstrained minimum-norm minimizer first; most instances stop here.
    c = -np.linalg.lstsq(cond.H, cond.g, rcond=None)[0]
    Mc = M @ c
    if np.all(Mc >= lo - FEAS_TOL) and np.all(Mc <= hi + FEAS_TOL):
        kkt = float(np.max(np.abs(cond.gradient(c)), initial=0.0))
        return _result(problem, cond, c, QPStatus.OPTIMAL, kkt)

    sol = solve_qp(cond.H, cond.g, M, lo, hi, tol=tol, max_iter=max_iter)
    message = sol.message
    if sol.status is QPStatus.INFEASIBLE and sol.violated_row is not None:
        message = f"constraint {labels[sol.violated_row]} is infeasible: {sol.message}"
        return _result(problem, cond, np.zeros(nv), sol.status, sol.kkt_residual,
                       sol.iterations, message)
    return _result(problem, cond, sol.x, sol.status, sol.kkt_residual, sol.iterations,
                   message)
