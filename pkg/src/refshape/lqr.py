"""LQR synthesis and reference tracking for discrete-time models.

The tracking law drives the state toward the steady-state pair that
realizes the current reference:

    u[k] = -K (x[k] - x_ss[k]) + u_ss[k]

where (x_ss, u_ss) solves ``[[I - A, -B], [C, 0]] @ [x_ss; u_ss] = [0; r]``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .sysmodel import (
    DimensionError,
    ReferenceProfile,
    StateSpace,
    Trajectory,
    _frozen,
    as_vector,
    spectral_radius,
)

DARE_TOL = 1e-12
DARE_MAX_ITER = 10_000
# Acceptance threshold when the doubling iteration stalls above DARE_TOL.
DARE_ACCEPT = 1e-10
SINGULAR_PIVOT = 1e-12


class DareError(RuntimeError):
    """The Riccati iteration failed to reach a stabilizing solution."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


class SingularTargetError(np.linalg.LinAlgError):
    """The steady-state block matrix is singular (transmission zero at z = 1)."""


@dataclass(frozen=True)
class LqrWeights:
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        for name, M in (("Q", Q), ("R", R)):
            if M.ndim != 2 or M.shape[0] != M.shape[1]:
                raise DimensionError(f"{name} must be square, got {M.shape}")
            if not np.all(np.isfinite(M)):
                raise ValueError(f"{name} contains non-finite entries")
            if np.max(np.abs(M - M.T)) > 1e-12:
                raise ValueError(f"{name} is not symmetric")
        if np.min(np.linalg.eigvalsh(Q)) < -1e-12:
            raise ValueError("Q must be positive semidefinite")
        if np.min(np.linalg.eigvalsh(R)) <= 0:
            raise ValueError("R must be positive definite")
        object.__setattr__(self, "Q", _frozen(Q))
        object.__setattr__(self, "R", _frozen(R))


@dataclass(frozen=True)
class LqrDesign:
    P: np.ndarray
    K: np.ndarray
    weights: LqrWeights
    sys: StateSpace

    @property
    def closed_loop(self) -> np.ndarray:
        """State matrix A - B K of the regulated system."""
        return self.sys.A - self.sys.B @ self.K

    def residual(self) -> float:
        return dare_residual(self.sys, self.weights, self.P)


@dataclass(frozen=True)
class SteadyStateTarget:
    x_ss: np.ndarray
    u_ss: np.ndarray
    r: np.ndarray


def dare_rhs(sys: StateSpace, w: LqrWeights, P: np.ndarray) -> np.ndarray:
    A, B = sys.A, sys.B
    BtPA = B.T @ P @ A
    return A.T @ P @ A - BtPA.T @ np.linalg.solve(w.R + B.T @ P @ B, BtPA) + w.Q


def dare_residual(sys: StateSpace, w: LqrWeights, P: np.ndarray) -> float:
    """Frobenius norm of ``P - rhs(P)``."""
    return float(np.linalg.norm(P - dare_rhs(sys, w, P)))


def lqr_gain(sys: StateSpace, w: LqrWeights, P: np.ndarray) -> np.ndarray:
    """K = (R + B'PB)^-1 B'PA."""
    B = sys.B
    return np.linalg.solve(w.R + B.T @ P @ B, B.T @ P @ sys.A)


def _newton_refine(sys, w, P):
    # One Hewer step: P <- solution of the closed-loop Lyapunov equation.
    K = lqr_gain(sys, w, P)
    Acl = sys.A - sys.B @ K
    n = Acl.shape[0]
    rhs = w.Q + K.T @ w.R @ K
    lhs = np.eye(n * n) - np.kron(Acl.T, Acl.T)
    Pn = np.linalg.solve(lhs, rhs.reshape(-1)).reshape(n, n)
    return 0.5 * (Pn + Pn.T)


def _check_dims(sys: StateSpace, w: LqrWeights):
    if w.Q.shape != (sys.n_states, sys.n_states):
        raise DimensionError(f"Q must be {sys.n_states}x{sys.n_states}, got {w.Q.shape}")
    if w.R.shape != (sys.n_inputs, sys.n_inputs):
        raise DimensionError(f"R must be {sys.n_inputs}x{sys.n_inputs}, got {w.R.shape}")


def solve_dare(sys: StateSpace, w: LqrWeights, tol: float = DARE_TOL,
               max_iter: int = DARE_MAX_ITER) -> LqrDesign:
    """Stabilizing DARE solution by the structure-preserving doubling algorithm.

    Iterates on (A_k, G_k, H_k) starting from (A, B R^-1 B', Q); H_k
    converges quadratically to P when (A, B) is stabilizable.  Stops once
    the Riccati residual falls below ``tol * max(1, |P|_F)``.
    """
    _check_dims(sys, w)
    n = sys.n_states
    I = np.eye(n)
    Ak = sys.A.copy()
    Gk = sys.B @ np.linalg.solve(w.R, sys.B.T)
    Hk = w.Q.copy()

    best_P, best_res = None, np.inf

    def scaled_residual(P):
        return dare_residual(sys, w, P) / max(1.0, float(np.linalg.norm(P)))

    with np.errstate(over="ignore", invalid="ignore"):
        for it in range(max_iter):
            W = I + Gk @ Hk
            try:
                WinvA = np.linalg.solve(W, Ak)
                WinvG = np.linalg.solve(W, Gk)
            except np.linalg.LinAlgError:
                break
            H_next = Hk + Ak.T @ Hk @ WinvA
            G_next = Gk + Ak @ WinvG @ Ak.T
            A_next = Ak @ WinvA
            if not (np.all(np.isfinite(H_next)) and np.all(np.isfinite(G_next))
                    and np.all(np.isfinite(A_next))):
                break
            H_next = 0.5 * (H_next + H_next.T)
            G_next = 0.5 * (G_next + G_next.T)
            res = scaled_residual(H_next)
            if res < best_res:
                best_P, best_res = H_next, res
            if res <= tol:
                break
            step = np.linalg.norm(H_next - Hk)
            Ak, Gk, Hk = A_next, G_next, H_next
            if step <= 1e-15 * max(1.0, np.linalg.norm(Hk)):
                break

    if best_P is None:
        raise DareError("Riccati doubling diverged before producing an iterate")

    if best_res > tol:
        try:
            P = best_P
            for _ in range(3):
                P = _newton_refine(sys, w, P)
                res = scaled_residual(P)
                if res < best_res:
                    best_P, best_res = P, res
                if res <= tol:
                    break
        except np.linalg.LinAlgError:
            pass
    if not np.isfinite(best_res) or best_res > DARE_ACCEPT:
        raise DareError(
            f"DARE did not converge: scaled residual {best_res:.3e} "
            f"exceeds {DARE_ACCEPT:.0e}", residual=best_res)

    P = best_P
    K = lqr_gain(sys, w, P)
    rho = spectral_radius(sys.A - sys.B @ K)
    if rho >= 1.0:
        raise DareError(
            f"Riccati solution is not stabilizing: spectral radius {rho:.6f}",
            residual=best_res)
    return LqrDesign(_frozen(P), _frozen(K), w, sys)


def _target_matrix(sys: StateSpace) -> np.ndarray:
    n, m, p = sys.n_states, sys.n_inputs, sys.n_outputs
    if m != p:
        raise DimensionError(
            f"steady-state targets need as many inputs as outputs (m={m}, p={p})")
    return np.block([
        [np.eye(n) - sys.A, -sys.B],
        [sys.C, np.zeros((p, m))],
    ])


def target_factor(sys: StateSpace):
    """Pivoted LU of the steady-state block matrix, checked for singularity."""
    M = _target_matrix(sys)
    with warnings.catch_warnings():
        # exact zero pivots are reported below
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(M, check_finite=False)
    limit = SINGULAR_PIVOT * np.max(np.abs(M))
    if np.min(np.abs(np.diag(lu))) < limit:
        raise SingularTargetError(
            "steady-state matrix [[I-A, -B], [C, 0]] is singular: the system has a "
            "zero at z = 1 and cannot hold arbitrary constant references")
    return lu, piv


def target_gains(sys: StateSpace) -> tuple[np.ndarray, np.ndarray]:
    """Matrices (Sx, Su) with x_ss = Sx r and u_ss = Su r."""
    n, p = sys.n_states, sys.n_outputs
    rhs = np.vstack([np.zeros((n, p)), np.eye(p)])
    S = scipy.linalg.lu_solve(target_factor(sys), rhs)
    return S[:n], S[n:]


def steady_state_target(sys: StateSpace, r) -> SteadyStateTarget:
    r = as_vector(r, sys.n_outputs, "reference")
    rhs = np.concatenate([np.zeros(sys.n_states), r])
    sol = scipy.linalg.lu_solve(target_factor(sys), rhs)
    n = sys.n_states
    return SteadyStateTarget(_frozen(sol[:n]), _frozen(sol[n:]), _frozen(r))


def closed_loop_step(design: LqrDesign, x, target: SteadyStateTarget):
    """Apply the tracking law once; returns ``(u, x_next)``."""
    sys = design.sys
    x = as_vector(x, sys.n_states, "x")
    if target.x_ss.shape != (sys.n_states,) or target.u_ss.shape != (sys.n_inputs,):
        raise DimensionError("steady-state target does not match the model")
    u = -design.K @ (x - target.x_ss) + target.u_ss
    return u, sys.A @ x + sys.B @ u


def simulate_closed_loop(design: LqrDesign, x0, refs: ReferenceProfile) -> Trajectory:
    """Closed-loop response to a reference profile, retargeting every step."""
    sys = design.sys
    if refs.width != sys.n_outputs:
        raise DimensionError(
            f"reference has {refs.width} channel(s), model has {sys.n_outputs} output(s)")
    N = len(refs)
    states = np.empty((N + 1, sys.n_states))
    inputs = np.empty((N, sys.n_inputs))
    states[0] = as_vector(x0, sys.n_states, "x0")
    for k in range(N):
        target = steady_state_target(sys, refs.values[k])
        inputs[k], states[k + 1] = closed_loop_step(design, states[k], target)
    return Trajectory(states, inputs, states @ sys.C.T, sys.dt)


def quadratic_cost(traj: Trajectory, w: LqrWeights) -> float:
    """Sum of x'Qx + u'Ru over the N input steps (k = 0..N-1)."""
    X = traj.states[:-1]
    U = traj.inputs
    return float(np.einsum("ki,ij,kj->", X, w.Q, X) + np.einsum("ki,ij,kj->", U, w.R, U))
