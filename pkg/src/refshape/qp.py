"""Dense convex QP solver for small problems with two-sided linear bounds.

    minimize    0.5 x'Hx + g'x
    subject to  lo <= A x <= hi

Operator splitting in the style of OSQP: ADMM on the split ``z = A x``
with per-row penalties, periodic penalty adaptation, a primal
infeasibility certificate, and an active-set polishing step that
recovers a high-accuracy solution once the active constraints are
identified.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg


class QPStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    MAX_ITERATIONS = "max_iterations"
    INFEASIBLE = "infeasible"


@dataclass
class QPSolution:
    x: np.ndarray
    y: np.ndarray
    status: QPStatus
    iterations: int
    kkt: dict = field(default_factory=dict)
    violated_row: int | None = None
    message: str = ""

    @property
    def kkt_residual(self) -> float:
        return max(self.kkt.values()) if self.kkt else float("inf")


def kkt_residuals(H, g, A, lo, hi, x, y) -> dict:
    """Primal feasibility, stationarity and complementarity (max norms)."""
    Ax = A @ x
    prim = np.max(np.maximum(lo - Ax, 0.0), initial=0.0)
    prim = max(prim, np.max(np.maximum(Ax - hi, 0.0), initial=0.0))
    dual = np.max(np.abs(H @ x + g + A.T @ y), initial=0.0)
    yp = np.maximum(y, 0.0)
    yn = np.minimum(y, 0.0)
    with np.errstate(invalid="ignore"):
        upper = np.where(yp > 0, yp * np.abs(hi - Ax), 0.0)
        lower = np.where(yn < 0, -yn * np.abs(Ax - lo), 0.0)
    compl = max(np.max(upper, initial=0.0), np.max(lower, initial=0.0))
    return {"primal": float(prim), "dual": float(dual), "complementarity": float(compl)}


def _unconstrained(H, g):
    # Minimum-norm minimizer; H is symmetric PSD.
    return -np.linalg.lstsq(H, g, rcond=None)[0]


class _Polisher:
    def __init__(self, H, g, A, lo, hi, delta=1e-9, refine=5):
        self.H, self.g, self.A, self.lo, self.hi = H, g, A, lo, hi
        self.delta = delta
        self.refine = refine

    def __call__(self, x, z, y):
        lo_act = (z - self.lo < -y) & np.isfinite(self.lo)
        hi_act = (self.hi - z < y) & np.isfinite(self.hi) & ~lo_act
        rows = np.flatnonzero(lo_act | hi_act)
        b = np.where(lo_act, self.lo, self.hi)[rows]
        n, k = len(x), len(rows)
        Aa = self.A[rows]
        K = np.zeros((n + k, n + k))
        K[:n, :n] = self.H
        K[:n, n:] = Aa.T
        K[n:, :n] = Aa
        rhs = np.concatenate([-self.g, b])
        reg = K.copy()
        reg[:n, :n] += self.delta * np.eye(n)
        reg[n:, n:] -= self.delta * np.eye(k)
        try:
            fac = scipy.linalg.lu_factor(reg, check_finite=False)
        except (ValueError, np.linalg.LinAlgError):
            return None
        sol = scipy.linalg.lu_solve(fac, rhs)
        for _ in range(self.refine):
            sol = sol + scipy.linalg.lu_solve(fac, rhs - K @ sol)
        y_new = np.zeros_like(y)
        y_new[rows] = sol[n:]
        return sol[:n], y_new


def solve_qp(H, g, A=None, lo=None, hi=None, *, tol: float = 1e-6,
             primal_tol: float = 1e-9, max_iter: int = 50_000, rho: float = 0.1,
             sigma: float = 1e-6, alpha: float = 1.6, check_every: int = 25,
             eps_infeasible: float = 1e-7) -> QPSolution:
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    nx = len(g)
    H = 0.5 * (H + H.T)
    if A is None or len(A) == 0:
        x = _unconstrained(H, g)
        A0 = np.zeros((0, nx))
        e = np.zeros(0)
        return QPSolution(x, e, QPStatus.OPTIMAL, 0,
                          kkt_residuals(H, g, A0, e, e, x, e))
    A = np.asarray(A, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(lo > hi):
        i = int(np.flatnonzero(lo > hi)[0])
        return QPSolution(np.zeros(nx), np.zeros(len(lo)), QPStatus.INFEASIBLE, 0,
                          violated_row=i, message=f"row {i}: lower bound exceeds upper bound")

    # Row equilibration.  Rows with zero norm are constant constraints.
    norms = np.linalg.norm(A, axis=1)
    const_rows = norms == 0
    if np.any(const_rows & ((lo > 0) | (hi < 0))):
        i = int(np.flatnonzero(const_rows & ((lo > 0) | (hi < 0)))[0])
        return QPSolution(np.zeros(nx), np.zeros(len(lo)), QPStatus.INFEASIBLE, 0,
                          violated_row=i, message=f"row {i}: constant constraint violated")
    keep = np.flatnonzero(~const_rows)
    D = 1.0 / norms[keep]
    As = A[keep] * D[:, None]
    los = lo[keep] * D
    his = hi[keep] * D
    cost = max(1.0, float(np.max(np.abs(H)))) if H.size else 1.0
    Hs = H / cost
    gs = g / cost

    m = len(keep)
    eq = np.isclose(los, his, rtol=0, atol=1e-12)
    polish = _Polisher(H, g, A[keep], lo[keep], hi[keep])

    def rho_vec(r):
        return np.where(eq, 1e3 * r, r)

    def factor(r):
        M = Hs + sigma * np.eye(nx) + As.T @ (rho_vec(r)[:, None] * As)
        return scipy.linalg.cho_factor(M, check_finite=False)

    x = np.clip(_unconstrained(Hs, gs), -1e12, 1e12)
    z = np.clip(As @ x, los, his)
    y = np.zeros(m)
    fac = factor(rho)
    rv = rho_vec(rho)
    best = None

    def full_y(ys):
        out = np.zeros(len(lo))
        out[keep] = ys * D * cost
        return out

    def evaluate(xc, yc):
        return kkt_residuals(H, g, A, lo, hi, xc, yc)

    def converged(res):
        return res["primal"] <= primal_tol and max(res.values()) <= tol

    y_prev = y.copy()
    it = 0
    while it < max_iter:
        it += 1
        rhs = sigma * x - gs + As.T @ (rv * z - y)
        x_t = scipy.linalg.cho_solve(fac, rhs)
        z_t = As @ x_t
        x = alpha * x_t + (1 - alpha) * x
        z_relax = alpha * z_t + (1 - alpha) * z
        z_new = np.clip(z_relax + y / rv, los, his)
        y_prev = y
        y = y + rv * (z_relax - z_new)
        z = z_new

        if it % check_every:
            continue

        # Primal infeasibility certificate on the scaled problem.
        dy = y - y_prev
        ndy = np.max(np.abs(dy), initial=0.0)
        if ndy > 0:
            with np.errstate(invalid="ignore"):
                up = np.where(dy > 0, his * dy, 0.0)
                dn = np.where(dy < 0, los * dy, 0.0)
            support = float(np.sum(up) + np.sum(dn))
            if (np.max(np.abs(As.T @ dy)) <= eps_infeasible * ndy
                    and support < -eps_infeasible * ndy):
                i = int(keep[np.argmax(np.abs(dy))])
                return QPSolution(x, full_y(y), QPStatus.INFEASIBLE, it,
                                  violated_row=i,
                                  message=f"row {i} cannot be satisfied together "
                                          "with the remaining constraints")

        r_prim = np.max(np.abs(As @ x - z))
        r_dual = np.max(np.abs(Hs @ x + gs + As.T @ y))
        yy = full_y(y)
        res = evaluate(x, yy)
        if best is None or max(res.values()) < max(best[2].values()):
            best = (x.copy(), yy, res)
        if converged(res):
            return QPSolution(x, yy, QPStatus.OPTIMAL, it, res)

        if r_prim < 1e-3 and r_dual < 1e-3 or it % (20 * check_every) == 0:
            polished = polish(x, z / D, y * D * cost)
            if polished is not None:
                xp, yp_keep = polished
                yp = np.zeros(len(lo))
                yp[keep] = yp_keep
                pres = evaluate(xp, yp)
                if converged(pres):
                    return QPSolution(xp, yp, QPStatus.OPTIMAL, it, pres)

        # Penalty adaptation.
        scale_p = max(np.max(np.abs(As @ x)), np.max(np.abs(z)), 1e-12)
        scale_d = max(np.max(np.abs(Hs @ x)), np.max(np.abs(As.T @ y)),
                      np.max(np.abs(gs)), 1e-12)
        ratio = np.sqrt((r_prim / scale_p) / max(r_dual / scale_d, 1e-30))
        new_rho = float(np.clip(rho * ratio, 1e-6, 1e6))
        if new_rho > 5 * rho or new_rho < rho / 5:
            rho = new_rho
            rv = rho_vec(rho)
            fac = factor(rho)

    x_b, y_b, res_b = best
    return QPSolution(x_b, y_b, QPStatus.MAX_ITERATIONS, it, res_b,
                      message=f"iteration cap {max_iter} reached; "
                              f"KKT residual {max(res_b.values()):.3e}")
