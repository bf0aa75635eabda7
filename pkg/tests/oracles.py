"""Reference computations that do not share code paths with the package.

Everything here uses plain Python lists and loops, or the package's
simulator treated as a black box, never the condensed matrices.
"""

from __future__ import annotations

import math

import numpy as np

from refshape.lqr import simulate_closed_loop
from refshape.sysmodel import ReferenceProfile


def gauss_solve(M, b):
    """Solve M x = b by Gaussian elimination with partial pivoting (lists)."""
    n = len(M)
    a = [list(map(float, row)) + [float(bi)] for row, bi in zip(M, b)]
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(a[r][col]))
        if abs(a[piv][col]) < 1e-300:
            raise ZeroDivisionError("singular system")
        a[col], a[piv] = a[piv], a[col]
        for r in range(col + 1, n):
            f = a[r][col] / a[col][col]
            if f:
                for c in range(col, n + 1):
                    a[r][c] -= f * a[col][c]
    x = [0.0] * n
    for r in range(n - 1, -1, -1):
        s = a[r][n] - sum(a[r][c] * x[c] for c in range(r + 1, n))
        x[r] = s / a[r][r]
    return x


def steady_state_oracle(A, B, C, r):
    """[[I - A, -B], [C, 0]] [x; u] = [0; r] solved with ``gauss_solve``."""
    A = np.asarray(A, float)
    B = np.asarray(B, float)
    C = np.asarray(C, float)
    n, m = B.shape
    p = C.shape[0]
    M = []
    for i in range(n):
        M.append([(1.0 if i == j else 0.0) - A[i, j] for j in range(n)] + [-B[i, j] for j in range(m)])
    for i in range(p):
        M.append([C[i, j] for j in range(n)] + [0.0] * m)
    rhs = [0.0] * n + list(np.atleast_1d(r).astype(float))
    sol = gauss_solve(M, rhs)
    return np.array(sol[:n]), np.array(sol[n:])


def scalar_dare_fixed_point(a, b, q, r, tol=1e-12, max_iter=100000):
    """Riccati recursion p <- a^2 p - a^2 b^2 p^2 / (r + b^2 p) + q."""
    p = q
    for _ in range(max_iter):
        p_new = a * a * p - (a * b * p) ** 2 / (r + b * b * p) + q
        if abs(p_new - p) < tol:
            return p_new
        p = p_new
    raise RuntimeError("fixed point did not converge")


def charpoly(M):
    """Characteristic polynomial coefficients (leading 1) by Faddeev-LeVerrier."""
    M = np.asarray(M, float)
    n = len(M)
    coeffs = [1.0]
    Mk = np.zeros_like(M)
    I = np.eye(n)
    for k in range(1, n + 1):
        Mk = M @ Mk + coeffs[-1] * I
        coeffs.append(-np.trace(M @ Mk) / k)
    return coeffs


def poly_roots(coeffs, iters=2000):
    """Durand-Kerner iteration for all roots of a monic polynomial."""
    n = len(coeffs) - 1

    def f(z):
        v = 0j
        for c in coeffs:
            v = v * z + c
        return v

    roots = [(0.4 + 0.9j) ** k for k in range(n)]
    for _ in range(iters):
        new = []
        for i, z in enumerate(roots):
            den = 1 + 0j
            for j, w in enumerate(roots):
                if i != j:
                    den *= z - w
            new.append(z - f(z) / den)
        if max(abs(a - b) for a, b in zip(new, roots)) < 1e-15:
            roots = new
            break
        roots = new
    return roots


def spectral_radius_oracle(M):
    return max(abs(z) for z in poly_roots(charpoly(M)))


def tracking_system(design, refs_values, dt, x0, hold):
    """Affine map c -> stacked F_1..F_N built by probing the simulator.

    The closed loop is affine in the reference, so simulating unit block
    perturbations gives the exact columns.
    """
    r = np.asarray(refs_values, float).reshape(-1)
    N = len(r)
    nb = math.ceil(N / hold)

    def outputs(c):
        v = np.array([c[k // hold] for k in range(N)])
        traj = simulate_closed_loop(design, x0, ReferenceProfile(r + v, dt))
        return traj.outputs[1:, 0]

    base = outputs(np.zeros(nb))
    cols = [outputs(np.eye(nb)[j]) - base for j in range(nb)]
    G = np.column_stack(cols)
    target = np.append(r[1:], r[-1])
    return G, base - target


def normal_equations_oracle(G, e, N, hold, Q_v):
    """argmin |G c + e|^2 + Q_v |D E c|^2 via explicit normal equations."""
    nb = G.shape[1]
    E = [[1.0 if k // hold == j else 0.0 for j in range(nb)] for k in range(N)]
    DE = [[E[k + 1][j] - E[k][j] for j in range(nb)] for k in range(N - 1)]
    H = [[sum(G[i][a] * G[i][b] for i in range(len(G))) +
          Q_v * sum(row[a] * row[b] for row in DE) for b in range(nb)] for a in range(nb)]
    rhs = [-sum(G[i][a] * e[i] for i in range(len(G))) for a in range(nb)]
    return np.array(gauss_solve(H, rhs))


def objective_by_simulation(design, refs_values, dt, x0, hold, Q_v, c):
    r = np.asarray(refs_values, float).reshape(-1)
    N = len(r)
    v = np.array([c[k // hold] for k in range(N)])
    traj = simulate_closed_loop(design, x0, ReferenceProfile(r + v, dt))
    target = np.append(r[1:], r[-1])
    J = float(np.sum((traj.outputs[1:, 0] - target) ** 2))
    return J + Q_v * float(np.sum(np.diff(v) ** 2))
