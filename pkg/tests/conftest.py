import numpy as np
import pytest

from refshape import fixtures
from refshape.lqr import LqrWeights, simulate_closed_loop, solve_dare
from refshape.refopt import QPStatus, solve
from refshape.sysmodel import StateSpace


@pytest.fixture(scope="session")
def extruder_sys():
    return fixtures.extruder_model()


@pytest.fixture(scope="session")
def extruder_design(extruder_sys):
    return solve_dare(extruder_sys, fixtures.extruder_weights())


def random_system(rng, n=3, m=1, p=1, dt=0.01):
    """Controllable single-input system with eigenvalues inside radius 1.2."""
    while True:
        A = rng.normal(size=(n, n))
        A *= rng.uniform(0.3, 1.2) / max(abs(np.linalg.eigvals(A)))
        B = rng.normal(size=(n, m))
        C = rng.normal(size=(p, n))
        ctrb = np.hstack([np.linalg.matrix_power(A, k) @ B for k in range(n)])
        M = np.block([[np.eye(n) - A, -B], [C, np.zeros((p, m))]])
        if (np.linalg.svd(ctrb, compute_uv=False)[-1] > 1e-3
                and np.linalg.svd(M, compute_uv=False)[-1] > 1e-2):
            return StateSpace(A, B, C, dt)


def random_weights(rng, n=3, m=1):
    L = rng.normal(size=(n, n))
    Q = L @ L.T + 0.1 * np.eye(n)
    R = np.diag(rng.uniform(0.1, 2.0, size=m))
    return LqrWeights(Q, R)


def random_design(rng, n=3):
    return solve_dare(random_system(rng, n), random_weights(rng, n))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def assert_prediction_consistent(problem, result, tol=1e-9):
    """The QP's internal trajectory must equal the plain simulator's."""
    sim = simulate_closed_loop(problem.design, problem.x0, result.r_modified)
    np.testing.assert_allclose(result.predicted.states, sim.states, rtol=0, atol=tol)
    np.testing.assert_allclose(result.predicted.inputs, sim.inputs, rtol=0, atol=tol)
    np.testing.assert_allclose(result.predicted.outputs, sim.outputs, rtol=0, atol=tol)


def solve_checked(problem, **kwargs):
    """Solve and check the invariants every result must satisfy."""
    result = solve(problem, **kwargs)
    np.testing.assert_array_equal(result.r_modified.values, problem.refs.values + result.v)
    hold = problem.hold
    for k in range(len(result.v)):
        np.testing.assert_array_equal(result.v[k], result.v[(k // hold) * hold])
    assert_prediction_consistent(problem, result)
    if result.solver_status is QPStatus.OPTIMAL:
        sys = problem.sys
        lim = problem.bounds.resolve(sys.n_states, sys.n_inputs, sys.n_outputs)
        for key, values in (("r", result.r_modified.values), ("u", result.predicted.inputs),
                            ("x", result.predicted.states)):
            lo, hi = lim[key]
            assert np.all(values >= lo - 1e-8), key
            assert np.all(values <= hi + 1e-8), key
    return result


# Filled by test_acceptance.py; printed once at the end of the run.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
