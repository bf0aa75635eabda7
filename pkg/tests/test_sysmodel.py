import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import spectral_radius_oracle
from refshape import fixtures
from refshape.sysmodel import (
    DimensionError,
    ReferenceProfile,
    StateSpace,
    Trajectory,
    simulate,
    spectral_radius,
)

# C·B of the identified model, exact decimal arithmetic on the printed entries.
MODEL_CB = -0.0026150437655086


def test_zero_input_zero_state(extruder_sys):
    traj = simulate(extruder_sys, np.zeros(3), np.zeros((5, 1)))
    assert np.all(traj.states == 0)
    assert np.all(traj.outputs == 0)


def test_unit_impulse_first_output(extruder_sys):
    traj = simulate(extruder_sys, np.zeros(3), [[1.0]])
    np.testing.assert_allclose(traj.states[1], fixtures.B.ravel(), rtol=0, atol=1e-18)
    assert traj.outputs[1, 0] == pytest.approx(MODEL_CB, rel=1e-12)


def test_scalar_geometric_decay():
    sys = StateSpace([[0.5]], [[1.0]], [[2.0]], 1.0)
    traj = simulate(sys, [1.0], [0.0, 0.0])
    np.testing.assert_allclose(traj.outputs[:, 0], [2.0, 1.0, 0.5])


def test_trajectory_lengths(extruder_sys):
    traj = simulate(extruder_sys, np.ones(3), np.ones((7, 1)))
    assert len(traj.states) == len(traj.outputs) == len(traj.inputs) + 1 == 8
    assert traj.output_residual(extruder_sys) == 0.0
    assert len(traj) == 7


def test_dimension_errors(extruder_sys):
    with pytest.raises(DimensionError):
        simulate(extruder_sys, np.zeros(2), np.zeros((3, 1)))
    with pytest.raises(DimensionError):
        simulate(extruder_sys, np.zeros(3), np.zeros((3, 2)))
    with pytest.raises(ValueError, match="non-finite"):
        simulate(extruder_sys, np.zeros(3), [[0.0], [np.nan]])
    with pytest.raises(DimensionError):
        StateSpace(np.eye(2), np.ones((3, 1)), np.ones((1, 2)), 0.1)
    with pytest.raises(DimensionError):
        StateSpace(np.ones((2, 3)), np.ones((2, 1)), np.ones((1, 3)), 0.1)
    with pytest.raises(ValueError):
        StateSpace(np.eye(2), np.ones((2, 1)), np.ones((1, 2)), 0.0)
    with pytest.raises(ValueError):
        StateSpace([[np.inf]], [[1.0]], [[1.0]], 0.1)


def test_model_is_immutable(extruder_sys):
    with pytest.raises(ValueError):
        extruder_sys.A[0, 0] = 2.0


def test_trajectory_rejects_bad_lengths():
    with pytest.raises(DimensionError):
        Trajectory(np.zeros((3, 1)), np.zeros((3, 1)), np.zeros((3, 1)), 0.1)


@pytest.mark.parametrize("M, expected", [
    (np.eye(2), 1.0),
    (np.diag([0.3, -0.9]), 0.9),
    ([[0.0, -0.5], [0.5, 0.0]], 0.5),
])
def test_spectral_radius_examples(M, expected):
    assert spectral_radius(M) == pytest.approx(expected, abs=1e-12)


def test_spectral_radius_closed_loop_matches_oracle(extruder_design):
    Acl = extruder_design.closed_loop
    rho = spectral_radius(Acl)
    assert rho < 1
    assert rho == pytest.approx(spectral_radius_oracle(Acl), abs=1e-6)


def test_spectral_radius_random_matches_oracle(rng):
    for _ in range(20):
        n = int(rng.integers(1, 6))
        M = rng.normal(size=(n, n))
        assert spectral_radius(M) == pytest.approx(spectral_radius_oracle(M), rel=1e-6)


def test_spectral_radius_rejects_rectangular():
    with pytest.raises(DimensionError):
        spectral_radius(np.ones((2, 3)))


def test_step_profile():
    r = ReferenceProfile.step(-3, -5, 0.5, 1.0, 0.01)
    assert len(r) == 100
    assert np.all(r.values[:50] == -3) and np.all(r.values[50:] == -5)
    target = r.tracking_target()
    assert len(target) == 101 and target[-1, 0] == -5


finite = st.floats(-10, 10, allow_nan=False)


@settings(max_examples=50, deadline=None)
@given(x0=arrays(float, 3, elements=finite), u=arrays(float, (6, 1), elements=finite),
       alpha=st.floats(-5, 5))
def test_linearity(x0, u, alpha):
    sys = fixtures.extruder_model()
    base = simulate(sys, x0, u)
    scaled = simulate(sys, alpha * x0, alpha * u)
    np.testing.assert_allclose(scaled.states, alpha * base.states, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(scaled.outputs, alpha * base.outputs, rtol=1e-12, atol=1e-11)


@settings(max_examples=50, deadline=None)
@given(x0=arrays(float, 3, elements=finite), x1=arrays(float, 3, elements=finite),
       u0=arrays(float, (6, 1), elements=finite), u1=arrays(float, (6, 1), elements=finite))
def test_superposition(x0, x1, u0, u1):
    sys = fixtures.extruder_model()
    a = simulate(sys, x0, u0)
    b = simulate(sys, x1, u1)
    ab = simulate(sys, x0 + x1, u0 + u1)
    np.testing.assert_allclose(ab.states, a.states + b.states, rtol=1e-12, atol=1e-11)
    np.testing.assert_allclose(ab.outputs, a.outputs + b.outputs, rtol=1e-12, atol=1e-10)
    assert ab.output_residual(sys) == 0.0
