"""Identified extrusion model of the force-controlled FFF printhead.

Three-state model from RPM to measured roller force (N), sampled at
100 Hz, with the LQR weights and the gain reported alongside it.
"""

import numpy as np

from .lqr import LqrWeights
from .sysmodel import StateSpace

DT = 0.01

A = np.array([
    [1.00603451, 0.01305934, 0.0357625],
    [0.00625487, 1.01087517, 0.0192488],
    [-0.33079381, -0.7101034, 0.5566053],
])
B = np.array([[0.00008626], [-0.00008873], [0.0047217]])
C = np.array([[-27.8759035, 0.22352502, -0.04037422]])

Q = np.diag([1656.2, 8.9, 1.6])
R = np.array([[0.00995]])

# Gain published with the model.
REPORTED_GAIN = np.array([[323.8591, -113.4687, 23.2255]])

# Step simulation results, columns: unshaped, hold 1, 2, 5.
REPORTED_RMSE = (0.211, 0.0637, 0.0682, 0.0846)
REPORTED_SETTLING = (0.185, 0.035, 0.045, 0.055)


def extruder_model() -> StateSpace:
    return StateSpace(A, B, C, DT)


def extruder_weights() -> LqrWeights:
    return LqrWeights(Q, R)
