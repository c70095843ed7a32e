"""Configuration constants for the STAR-RIS MIMO simulator."""

import math

import numpy as np

# Scenario geometry (meters)
TX_POSITION = (0.0, 0.0, 10.0)
RIS_POSITION = (0.0, 30.0, 10.0)
HALF_CIRCLE_RADIUS = 5.0
USER_HEIGHT = 2.0
REFERENCE_DISTANCE = 1.0  # d_0

# Propagation
RICIAN_K_DB = 5.0
PATHLOSS_EXPONENT = 2.2  # all RIS-related links
PATHLOSS_REF_GAIN = 1e-3  # channel gain at d_0
NOISE_POWER_DBM = -80.0

# System
N_TX = 4
N_USER_T = 4
N_USER_R = 4
N_STREAMS = (2, 2)
M_ELEMENTS_FULL = 30
M_ELEMENTS_DESK = 8  # keeps each phase LMI at 17x17 per side
POWER_BUDGET_DBM = 30.0
WEIGHTS = (0.5, 0.5)

# Feasibility tolerances
ENERGY_TOL = 1e-8
POWER_REL_TOL = 1e-8
BINARY_TOL = 1e-3
UNIT_MODULUS_TOL = 1e-12
WEIGHT_SUM_TOL = 1e-9

# Numerics
HERMITIAN_TOL = 1e-10
MAX_CONDITION = 1e12
NEGATIVE_RATE_TOL = 1e-9  # bits/s/Hz below zero before a rate is treated as broken

# Driver defaults
BCD_TOL = 1e-4
BCD_MAX_ITER = 50
CCP_TOL = 1e-5
CCP_MAX_ITER = 15
MM_TOL = 1e-9
MM_MAX_ITER = 500
TAU_GRID_STEP = 0.05
TAU_REFINE_ROUNDS = 2
TS_INNER_MAX_ITER = 30
MONOTONE_REL_TOL = 1e-6

# Power-multiplier bisection
BISECTION_START = 1e-12  # relative to the multiplier scale
BISECTION_DOUBLINGS = 60
BISECTION_REL_TOL = 1e-10
BISECTION_MAX_ITER = 200

# Penalty schedules, relative to the norm of the TARC quadratic
CCP_PENALTY = 1.0
CCP_PENALTY_GROWTH = 1.5
CCP_PENALTY_MAX = 1e4
MS_RHO_INITIAL = 1e-3
MS_RHO_GROWTH = 5.0
MS_RHO_MAX = 1e6

# Conic solver
SDP_TOL = 1e-7
SDP_MAX_ITER = 500
FRACTION_TO_BOUNDARY = 0.99
BARRIER_GROWTH = 20.0

# Output
CSV_HEADER = (
    "sweep_var",
    "sweep_value",
    "protocol",
    "traffic",
    "trial",
    "seed",
    "wsr_bps_hz",
    "rate_t",
    "rate_r",
    "tau_star",
    "iters",
    "wall_ms",
    "warnings",
)

TWO_PI = 2.0 * math.pi


def db_to_linear(value_db: float) -> float:
    """Convert a power ratio from dB to linear scale."""
    return float(10.0 ** (value_db / 10.0))


def dbm_to_watts(value_dbm: float) -> float:
    """Convert a power level from dBm to watts."""
    return float(10.0 ** ((value_dbm - 30.0) / 10.0))


def watts_to_dbm(value_w: float) -> float:
    """Convert a power level from watts to dBm."""
    return float(10.0 * math.log10(value_w) + 30.0)


def wrap_phase(phase: np.ndarray) -> np.ndarray:
    """Map phases into [0, 2*pi)."""
    wrapped = np.mod(np.asarray(phase, dtype=float), TWO_PI)
    # np.mod can round tiny negatives up to exactly 2*pi
    wrapped[wrapped >= TWO_PI] = 0.0
    return wrapped
