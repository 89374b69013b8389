"""Built-in benchmark systems with their published reference values."""
from __future__ import annotations

from .linsys import StateSpace

# Two-decimal entries exactly as published.
_SISO = dict(
    A=[[-0.09, 0.28, 0.46, -0.48, -0.05],
       [-0.34, -0.95, -0.42, 0.37, -0.55],
       [-0.24, 0.04, -0.10, -0.47, -0.23],
       [0.30, 0.29, 0.02, -1.59, 0.57],
       [0.26, 0.25, 0.40, -0.74, -0.95]],
    B=[[0.17], [0.40], [0.49], [0.30], [-0.69]],
    C=[[-0.14, -0.66, 0.10, 0.34, 0.05]],
    D=[[0.27]],
)

_TWO_INPUT = dict(
    A=[[-0.11, -0.15, 0.18, 0.15, -0.10],
       [0.18, -0.53, -0.35, 0.37, -0.23],
       [-0.64, -0.12, -0.75, 0.23, 0.59],
       [0.34, -0.03, 0.13, -0.47, -0.67],
       [0.55, 0.29, -0.08, 0.53, -0.81]],
    B=[[-0.14, 0.32],
       [-0.76, -0.42],
       [-0.30, -0.03],
       [0.64, -0.38],
       [-0.12, 0.17]],
    C=[[-0.35, 0.03, 0.33, 0.05, 0.14]],
    D=[[0.43, 0.23]],
)

# Published values: H-infinity norm, filter-free bound and best filtered
# bound, attained at (alpha, N) = best_cell.
REFERENCE = {
    "siso": {"hinf": 0.5033, "unfiltered": 0.5033, "best": 0.3914, "best_cell": (-1.4, 15)},
    "two-input": {"hinf": 0.6995, "unfiltered": 0.6611, "best": 0.4981, "best_cell": (-1.4, 15)},
}
REFERENCE_TOL = 1e-2


def siso_benchmark() -> StateSpace:
    """Single-input, single-output benchmark (n = 5)."""
    return StateSpace.from_dict(_SISO)


def two_input_benchmark() -> StateSpace:
    """Two-input, single-output benchmark (n = 5)."""
    return StateSpace.from_dict(_TWO_INPUT)


def first_order_lag() -> StateSpace:
    """``1/(s+1)``; externally positive with unit H-infinity norm."""
    return StateSpace([[-1.0]], [[1.0]], [[1.0]], [[0.0]])


FIXTURES = {"siso": siso_benchmark, "two-input": two_input_benchmark, "lag": first_order_lag}

# case names accepted by the command-line reproduce command
CLI_CASES = {"sec6-1": "siso", "sec6-2": "two-input"}
