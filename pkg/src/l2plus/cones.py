"""PSD + nonnegative multipliers and copositivity oracles."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from math import comb

import numpy as np

from .errors import DimensionMismatch, DimensionTooLarge, NotHurwitz, NotMetzler
from .linsys import TOL_HURWITZ, is_metzler, max_real_eig, solve_lyapunov

TOL_COP = 1e-8
SIMPLEX_MAX_DIM = 8

__all__ = [
    "CopositiveMultiplier",
    "default_resolution",
    "simplex_grid",
    "simplex_min",
    "is_grid_copositive",
    "is_copositive_2x2",
    "metzler_lyapunov_solution",
]


@dataclass(frozen=True, eq=False)
class CopositiveMultiplier:
    """``Q = S + M`` with ``S`` positive semidefinite and ``M`` entrywise nonnegative."""

    S: np.ndarray
    M: np.ndarray

    def __post_init__(self):
        S = np.asarray(self.S, dtype=float)
        M = np.asarray(self.M, dtype=float)
        if S.ndim != 2 or S.shape[0] != S.shape[1] or S.shape != M.shape:
            raise DimensionMismatch(f"S and M must be equal square matrices, got {S.shape}, {M.shape}")
        object.__setattr__(self, "S", 0.5 * (S + S.T))
        object.__setattr__(self, "M", 0.5 * (M + M.T))

    @property
    def Q(self) -> np.ndarray:
        return self.S + self.M

    @property
    def size(self) -> int:
        return self.S.shape[0]

    def is_valid(self, tol: float = 1e-9) -> bool:
        if self.size == 0:
            return True
        return bool(np.linalg.eigvalsh(self.S).min() >= -tol and self.M.min() >= -tol)


def default_resolution(m: int) -> int:
    if m <= 3:
        return 60
    if m <= 6:
        return 25
    return 12


@lru_cache(maxsize=32)
def _compositions(m: int, r: int) -> np.ndarray:
    # stars and bars: every way to write r as an ordered sum of m nonnegative integers
    if m == 1:
        return np.array([[r]])
    bars = np.array(list(combinations(range(r + m - 1), m - 1)), dtype=np.int64)
    edges = np.hstack([np.full((bars.shape[0], 1), -1), bars, np.full((bars.shape[0], 1), r + m - 1)])
    parts = np.diff(edges, axis=1) - 1
    parts.setflags(write=False)
    return parts


def simplex_grid(m: int, resolution: int) -> np.ndarray:
    """All points ``k / resolution`` of the unit simplex in ``R^m``, one per row."""
    return _compositions(m, resolution) / resolution


def simplex_min(Q, resolution: int | None = None, return_point: bool = False):
    """Minimum of ``x^T Q x`` over a regular grid of the unit simplex.

    A negative value exhibits a nonnegative ``x`` with ``x^T Q x < 0`` and so
    proves ``Q`` is not copositive; a nonnegative value is only evidence.
    """
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {Q.shape}")
    m = Q.shape[0]
    if m > SIMPLEX_MAX_DIM:
        raise DimensionTooLarge(f"simplex grid limited to m <= {SIMPLEX_MAX_DIM}, got {m}")
    if m == 0:
        return (0.0, np.zeros(0)) if return_point else 0.0
    r = default_resolution(m) if resolution is None else int(resolution)
    if r < 1:
        raise DimensionMismatch("resolution must be positive")
    if comb(r + m - 1, m - 1) > 5_000_000:
        raise DimensionTooLarge(f"grid with m={m}, resolution={r} is too large")
    Qs = 0.5 * (Q + Q.T)
    X = simplex_grid(m, r)
    vals = np.einsum("ij,jk,ik->i", X, Qs, X)
    i = int(np.argmin(vals))
    if return_point:
        return float(vals[i]), X[i].copy()
    return float(vals[i])


def is_grid_copositive(Q, resolution: int | None = None, tol: float = TOL_COP) -> bool:
    return simplex_min(Q, resolution) >= -tol


def is_copositive_2x2(Q, tol: float = 1e-12) -> bool:
    Q = np.asarray(Q, dtype=float)
    if Q.shape != (2, 2):
        raise DimensionMismatch(f"expected a 2x2 matrix, got shape {Q.shape}")
    a, d = Q[0, 0], Q[1, 1]
    b = 0.5 * (Q[0, 1] + Q[1, 0])
    if a < -tol or d < -tol:
        return False
    return bool(b + np.sqrt(max(a, 0.0) * max(d, 0.0)) >= -tol)


def metzler_lyapunov_solution(A_p, Q11) -> np.ndarray:
    """Solve ``P_p A_p + A_p^T P_p + Q11 = 0`` for Metzler, Hurwitz ``A_p``.

    ``exp(A_p t)`` is entrywise nonnegative for Metzler ``A_p``, so ``P_p`` is
    copositive whenever ``Q11`` is, and entrywise nonnegative whenever ``Q11``
    is.
    """
    A_p = np.asarray(A_p, dtype=float)
    if not is_metzler(A_p):
        raise NotMetzler("A_p has a negative off-diagonal entry")
    lam = max_real_eig(A_p)
    if lam >= -TOL_HURWITZ:
        raise NotHurwitz(f"A_p is not Hurwitz (max real eigenvalue {lam:.3e})")
    return solve_lyapunov(A_p, Q11)
