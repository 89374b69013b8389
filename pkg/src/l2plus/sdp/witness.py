"""Explicit strictly feasible points for the primal and dual SDPs.

Their existence means both problems have interior points, so there is no
duality gap and an interior-point solver can be expected to behave.
"""
from __future__ import annotations

from dataclasses import dataclass

import mpmath
import numpy as np

from ..errors import NotControllable, SolverError, StructureMismatch
from ..filterbank import AugmentedSystem, build_positive_filter
from ..linsys import is_controllable, solve_lyapunov
from .lmi import _require_hurwitz, dual_constraint_residual, lmi_matrix

DOUBLING_CAP = 2.0**40
EXTENDED_DIGITS = 50
# below this scaled eigenvalue a double-precision verdict is rounding noise
DOUBLE_RELIABLE = 1e-12

__all__ = [
    "PrimalWitness",
    "DualWitness",
    "primal_interior_witness",
    "dual_interior_witness",
    "filter_gramian",
    "augmented_controllable",
]


@dataclass
class PrimalWitness:
    P_0: np.ndarray
    S: np.ndarray
    M: np.ndarray
    gamma: float
    margin: float  # min eigenvalue of the negated LMI matrix

    @property
    def Q_0(self) -> np.ndarray:
        return self.S + self.M


@dataclass
class DualWitness:
    Z: np.ndarray
    eps: float
    nu: float
    min_eig: float
    scaled_min_eig: float  # after the congruence diag(Z)^(-1/2) Z diag(Z)^(-1/2)
    min_Zc: float
    eq_residual: float
    digits: int = 16  # decimal precision the checks were carried out in


def primal_interior_witness(aug: AugmentedSystem, eps: float = 1e-3) -> PrimalWitness:
    """Strictly feasible ``(P_0, Q_0, gamma_0)``.

    ``P_0`` solves ``P_0 A_a + A_a^T P_0 + C_a^T C_a + 2 I = 0`` and
    ``Q_0 = I + eps 11^T``; ``gamma_0`` is doubled from 1 until the LMI holds
    strictly.
    """
    _require_hurwitz(aug)
    n_a, m = aug.n_a, aug.n_p + aug.n_w
    P0 = solve_lyapunov(aug.A_a, aug.C_a.T @ aug.C_a + 2.0 * np.eye(n_a))
    S = np.eye(m)
    M = eps * np.ones((m, m))
    gamma = 1.0
    while gamma <= DOUBLING_CAP:
        margin = -float(np.linalg.eigvalsh(lmi_matrix(aug, gamma**2, P0, S + M)).max())
        if margin > 0:
            return PrimalWitness(P0, S, M, gamma, margin)
        gamma *= 2.0
    raise SolverError("no strictly feasible gamma found below 2^40; eps may be too large")


def filter_gramian(A_p, B_p, n_w: int) -> np.ndarray:
    """Solution of ``A_p Z + Z A_p^T + B_p 1 1^T B_p^T = 0``."""
    ones = np.ones((n_w, 1))
    R = B_p @ ones @ ones.T @ B_p.T
    return solve_lyapunov(np.asarray(A_p).T, R)


def _scaled_min_eig(Z: np.ndarray) -> float:
    d = np.diag(Z)
    if np.any(d <= 0):
        return float(min(d.min(), 0.0))
    s = 1.0 / np.sqrt(d)
    return float(np.linalg.eigvalsh(Z * s[:, None] * s[None, :]).min())


def _check_filter_structure(aug: AugmentedSystem) -> None:
    if aug.spec.N == 0:
        return
    A_p, B_p = build_positive_filter(aug.spec)
    if not (np.array_equal(A_p, aug.A_p) and np.array_equal(B_p, aug.B_p)):
        raise StructureMismatch("filter is not of Jordan-block form")


def augmented_controllable(aug: AugmentedSystem, tol: float = 1e-8) -> bool:
    """Controllability of ``(A_a, B_a)`` avoiding a high-order Krylov matrix.

    By the PBH test, a controllable plant pair stacked with the (always
    controllable) Jordan-form filter is controllable whenever ``alpha`` is
    not an eigenvalue of ``A``. Otherwise the Krylov rank test decides.
    """
    if not is_controllable(aug.plant.A, aug.plant.B):
        return False
    if aug.spec.N == 0:
        return True
    gap = np.min(np.abs(np.linalg.eigvals(aug.plant.A) - aug.spec.alpha))
    if gap > tol * max(1.0, abs(aug.spec.alpha)):
        return True
    return is_controllable(aug.A_a, aug.B_a)


def _witness_double(aug: AugmentedSystem, eps: float, nu: float | None) -> DualWitness:
    n, n_p, nw, n_a = aug.n, aug.n_p, aug.n_w, aug.n_a
    A, B = aug.A_a, aug.B_a

    for _ in range(60):
        Zb = B.copy()
        Zb[n:, :] += eps * np.ones((n_p, nw))
        Za = solve_lyapunov(A.T, B @ Zb.T + Zb @ B.T)
        if _scaled_min_eig(Za) > 0:
            break
        eps *= 0.5
    else:
        raise SolverError("could not make Z_a positive definite by shrinking eps")

    ones = np.ones((nw, nw))

    def assemble(nu_):
        Zh = np.zeros((n_a + nw, n_a + nw))
        Zh[:n_a, :n_a] = Za
        Zh[:n_a, n_a:] = Zb
        Zh[n_a:, :n_a] = Zb.T
        Zh[n_a:, n_a:] = nu_ * np.eye(nw) + ones
        return Zh

    if nu is None:
        nu = 1.0
        while nu <= DOUBLING_CAP:
            if _scaled_min_eig(assemble(nu)) > 0:
                break
            nu *= 2.0
        else:
            raise SolverError("no nu below 2^40 makes Z positive definite")
    Zh = assemble(nu)
    Z = Zh / np.trace(Zh[n_a:, n_a:])
    Z = 0.5 * (Z + Z.T)
    return DualWitness(
        Z=Z,
        eps=eps,
        nu=nu,
        min_eig=float(np.linalg.eigvalsh(Z).min()),
        scaled_min_eig=_scaled_min_eig(Z),
        min_Zc=float(Z[n:, n:].min()),
        eq_residual=dual_constraint_residual(aug, Z),
    )


def _mp_sylvester(A, B, C):
    """Solve ``A X + X B^T = C`` in the current mp precision.

    An upper-triangular ``B`` (the Jordan filter) allows a column-by-column
    recursion; otherwise the Kronecker form is solved.
    """
    n, m = A.rows, B.rows
    if all(B[i, j] == 0 for i in range(m) for j in range(i)):
        X = mpmath.zeros(n, m)
        for j in range(m - 1, -1, -1):
            rhs = C[:, j]
            for k in range(j + 1, m):
                if B[j, k] != 0:
                    rhs = rhs - B[j, k] * X[:, k]
            col = mpmath.lu_solve(A + B[j, j] * mpmath.eye(n), rhs)
            for i in range(n):
                X[i, j] = col[i]
        return X
    K = mpmath.zeros(n * m, n * m)
    for j in range(m):
        for i in range(n):
            row = j * n + i
            for k in range(n):
                K[row, j * n + k] += A[i, k]
            for k in range(m):
                K[row, k * n + i] += B[j, k]
    rhs = mpmath.matrix([C[i, j] for j in range(m) for i in range(n)])
    x = mpmath.lu_solve(K, rhs)
    X = mpmath.zeros(n, m)
    for j in range(m):
        for i in range(n):
            X[i, j] = x[j * n + i]
    return X


def _mp_block(M, rows, cols):
    return M[rows[0]:rows[1], cols[0]:cols[1]]


def _mp_scaled(Z):
    d = [1 / mpmath.sqrt(Z[i, i]) for i in range(Z.rows)]
    return mpmath.matrix([[Z[i, j] * d[i] * d[j] for j in range(Z.cols)] for i in range(Z.rows)])


def _mp_is_pd(Z) -> bool:
    if any(Z[i, i] <= 0 for i in range(Z.rows)):
        return False
    try:
        mpmath.cholesky(_mp_scaled(Z))
    except ValueError:
        return False
    return True


def _witness_extended(aug: AugmentedSystem, eps: float, nu: float | None, digits: int) -> DualWitness:
    # Same construction as the double-precision path, carried out in
    # ``digits`` decimal digits on the exact binary values of the data.
    n, n_p, nw, n_a = aug.n, aug.n_p, aug.n_w, aug.n_a
    with mpmath.workdps(digits):
        A = mpmath.matrix(aug.A_a.tolist())
        B = mpmath.matrix(aug.B_a.tolist())
        blocks = [(0, n)] + ([(n, n_a)] if n_p else [])

        def lyap(R):
            # A_a is block diagonal, so Z_a splits into independent Sylvester solves
            Z = mpmath.zeros(n_a, n_a)
            for bi in blocks:
                for bj in blocks:
                    if bj[0] < bi[0]:
                        continue
                    X = _mp_sylvester(_mp_block(A, bi, bi), _mp_block(A, bj, bj), _mp_block(R, bi, bj))
                    for i in range(X.rows):
                        for j in range(X.cols):
                            Z[bi[0] + i, bj[0] + j] = X[i, j]
                            Z[bj[0] + j, bi[0] + i] = X[i, j]
            return Z

        # Z_a is affine in eps: Z_a = Z0 + eps Z1
        E = mpmath.zeros(n_a, nw)
        for i in range(n, n_a):
            for j in range(nw):
                E[i, j] = 1
        Z0 = lyap(-2 * B * B.T)
        Z1 = lyap(-(B * E.T + E * B.T))
        eps = mpmath.mpf(eps)
        for _ in range(200):
            Za = Z0 + eps * Z1
            if _mp_is_pd(Za):
                break
            eps /= 2
        else:
            raise SolverError("could not make Z_a positive definite by shrinking eps")
        Zb = B + eps * E

        def assemble(nu_):
            Zh = mpmath.zeros(n_a + nw, n_a + nw)
            for i in range(n_a):
                for j in range(n_a):
                    Zh[i, j] = Za[i, j]
                for j in range(nw):
                    Zh[i, n_a + j] = Zh[n_a + j, i] = Zb[i, j]
            for i in range(nw):
                for j in range(nw):
                    Zh[n_a + i, n_a + j] = (nu_ if i == j else 0) + 1
            return Zh

        if nu is None:
            nu = mpmath.mpf(1)
            while nu <= DOUBLING_CAP:
                if _mp_is_pd(assemble(nu)):
                    break
                nu *= 2
            else:
                raise SolverError("no nu below 2^40 makes Z positive definite")
        Zh = assemble(mpmath.mpf(nu))
        Z = Zh / (nw * (mpmath.mpf(nu) + 1))
        ev = mpmath.eigsy(Z, eigvals_only=True)
        ev_scaled = mpmath.eigsy(_mp_scaled(Z), eigvals_only=True)
        Zc = [Z[i, j] for i in range(n, n_a + nw) for j in range(n, n_a + nw)]
        X = A * _mp_block(Z, (0, n_a), (0, n_a)) + B * _mp_block(Z, (0, n_a), (n_a, n_a + nw)).T
        eq = max(abs(v) for v in (X + X.T))
        tr = abs(sum(Z[n_a + i, n_a + i] for i in range(nw)) - 1)
        return DualWitness(
            Z=np.array(Z.tolist(), dtype=float),
            eps=float(eps),
            nu=float(nu),
            min_eig=float(min(ev)),
            scaled_min_eig=float(min(ev_scaled)),
            min_Zc=float(min(Zc)),
            eq_residual=float(max(eq, tr)),
            digits=digits,
        )


def dual_interior_witness(aug: AugmentedSystem, eps: float = 1e-3, nu: float | None = None,
                          extended_digits: int | None = EXTENDED_DIGITS) -> DualWitness:
    """Strictly feasible ``Z`` for the dual SDP.

    ``Z_b = B_a + [0; eps 11^T]``, ``Z_a`` solves
    ``A_a Z_a + Z_a A_a^T + B_a Z_b^T + Z_b B_a^T = 0`` and
    ``Z_33 = nu I + 11^T``; the assembled matrix is divided by
    ``trace(Z_33)``. ``eps`` is halved until ``Z_a`` is positive definite and
    ``nu`` doubled from 1 (unless given) until the whole matrix is.

    ``Z_a`` is a controllability-type Gramian and becomes nearly singular
    for long filter chains or when ``alpha`` is close to a plant pole. When
    the double-precision checks are inconclusive the construction is redone
    with ``extended_digits`` decimal digits (``None`` disables this); the
    returned ``Z`` is then the rounding of the verified matrix.
    """
    _require_hurwitz(aug)
    _check_filter_structure(aug)
    if not augmented_controllable(aug):
        raise NotControllable("the augmented pair (A_a, B_a) is not controllable")
    w = None
    try:
        w = _witness_double(aug, eps, nu)
    except SolverError:
        if extended_digits is None:
            raise
    # Definiteness is judged on the diagonally scaled matrix, which removes
    # the spread of scales between plant and filter states.
    if w is None or not (w.scaled_min_eig > DOUBLE_RELIABLE and w.min_Zc > 0
                         and w.eq_residual <= 1e-9):
        if extended_digits is not None:
            w = _witness_extended(aug, eps, nu, extended_digits)
    if w.scaled_min_eig <= 0 or w.min_Zc <= 0 or w.eq_residual > 1e-9:
        raise SolverError(
            f"dual witness check failed: scaled min eig {w.scaled_min_eig:.3e}, "
            f"min Z_c {w.min_Zc:.3e}, equality residual {w.eq_residual:.3e}"
        )
    return w
