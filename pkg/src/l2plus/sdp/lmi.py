"""Primal and dual SDPs for the filtered L2+ upper bound.

The primal minimizes ``t = gamma^2`` over a free symmetric ``P_a`` and a
multiplier ``Q_a = S + M`` (``S`` PSD, ``M`` entrywise nonnegative) subject
to ``F(t, P_a, Q_a) <= 0`` where::

    F = [P_a A_a + A_a^T P_a + C_a^T C_a,  P_a B_a + C_a^T D_a]
        [B_a^T P_a + D_a^T C_a,            D_a^T D_a - t I    ] + E Q_a E^T

and ``E = [0_{n, n_p + n_w}; I]`` places ``Q_a`` on the filter-state and
input coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..cones import CopositiveMultiplier
from ..errors import DimensionMismatch, NotHurwitz, SolverError
from ..filterbank import AugmentedSystem
from ..linsys import TOL_HURWITZ, max_real_eig, solve_lyapunov
from .conic import (
    Cone,
    ConeProblem,
    ConicSolution,
    Status,
    pack_upper,
    smat,
    solve_conic,
    svec,
    svec_scale,
    tri_indices,
    unpack_upper,
)

__all__ = [
    "VariableLayout",
    "SolveResult",
    "assemble_primal",
    "build_dual",
    "solve",
    "lmi_matrix",
    "lmi_residual",
    "dual_constraint_residual",
    "psd_plus_nn_margin",
    "psd_plus_nn_decompose",
    "CertifiedPoint",
    "certify_primal",
]


@dataclass(frozen=True)
class VariableLayout:
    """Index map of the primal decision vector ``x = [t, P_a, S, M]``.

    Symmetric variables are stored as their upper-triangle entries, column
    by column, without scaling.
    """

    n_a: int
    m: int

    @property
    def n_tri_p(self) -> int:
        return self.n_a * (self.n_a + 1) // 2

    @property
    def n_tri_q(self) -> int:
        return self.m * (self.m + 1) // 2

    @property
    def t(self) -> int:
        return 0

    @property
    def P(self) -> slice:
        return slice(1, 1 + self.n_tri_p)

    @property
    def S(self) -> slice:
        return slice(self.P.stop, self.P.stop + self.n_tri_q)

    @property
    def M(self) -> slice:
        return slice(self.S.stop, self.S.stop + self.n_tri_q)

    @property
    def size(self) -> int:
        return self.M.stop

    def pack(self, t: float, P, S, M) -> np.ndarray:
        x = np.empty(self.size)
        x[self.t] = t
        x[self.P] = pack_upper(P)
        x[self.S] = pack_upper(S)
        x[self.M] = pack_upper(M)
        return x

    def unpack(self, x) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        return (
            float(x[self.t]),
            unpack_upper(x[self.P], self.n_a),
            unpack_upper(x[self.S], self.m),
            unpack_upper(x[self.M], self.m),
        )


@dataclass
class SolveResult:
    """Outcome of one SDP solve.

    For a primal problem ``t``, ``gamma``, ``P_a``, ``S``, ``M`` come from the
    primal vector and ``Z`` is the multiplier of the LMI block. For a dual
    problem ``Z`` is the decision matrix and ``objective`` its value.
    """

    status: Status
    kind: str
    objective: float
    dual_objective: float
    primal_residual: float
    dual_residual: float
    gap: float
    solve_seconds: float
    iterations: int
    backend: str
    raw_status: str
    n: int
    n_p: int
    n_w: int
    t: float | None = None
    gamma: float | None = None
    P_a: np.ndarray | None = None
    S: np.ndarray | None = None
    M: np.ndarray | None = None
    Z: np.ndarray | None = None

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL

    @property
    def multiplier(self) -> CopositiveMultiplier | None:
        if self.S is None:
            return None
        return CopositiveMultiplier(self.S, self.M)

    # Partition of Z: [Z11 Z12 Z13; * Z22 Z23; * * Z33] with blocks n, n_p, n_w.
    @property
    def Z_a(self) -> np.ndarray:
        k = self.n + self.n_p
        return self.Z[:k, :k]

    @property
    def Z_b(self) -> np.ndarray:
        k = self.n + self.n_p
        return self.Z[:k, k:]

    @property
    def Z_c(self) -> np.ndarray:
        return self.Z[self.n :, self.n :]

    @property
    def Z_33(self) -> np.ndarray:
        k = self.n + self.n_p
        return self.Z[k:, k:]


def _require_hurwitz(aug: AugmentedSystem) -> None:
    lam = max_real_eig(aug.A_a)
    if lam >= -TOL_HURWITZ:
        raise NotHurwitz(f"A_a is not Hurwitz (max real eigenvalue {lam:.3e})")


def _sym_basis(d: int):
    """Yield (i, j, E) with E the symmetric unit matrix of upper entry (i, j)."""
    for i, j in zip(*tri_indices(d)):
        E = np.zeros((d, d))
        E[i, j] = 1.0
        E[j, i] = 1.0
        yield int(i), int(j), E


def _output_gram(aug: AugmentedSystem) -> np.ndarray:
    H = np.hstack([aug.C_a, aug.D_a])
    return H.T @ H


def lmi_matrix(aug: AugmentedSystem, t: float, P_a, Q_a) -> np.ndarray:
    """Evaluate the LMI matrix directly from its block formula."""
    n_a, m, nw = aug.n_a, aug.n_p + aug.n_w, aug.n_w
    A, B = aug.A_a, aug.B_a
    P_a = np.asarray(P_a, dtype=float)
    F = _output_gram(aug).copy()
    F[:n_a, :n_a] += P_a @ A + A.T @ P_a
    F[:n_a, n_a:] += P_a @ B
    F[n_a:, :n_a] += B.T @ P_a
    F[n_a:, n_a:] -= t * np.eye(nw)
    off = aug.n
    F[off : off + m, off : off + m] += np.asarray(Q_a, dtype=float)
    return 0.5 * (F + F.T)


def lmi_residual(aug: AugmentedSystem, t: float, P_a, Q_a) -> float:
    """Largest eigenvalue of the LMI matrix; feasible when ``<= 0``."""
    return float(np.linalg.eigvalsh(lmi_matrix(aug, t, P_a, Q_a)).max())


def assemble_primal(aug: AugmentedSystem, margin: float = 0.0) -> ConeProblem:
    """Conic form of ``min t`` subject to the filtered LMI.

    ``margin > 0`` asks for ``F <= -margin I`` instead of ``F <= 0``.
    """
    _require_hurwitz(aug)
    n_a, nw = aug.n_a, aug.n_w
    m = aug.n_p + nw
    L = n_a + nw
    lay = VariableLayout(n_a, m)
    A, B = aug.A_a, aug.B_a

    n_tri_l = L * (L + 1) // 2
    G_lmi = np.zeros((n_tri_l, lay.size))
    # s = h - G x = -F(x) - margin I, with F(x) = F0 + sum_i x_i F_i
    Ft = np.zeros((L, L))
    Ft[n_a:, n_a:] = -np.eye(nw)
    G_lmi[:, lay.t] = svec(Ft)
    for col, (_, _, E) in enumerate(_sym_basis(n_a)):
        Fi = np.zeros((L, L))
        Fi[:n_a, :n_a] = E @ A + A.T @ E
        Fi[:n_a, n_a:] = E @ B
        Fi[n_a:, :n_a] = B.T @ E
        G_lmi[:, lay.P.start + col] = svec(Fi)
    off = aug.n
    for col, (_, _, E) in enumerate(_sym_basis(m)):
        Fi = np.zeros((L, L))
        Fi[off : off + m, off : off + m] = E
        v = svec(Fi)
        G_lmi[:, lay.S.start + col] = v
        G_lmi[:, lay.M.start + col] = v
    h_lmi = svec(-_output_gram(aug) - margin * np.eye(L))

    nq = lay.n_tri_q
    G_nn = sp.hstack([sp.csc_matrix((nq, 1 + lay.n_tri_p + nq)), -sp.identity(nq)])
    G_psd = sp.hstack([
        sp.csc_matrix((nq, 1 + lay.n_tri_p)),
        -sp.diags(svec_scale(m)),
        sp.csc_matrix((nq, nq)),
    ])
    G = sp.vstack([G_nn, G_psd, sp.csc_matrix(G_lmi)]).tocsc()
    h = np.concatenate([np.zeros(nq), np.zeros(nq), h_lmi])
    c = np.zeros(lay.size)
    c[lay.t] = 1.0
    cones = [Cone("nonneg", nq, "M"), Cone("psd", m, "S"), Cone("psd", L, "LMI")]
    meta = {"n": aug.n, "n_p": aug.n_p, "n_w": nw, "layout": lay, "margin": margin,
            "alpha": aug.spec.alpha, "N": aug.spec.N}
    return ConeProblem(c, G, h, cones, sense="min", kind="primal", meta=meta)


def _dual_constraint_map(aug: AugmentedSystem):
    """Rows of ``sym(A_a Z_a + B_a Z_b^T)`` upper entries as a linear map of Z."""
    n_a, L = aug.n_a, aug.n_a + aug.n_w
    AB = np.hstack([aug.A_a, aug.B_a])  # A_a Z_a + B_a Z_b^T = [A_a B_a] Z[:, :n_a]
    r, c = tri_indices(n_a)
    rows = []
    for _, _, E in _sym_basis(L):
        X = AB @ E[:, :n_a]
        X = X + X.T
        rows.append(X[r, c])
    return np.array(rows).T  # (n_tri_a, n_tri_L)


def dual_constraint_residual(aug: AugmentedSystem, Z) -> float:
    """Max-abs residual of the equality constraints of the dual SDP."""
    Z = np.asarray(Z, dtype=float)
    n_a = aug.n_a
    X = aug.A_a @ Z[:n_a, :n_a] + aug.B_a @ Z[:n_a, n_a:].T
    eq = np.max(np.abs(X + X.T))
    tr = abs(np.trace(Z[n_a:, n_a:]) - 1.0)
    return float(max(eq, tr))


def build_dual(aug: AugmentedSystem, eliminate: bool = True) -> ConeProblem:
    """Conic form of the dual SDP (a maximization over ``Z``).

    The equality ``A_a Z_a + B_a Z_b^T + (.)^T = 0`` has a unique solution
    ``Z_a`` for each ``Z_b`` because ``A_a`` is Hurwitz. With ``eliminate``
    the decision variables are ``Z_b`` and ``Z_33`` only and ``Z_a`` is
    substituted; otherwise all of ``Z`` is free and the equality is kept as
    zero-cone rows. Both forms have the same optimal value.
    """
    _require_hurwitz(aug)
    n, n_a, nw = aug.n, aug.n_a, aug.n_w
    L = n_a + nw
    r, c = tri_indices(L)
    W = _output_gram(aug)
    zc_idx = np.flatnonzero((r >= n) & (c >= n))
    meta = {"n": n, "n_p": aug.n_p, "n_w": nw, "alpha": aug.spec.alpha, "N": aug.spec.N,
            "L": L, "eliminate": eliminate}
    if eliminate:
        basis = _reduced_dual_basis(aug)
        obj = np.einsum("ij,kij->k", W, basis)
        tr_row = np.einsum("kii->k", basis[:, n_a:, n_a:])
        G = np.vstack([
            tr_row[None, :],
            -basis[:, r[zc_idx], c[zc_idx]].T,
            -np.array([svec(B) for B in basis]).T,
        ])
        h = np.concatenate([[1.0], np.zeros(zc_idx.size), np.zeros(r.size)])
        cones = [Cone("zero", 1, "trace"), Cone("nonneg", zc_idx.size, "Zc"), Cone("psd", L, "Z")]
        meta["basis"] = basis
        return ConeProblem(obj, G, h, cones, sense="max", kind="dual", meta=meta)

    nvar = r.size
    obj = np.where(r == c, 1.0, 2.0) * W[r, c]
    tr_row = np.where((r == c) & (r >= n_a), 1.0, 0.0)
    eq = _dual_constraint_map(aug)
    G_zc = sp.csc_matrix((-np.ones(zc_idx.size), (np.arange(zc_idx.size), zc_idx)),
                         shape=(zc_idx.size, nvar))
    G_psd = -sp.diags(svec_scale(L))
    G = sp.vstack([
        sp.csc_matrix(tr_row[None, :]),
        sp.csc_matrix(eq),
        G_zc,
        G_psd,
    ]).tocsc()
    h = np.concatenate([[1.0], np.zeros(eq.shape[0]), np.zeros(zc_idx.size), np.zeros(nvar)])
    cones = [
        Cone("zero", 1, "trace"),
        Cone("zero", eq.shape[0], "lyapunov"),
        Cone("nonneg", zc_idx.size, "Zc"),
        Cone("psd", L, "Z"),
    ]
    return ConeProblem(obj, G, h, cones, sense="max", kind="dual", meta=meta)


def _reduced_dual_basis(aug: AugmentedSystem) -> np.ndarray:
    """Z for each unit coordinate of ``(Z_b, Z_33)``, with ``Z_a`` solved for."""
    n_a, nw = aug.n_a, aug.n_w
    L = n_a + nw
    out = []
    for j in range(nw):
        for i in range(n_a):
            Zb = np.zeros((n_a, nw))
            Zb[i, j] = 1.0
            Z = np.zeros((L, L))
            Z[:n_a, :n_a] = solve_lyapunov(aug.A_a.T, aug.B_a @ Zb.T + Zb @ aug.B_a.T)
            Z[:n_a, n_a:] = Zb
            Z[n_a:, :n_a] = Zb.T
            out.append(Z)
    for i, j, E in _sym_basis(nw):
        Z = np.zeros((L, L))
        Z[n_a:, n_a:] = E
        out.append(Z)
    return np.array(out)


DEFAULT_BACKENDS = {
    "primal": ("clarabel", "cvxopt"),
    "dual": ("cvxopt", "clarabel"),
    "membership": ("clarabel", "cvxopt"),
}


RETRY_TOL = 1e-9


def _solve_with_fallback(problem: ConeProblem, backend: str | None, tol: float) -> ConicSolution:
    order = DEFAULT_BACKENDS.get(problem.kind, ("clarabel",)) if backend is None else (backend,)
    # CVXOPT can break down at very tight tolerances, so each backend gets a
    # second chance at the loosest tolerance still deemed accurate.
    tols = (tol,) if tol >= RETRY_TOL else (tol, RETRY_TOL)
    sol, errors = None, []
    for name in order:
        for tol_k in tols:
            try:
                cand = solve_conic(problem, backend=name, tol=tol_k)
            except SolverError as exc:
                errors.append(str(exc))
                continue
            if sol is None or cand.status is Status.OPTIMAL:
                sol = cand
            if cand.status is Status.OPTIMAL:
                break
        if sol is not None and sol.status is Status.OPTIMAL:
            break
    if sol is None:
        raise SolverError("; ".join(errors))
    return sol


def solve(problem: ConeProblem, backend: str | None = None, tol: float = 1e-10) -> SolveResult:
    """Solve a primal or dual problem built by this module.

    With ``backend=None`` the backends in ``DEFAULT_BACKENDS`` are tried in
    order until one reports an optimal solution; an explicit backend is used
    alone.
    """
    sol = _solve_with_fallback(problem, backend, tol)
    meta = problem.meta
    res = SolveResult(
        status=sol.status,
        kind=problem.kind,
        objective=sol.primal_objective,
        dual_objective=sol.dual_objective,
        primal_residual=sol.primal_residual,
        dual_residual=sol.dual_residual,
        gap=sol.gap,
        solve_seconds=sol.solve_seconds,
        iterations=sol.iterations,
        backend=sol.backend,
        raw_status=sol.raw_status,
        n=meta.get("n", 0),
        n_p=meta.get("n_p", 0),
        n_w=meta.get("n_w", 0),
    )
    if problem.kind == "primal":
        t, P, S, M = meta["layout"].unpack(sol.x)
        res.t = t
        res.gamma = float(np.sqrt(max(t, 0.0)))
        res.P_a, res.S, res.M = P, S, M
        k, sl = problem.cone_block("LMI")
        res.Z = smat(sol.z[sl], k.dim)
    elif problem.kind == "dual":
        if meta.get("eliminate"):
            res.Z = np.einsum("k,kij->ij", sol.x, meta["basis"])
        else:
            res.Z = unpack_upper(sol.x, meta["L"])
    return res


def _membership_problem(Q) -> ConeProblem:
    # maximize lam subject to Q - lam I = S + M, S PSD, M >= 0 (upper entries)
    Q = np.asarray(Q, dtype=float)
    m = Q.shape[0]
    if Q.ndim != 2 or Q.shape != (m, m):
        raise DimensionMismatch(f"expected a square matrix, got shape {Q.shape}")
    Q = 0.5 * (Q + Q.T)
    nq = m * (m + 1) // 2
    r, c = tri_indices(m)
    # variables: [lam, M entries]; S = Q - lam I - M must be PSD
    nvar = 1 + nq
    G_nn = sp.hstack([sp.csc_matrix((nq, 1)), -sp.identity(nq)])
    lam_col = np.where(r == c, 1.0, 0.0) * svec_scale(m)
    G_psd = sp.hstack([sp.csc_matrix(lam_col[:, None]), sp.diags(svec_scale(m))])
    G = sp.vstack([G_nn, G_psd]).tocsc()
    h = np.concatenate([np.zeros(nq), svec(Q)])
    cvec = np.zeros(nvar)
    cvec[0] = 1.0
    return ConeProblem(cvec, G, h, [Cone("nonneg", nq, "M"), Cone("psd", m, "S")],
                       sense="max", kind="membership", meta={"m": m})


def psd_plus_nn_margin(Q, backend: str | None = None, tol: float = 1e-10) -> tuple[float, CopositiveMultiplier]:
    """Largest ``lam`` with ``Q - lam I`` in PSD + NN, and the matching split.

    ``Q`` lies in PSD + NN exactly when the margin is nonnegative.
    """
    prob = _membership_problem(Q)
    sol = _solve_with_fallback(prob, backend, tol)
    if sol.status is not Status.OPTIMAL:
        raise SolverError(f"membership problem not solved: {sol.raw_status}")
    m = prob.meta["m"]
    lam = float(sol.x[0])
    M = unpack_upper(sol.x[1:], m)
    Qs = 0.5 * (np.asarray(Q, dtype=float) + np.asarray(Q, dtype=float).T)
    S = Qs - lam * np.eye(m) - M
    return lam, CopositiveMultiplier(S, M)


def psd_plus_nn_decompose(Q, tol: float = 1e-9, backend: str | None = None) -> CopositiveMultiplier | None:
    """Split ``Q = S + M`` if ``Q`` is in PSD + NN (within ``tol``), else None."""
    lam, split = psd_plus_nn_margin(Q, backend=backend)
    if lam < -tol:
        return None
    # fold the margin back into the PSD part
    lam = max(lam, 0.0)
    return CopositiveMultiplier(split.S + lam * np.eye(split.size), split.M)


@dataclass
class CertifiedPoint:
    """Primal point repaired to satisfy every constraint in floating point."""

    t: float
    gamma: float
    P_a: np.ndarray
    S: np.ndarray
    M: np.ndarray
    max_eig: float  # largest eigenvalue of the LMI matrix, strictly negative
    shift: float  # t - t_solver


def certify_primal(aug: AugmentedSystem, res: SolveResult, max_tries: int = 20) -> CertifiedPoint:
    """Turn an approximately optimal primal solution into an exactly feasible one.

    ``S`` is shifted to be positive semidefinite and ``M`` clipped at zero;
    the remaining LMI violation is absorbed by ``P_a + d X``, with ``X``
    solving ``A_a^T X + X A_a = -I``, which makes the state block negative
    definite, and the smallest increase of ``t`` that restores the Schur
    complement. ``d`` is picked from a log grid to minimise that increase.
    """
    if res.kind != "primal" or res.P_a is None:
        raise SolverError("certify_primal needs a solved primal problem")
    n_a = aug.n_a
    lam_s = float(np.linalg.eigvalsh(res.S).min()) if res.S.size else 0.0
    floor = 1e-14 * max(1.0, float(np.abs(res.S).max(initial=0.0)))
    S = res.S + max(0.0, floor - lam_s) * np.eye(res.S.shape[0])
    M = np.maximum(res.M, 0.0)
    Q = S + M
    X = solve_lyapunov(aug.A_a, np.eye(n_a))
    scale = max(1.0, float(np.abs(res.P_a).max()))

    def schur_shift(P):
        F = lmi_matrix(aug, res.t, P, Q)
        F11, F12, F22 = F[:n_a, :n_a], F[:n_a, n_a:], F[n_a:, n_a:]
        if np.linalg.eigvalsh(F11).max() >= 0:
            return np.inf
        Sc = F22 - F12.T @ np.linalg.solve(F11, F12)
        return max(0.0, float(np.linalg.eigvalsh(0.5 * (Sc + Sc.T)).max()))

    best_tau, best_d = np.inf, 0.0
    for d in np.concatenate([[0.0], scale * np.logspace(-14, -2, 61)]):
        tau = schur_shift(res.P_a + d * X)
        if tau < best_tau:
            best_tau, best_d = tau, d
    if not np.isfinite(best_tau):
        raise SolverError("could not restore strict feasibility of the LMI")
    P = res.P_a + best_d * X
    eta = 1e-13 * max(1.0, res.t)
    for _ in range(max_tries):
        t = res.t + best_tau + eta
        top = float(np.linalg.eigvalsh(lmi_matrix(aug, t, P, Q)).max())
        if top < 0:
            return CertifiedPoint(t, float(np.sqrt(t)), P, S, M, top, t - res.t)
        eta *= 10.0
    raise SolverError("LMI still violated after raising t")
