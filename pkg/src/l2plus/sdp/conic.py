"""Solver-neutral conic problem encoding and backend adapters.

Standard form::

    minimize (or maximize)  c^T x + offset
    subject to              s = h - G x,   s in K

where ``K`` is a product of zero cones, nonnegative orthants and PSD cones
listed in row order. A PSD block of matrix size ``d`` occupies ``d(d+1)/2``
rows holding ``svec`` of the slack: upper triangle, column by column, with
off-diagonal entries scaled by sqrt(2) so the cone is self-dual under the
Euclidean inner product.
"""
from __future__ import annotations

import enum
import io
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from ..errors import DimensionMismatch, SolverError

SQRT2 = math.sqrt(2.0)

__all__ = [
    "Cone",
    "ConeProblem",
    "ConicSolution",
    "Status",
    "tri_indices",
    "svec",
    "smat",
    "pack_upper",
    "unpack_upper",
    "svec_scale",
    "solve_conic",
    "BACKENDS",
]


def tri_indices(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Row/column indices of the upper triangle, column by column."""
    cols = np.concatenate([np.full(j + 1, j) for j in range(d)]) if d else np.zeros(0, int)
    rows = np.concatenate([np.arange(j + 1) for j in range(d)]) if d else np.zeros(0, int)
    return rows.astype(int), cols.astype(int)


def svec_scale(d: int) -> np.ndarray:
    r, c = tri_indices(d)
    return np.where(r == c, 1.0, SQRT2)


def svec(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    r, c = tri_indices(X.shape[0])
    return X[r, c] * svec_scale(X.shape[0])


def smat(v, d: int | None = None) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if d is None:
        d = int(round((math.sqrt(8 * v.size + 1) - 1) / 2))
    r, c = tri_indices(d)
    X = np.zeros((d, d))
    vals = v / svec_scale(d)
    X[r, c] = vals
    X[c, r] = vals
    return X


def pack_upper(X) -> np.ndarray:
    """Upper-triangle entries of a symmetric matrix, unscaled (exact round trip)."""
    X = np.asarray(X, dtype=float)
    r, c = tri_indices(X.shape[0])
    return X[r, c].copy()


def unpack_upper(v, d: int) -> np.ndarray:
    r, c = tri_indices(d)
    X = np.zeros((d, d))
    X[r, c] = v
    X[c, r] = v
    return X


@dataclass(frozen=True)
class Cone:
    kind: str  # "zero" | "nonneg" | "psd"
    dim: int  # number of rows, or matrix size for "psd"
    name: str = ""

    @property
    def rows(self) -> int:
        return self.dim * (self.dim + 1) // 2 if self.kind == "psd" else self.dim


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    NUMERICAL_TROUBLE = "NumericalTrouble"


@dataclass
class ConeProblem:
    c: np.ndarray
    G: sp.csc_matrix
    h: np.ndarray
    cones: list[Cone]
    sense: str = "min"
    offset: float = 0.0
    kind: str = "generic"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        self.h = np.asarray(self.h, dtype=float).ravel()
        self.G = sp.csc_matrix(self.G, dtype=float)
        self.validate()

    @property
    def num_vars(self) -> int:
        return self.c.size

    @property
    def num_rows(self) -> int:
        return self.h.size

    def validate(self) -> None:
        if self.sense not in ("min", "max"):
            raise DimensionMismatch(f"sense must be 'min' or 'max', got {self.sense!r}")
        if self.G.shape != (self.num_rows, self.num_vars):
            raise DimensionMismatch(
                f"G has shape {self.G.shape}, expected {(self.num_rows, self.num_vars)}"
            )
        if sum(k.rows for k in self.cones) != self.num_rows:
            raise DimensionMismatch("cone rows do not add up to the constraint rows")
        for k in self.cones:
            if k.kind not in ("zero", "nonneg", "psd"):
                raise DimensionMismatch(f"unknown cone kind {k.kind!r}")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.h))
                and np.all(np.isfinite(self.G.data))):
            raise DimensionMismatch("problem data must be finite")

    def cone_slices(self) -> list[tuple[Cone, slice]]:
        out, start = [], 0
        for k in self.cones:
            out.append((k, slice(start, start + k.rows)))
            start += k.rows
        return out

    def cone_block(self, name: str) -> tuple[Cone, slice]:
        for k, sl in self.cone_slices():
            if k.name == name:
                return k, sl
        raise KeyError(name)

    def objective(self, x) -> float:
        return float(self.c @ x) + self.offset

    def write_sparse_text(self, fp=None) -> str:
        """Dump the problem one nonzero per line.

        ``obj <var> <coef>`` lines give the objective. Constraint lines read
        ``<block> <row> <col> <var> <coef>``: entry (row, col) of cone block
        ``block`` (0-based, in cone order) equals the sum of ``coef * x[var]``
        over its lines, with ``var = -1`` marking the constant term. Entries
        of PSD blocks are unscaled matrix entries of the upper triangle; for
        linear cones ``col`` is 0.
        """
        buf = io.StringIO()
        buf.write(f"# sense {self.sense} vars {self.num_vars} offset {float(self.offset)!r}\n")
        for b, (k, _) in enumerate(self.cone_slices()):
            buf.write(f"# block {b} {k.kind} {k.dim} {k.name}\n")
        for j in np.flatnonzero(self.c):
            buf.write(f"obj {j} {float(self.c[j])!r}\n")
        Gr = self.G.tocsr()
        for b, (k, sl) in enumerate(self.cone_slices()):
            if k.kind == "psd":
                rr, cc = tri_indices(k.dim)
                scale = svec_scale(k.dim)
            for local, row in enumerate(range(sl.start, sl.stop)):
                if k.kind == "psd":
                    i, j, s = int(rr[local]), int(cc[local]), scale[local]
                else:
                    i, j, s = local, 0, 1.0
                if self.h[row] != 0.0:
                    buf.write(f"{b} {i} {j} -1 {float(self.h[row] / s)!r}\n")
                lo, hi = Gr.indptr[row], Gr.indptr[row + 1]
                for var, coef in zip(Gr.indices[lo:hi], Gr.data[lo:hi]):
                    buf.write(f"{b} {i} {j} {var} {float(-coef / s)!r}\n")
        text = buf.getvalue()
        if fp is not None:
            fp.write(text)
        return text


@dataclass
class ConicSolution:
    status: Status
    x: np.ndarray
    z: np.ndarray  # dual multipliers, one per constraint row (svec form on PSD rows)
    primal_objective: float
    dual_objective: float
    primal_residual: float
    dual_residual: float
    gap: float  # |primal - dual| / max(1, |primal|)
    iterations: int
    solve_seconds: float
    backend: str
    raw_status: str


def _cone_violation(v: np.ndarray, k: Cone, dual: bool = False) -> float:
    if v.size == 0:
        return 0.0
    if k.kind == "zero":
        return 0.0 if dual else float(np.max(np.abs(v)))
    if k.kind == "nonneg":
        return float(max(0.0, -np.min(v)))
    return float(max(0.0, -np.linalg.eigvalsh(smat(v, k.dim)).min()))


def residuals(problem: ConeProblem, x: np.ndarray, z: np.ndarray) -> tuple[float, float, float, float]:
    """Independently re-evaluated (primal residual, dual residual, primal obj, dual obj)."""
    sgn = 1.0 if problem.sense == "min" else -1.0
    s = problem.h - problem.G @ x
    pres = max((_cone_violation(s[sl], k) for k, sl in problem.cone_slices()), default=0.0)
    dres_cone = max((_cone_violation(z[sl], k, dual=True) for k, sl in problem.cone_slices()), default=0.0)
    stat = problem.G.T @ z + sgn * problem.c
    dres = max(float(np.max(np.abs(stat), initial=0.0)), dres_cone)
    pobj = problem.objective(x)
    dobj = -sgn * float(problem.h @ z) + problem.offset
    scale_p = 1.0 + float(np.max(np.abs(problem.h), initial=0.0))
    scale_d = 1.0 + float(np.max(np.abs(problem.c), initial=0.0))
    return pres / scale_p, dres / scale_d, pobj, dobj


def _finish(problem, x, z, status, iters, secs, backend, raw) -> ConicSolution:
    pres, dres, pobj, dobj = residuals(problem, x, z)
    gap = abs(pobj - dobj) / max(1.0, abs(pobj))
    return ConicSolution(status, x, z, pobj, dobj, pres, dres, gap, iters, secs, backend, raw)


def _solve_clarabel(problem: ConeProblem, tol: float) -> ConicSolution:
    import clarabel

    sgn = 1.0 if problem.sense == "min" else -1.0
    n = problem.num_vars
    cones = []
    for k in problem.cones:
        if k.rows == 0:
            continue
        if k.kind == "zero":
            cones.append(clarabel.ZeroConeT(k.dim))
        elif k.kind == "nonneg":
            cones.append(clarabel.NonnegativeConeT(k.dim))
        else:
            cones.append(clarabel.PSDTriangleConeT(k.dim))
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.tol_feas = tol
    settings.tol_ktratio = 1e-7
    settings.max_iter = 400
    settings.presolve_enable = False
    P = sp.csc_matrix((n, n))
    t0 = time.perf_counter()
    solver = clarabel.DefaultSolver(P, sgn * problem.c, problem.G, problem.h, cones, settings)
    sol = solver.solve()
    secs = time.perf_counter() - t0
    raw = str(sol.status)
    x = np.array(sol.x, dtype=float)
    z = np.array(sol.z, dtype=float)
    if "Infeasible" in raw and "Almost" not in raw:
        status = Status.INFEASIBLE
    elif raw.endswith("Solved"):
        status = Status.OPTIMAL
    else:
        status = Status.NUMERICAL_TROUBLE
    out = _finish(problem, x, z, status, int(sol.iterations), secs, "clarabel", raw)
    if status is Status.OPTIMAL and "Almost" in raw and max(out.primal_residual, out.gap) > 1e-6:
        out.status = Status.NUMERICAL_TROUBLE
    return out


def _solve_cvxopt(problem: ConeProblem, tol: float) -> ConicSolution:
    import cvxopt
    from cvxopt import solvers

    sgn = 1.0 if problem.sense == "min" else -1.0
    G = problem.G.tocsr()
    eq_rows, l_rows, s_blocks = [], [], []
    for k, sl in problem.cone_slices():
        rows = list(range(sl.start, sl.stop))
        if k.kind == "zero":
            eq_rows += rows
        elif k.kind == "nonneg":
            l_rows += rows
        else:
            s_blocks.append((k, sl))

    # expand svec rows of each PSD block to full column-major matrices
    full_G, full_h, row_maps = [G[l_rows]], [problem.h[l_rows]], []
    for k, sl in s_blocks:
        d = k.dim
        rr, cc = tri_indices(d)
        scale = svec_scale(d)
        pick, wts = np.empty(d * d, dtype=int), np.empty(d * d)
        for local, (i, j) in enumerate(zip(rr, cc)):
            for a, b in ((i, j), (j, i)):
                pick[b * d + a] = sl.start + local
                wts[b * d + a] = 1.0 / scale[local]
        full_G.append(sp.diags(wts) @ G[pick])
        full_h.append(problem.h[pick] * wts)
        row_maps.append((sl, d, rr, cc, scale))
    Gf = sp.vstack(full_G).tocoo()
    hf = np.concatenate(full_h)
    dims = {"l": len(l_rows), "q": [], "s": [k.dim for k, _ in s_blocks]}

    def spm(M):
        M = M.tocoo()
        return cvxopt.spmatrix(M.data.tolist(), M.row.tolist(), M.col.tolist(), M.shape)

    kwargs = {}
    if eq_rows:
        kwargs["A"] = spm(G[eq_rows])
        kwargs["b"] = cvxopt.matrix(problem.h[eq_rows])
    opts = {"show_progress": False, "abstol": tol, "reltol": tol, "feastol": tol, "maxiters": 200}
    t0 = time.perf_counter()
    try:
        sol = solvers.conelp(cvxopt.matrix(sgn * problem.c), spm(Gf), cvxopt.matrix(hf), dims,
                             options=opts, **kwargs)
    except (ArithmeticError, ValueError) as exc:
        raise SolverError(f"cvxopt failed: {exc}") from exc
    secs = time.perf_counter() - t0
    raw = sol["status"]
    if sol["x"] is None:
        x = np.zeros(problem.num_vars)
    else:
        x = np.array(sol["x"]).ravel()
    z = np.zeros(problem.num_rows)
    if sol["z"] is not None:
        zf = np.array(sol["z"]).ravel()
        z[l_rows] = zf[: len(l_rows)]
        pos = len(l_rows)
        for sl, d, rr, cc, scale in row_maps:
            Zm = zf[pos : pos + d * d].reshape(d, d, order="F")
            Zm = 0.5 * (Zm + Zm.T)
            z[sl] = Zm[rr, cc] * scale
            pos += d * d
    if eq_rows and sol["y"] is not None:
        z[eq_rows] = np.array(sol["y"]).ravel()
    if raw == "optimal":
        status = Status.OPTIMAL
    elif "infeasible" in raw:
        status = Status.INFEASIBLE
    else:
        status = Status.NUMERICAL_TROUBLE
    return _finish(problem, x, z, status, int(sol.get("iterations", 0)), secs, "cvxopt", raw)


BACKENDS: dict[str, Callable[[ConeProblem, float], ConicSolution]] = {
    "clarabel": _solve_clarabel,
    "cvxopt": _solve_cvxopt,
}


def solve_conic(problem: ConeProblem, backend: str = "clarabel", tol: float = 1e-9) -> ConicSolution:
    try:
        impl = BACKENDS[backend]
    except KeyError:
        raise SolverError(f"unknown backend {backend!r}; choose from {sorted(BACKENDS)}") from None
    try:
        return impl(problem, tol)
    except SolverError:
        raise
    except Exception as exc:  # backend-internal failures
        raise SolverError(f"{backend} backend failed: {exc}") from exc
