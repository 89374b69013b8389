"""Dense linear-system kernels.

State-space container, Lyapunov solves, positivity and controllability tests,
zero-order-hold simulation, the standard L2 induced (H-infinity) norm and a
sampling heuristic for lower bounds of the L2 gain under nonnegative inputs.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy.linalg import expm, solve_continuous_lyapunov

from .errors import DimensionMismatch, NotControllable, NotHurwitz, SolverError

TOL_HURWITZ = 1e-9
TOL_SIGN = 1e-12
# Kronecker-form Lyapunov solves are used up to this state dimension.
KRON_MAX_N = 40

__all__ = [
    "StateSpace",
    "Signal",
    "solve_lyapunov",
    "max_real_eig",
    "is_hurwitz",
    "is_metzler",
    "is_internally_positive",
    "is_controllable",
    "validate_for_analysis",
    "default_step",
    "zoh_discretize",
    "simulate",
    "hinf_norm",
    "sample_lower_bound_2plus",
    "impulse_response_nonnegative",
]


def _as_matrix(name: str, value: Any) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DimensionMismatch(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Continuous-time LTI system ``x' = A x + B w``, ``z = C x + D w``.

    Matrices are copied to read-only float arrays on construction.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        for name in "ABCD":
            object.__setattr__(self, name, _as_matrix(name, getattr(self, name)))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise DimensionMismatch(f"A must be square, got shape {self.A.shape}")
        if n == 0:
            raise DimensionMismatch("A must have at least one state")
        if self.B.shape[0] != n:
            raise DimensionMismatch(f"B must have {n} rows, got {self.B.shape[0]}")
        if self.C.shape[1] != n:
            raise DimensionMismatch(f"C must have {n} columns, got {self.C.shape[1]}")
        if self.D.shape != (self.C.shape[0], self.B.shape[1]):
            raise DimensionMismatch(
                f"D must have shape {(self.C.shape[0], self.B.shape[1])}, got {self.D.shape}"
            )
        if self.B.shape[1] == 0 or self.C.shape[0] == 0:
            raise DimensionMismatch("B and C must have at least one column/row")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def n_w(self) -> int:
        return self.B.shape[1]

    @property
    def n_z(self) -> int:
        return self.C.shape[0]

    def __eq__(self, other):
        if not isinstance(other, StateSpace):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in "ABCD")

    def __hash__(self):
        return hash(tuple(getattr(self, k).tobytes() for k in "ABCD"))

    def evalfr(self, s: complex) -> np.ndarray:
        """Transfer matrix ``C (sI - A)^{-1} B + D`` at the complex point ``s``."""
        return self.C @ np.linalg.solve(s * np.eye(self.n) - self.A, self.B) + self.D

    def scale_output(self, k: float) -> "StateSpace":
        return StateSpace(self.A, self.B, k * self.C, k * self.D)

    def transform(self, T: np.ndarray) -> "StateSpace":
        """State similarity ``x = T xt``."""
        Ti = np.linalg.inv(T)
        return StateSpace(Ti @ self.A @ T, Ti @ self.B, self.C @ T, self.D)

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in "ABCD"}

    @classmethod
    def from_dict(cls, data: dict) -> "StateSpace":
        if not isinstance(data, dict):
            raise DimensionMismatch("system description must be a JSON object")
        missing = [k for k in "ABCD" if k not in data]
        if missing:
            raise DimensionMismatch(f"missing field(s): {', '.join(missing)}")
        extra = sorted(set(data) - set("ABCD"))
        if extra:
            raise DimensionMismatch(f"unknown field(s): {', '.join(extra)}")
        mats = {}
        for k in "ABCD":
            try:
                mats[k] = np.array(data[k], dtype=float)
            except (TypeError, ValueError) as exc:
                raise DimensionMismatch(f"field {k}: not a numeric matrix ({exc})") from None
            if mats[k].ndim != 2:
                raise DimensionMismatch(f"field {k}: expected nested row arrays")
        return cls(**mats)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "StateSpace":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class Signal:
    """Uniformly sampled signal; ``values`` has one row per sample time."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).ravel()
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != t.size:
            raise DimensionMismatch(f"{t.size} sample times but {v.shape[0]} value rows")
        if t.size >= 2:
            steps = np.diff(t)
            if np.any(steps <= 0):
                raise DimensionMismatch("sample times must be strictly increasing")
            if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
                raise DimensionMismatch("sample grid must be uniform")
        if t.size and t[0] < 0:
            raise DimensionMismatch("sample times must be nonnegative")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @classmethod
    def uniform(cls, values, dt: float, t0: float = 0.0) -> "Signal":
        v = np.asarray(values, dtype=float)
        if dt <= 0:
            raise DimensionMismatch("dt must be positive")
        return cls(t0 + dt * np.arange(v.shape[0]), v)

    @property
    def dt(self) -> float:
        if self.times.size < 2:
            raise DimensionMismatch("a single sample has no step")
        return float(self.times[1] - self.times[0])

    @property
    def channels(self) -> int:
        return self.values.shape[1]

    def l2_norm(self) -> float:
        """Energy norm treating each sample as held over one step."""
        return math.sqrt(self.dt * float(np.sum(self.values**2)))

    def is_nonnegative(self, tol: float = 0.0) -> bool:
        return bool(np.all(self.values >= -tol))


def max_real_eig(A) -> float:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {A.shape}")
    try:
        return float(np.max(np.linalg.eigvals(A).real))
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"eigenvalue computation failed: {exc}") from exc


def is_hurwitz(A, tol: float = TOL_HURWITZ) -> bool:
    return max_real_eig(A) < -tol


def _require_hurwitz(A, what: str = "A") -> float:
    lam = max_real_eig(A)
    if lam >= -TOL_HURWITZ:
        raise NotHurwitz(f"{what} is not Hurwitz (max real eigenvalue {lam:.3e})")
    return lam


def solve_lyapunov(A, Q) -> np.ndarray:
    """Solve ``A^T P + P A + Q = 0`` for symmetric ``P``.

    Small problems use the Kronecker (vectorized) form; larger ones fall back
    to Bartels-Stewart. Raises NotHurwitz unless ``A`` is Hurwitz.
    """
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    n = A.shape[0]
    if Q.shape != (n, n):
        raise DimensionMismatch(f"Q must be {n}x{n}, got {Q.shape}")
    _require_hurwitz(A)
    Q = 0.5 * (Q + Q.T)
    try:
        if n <= KRON_MAX_N:
            eye = np.eye(n)
            L = np.kron(eye, A.T) + np.kron(A.T, eye)
            rhs = -Q.reshape(-1, order="F")
            p = np.linalg.solve(L, rhs)
            # one step of iterative refinement
            p += np.linalg.solve(L, rhs - L @ p)
            P = p.reshape(n, n, order="F")
        else:
            P = solve_continuous_lyapunov(A.T, -Q)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverError(f"Lyapunov equation is singular: {exc}") from exc
    return 0.5 * (P + P.T)


def is_metzler(A, tol: float = TOL_SIGN) -> bool:
    A = np.asarray(A, dtype=float)
    off = A - np.diag(np.diag(A))
    return bool(np.all(off >= -tol))


def is_internally_positive(ss: StateSpace, tol: float = TOL_SIGN) -> bool:
    return (
        is_metzler(ss.A, tol)
        and bool(np.all(ss.B >= -tol))
        and bool(np.all(ss.C >= -tol))
        and bool(np.all(ss.D >= -tol))
    )


def is_controllable(A, B) -> bool:
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    n = A.shape[0]
    if A.shape != (n, n) or B.shape[0] != n:
        raise DimensionMismatch(f"incompatible shapes A{A.shape}, B{B.shape}")
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    sv = np.linalg.svd(np.hstack(blocks), compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return False
    return int(np.sum(sv > n * sv[0] * 1e-10)) == n


def validate_for_analysis(ss: StateSpace) -> None:
    """Entry check for bound computations: Hurwitz ``A`` and controllable ``(A, B)``."""
    _require_hurwitz(ss.A)
    if not is_controllable(ss.A, ss.B):
        raise NotControllable("the pair (A, B) is not controllable")


def default_step(A) -> float:
    lam = abs(max_real_eig(A))
    if lam == 0.0:
        return 0.01
    return min(0.01, 0.1 / lam)


def zoh_discretize(A, B, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact zero-order-hold discretization from one block matrix exponential."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n, m = B.shape
    M = np.zeros((n + m, n + m))
    M[:n, :n] = A
    M[:n, n:] = B
    E = expm(M * dt)
    return E[:n, :n], E[:n, n:]


def _zoh_output_gramian(ss: StateSpace, dt: float):
    """Ad, Bd and the exact per-step output energy weight (Van Loan).

    For a zero-order-held input the output energy over one step equals
    ``[x_k; w_k]^T W [x_k; w_k]``.
    """
    n, m = ss.n, ss.n_w
    k = n + m
    F = np.zeros((k, k))
    F[:n, :n] = ss.A
    F[:n, n:] = ss.B
    H = np.hstack([ss.C, ss.D])
    Qc = H.T @ H
    V = np.zeros((2 * k, 2 * k))
    V[:k, :k] = -F.T
    V[:k, k:] = Qc
    V[k:, k:] = F
    E = expm(V * dt)
    Phi = E[k:, k:]
    W = Phi.T @ E[:k, k:]
    W = 0.5 * (W + W.T)
    return Phi[:n, :n], Phi[:n, n:], W


def simulate(ss: StateSpace, w: Signal, x0=None) -> tuple[Signal, np.ndarray]:
    """Zero-order-hold simulation on the input's sample grid.

    Returns the output signal and the state trajectory (one row per sample).
    """
    if w.channels != ss.n_w:
        raise DimensionMismatch(f"input has {w.channels} channels, system expects {ss.n_w}")
    x = np.zeros(ss.n) if x0 is None else np.asarray(x0, dtype=float).ravel()
    if x.size != ss.n:
        raise DimensionMismatch(f"x0 must have {ss.n} entries")
    steps = w.values.shape[0]
    X = np.empty((steps, ss.n))
    if steps >= 2:
        Ad, Bd = zoh_discretize(ss.A, ss.B, w.dt)
    for k in range(steps):
        X[k] = x
        if k + 1 < steps:
            x = Ad @ x + Bd @ w.values[k]
    Z = X @ ss.C.T + w.values @ ss.D.T
    return Signal(w.times.copy(), Z), X


def _hamiltonian(ss: StateSpace, gamma: float) -> np.ndarray:
    A, B, C, D = ss.A, ss.B, ss.C, ss.D
    R = gamma**2 * np.eye(ss.n_w) - D.T @ D
    Ri = np.linalg.inv(R)
    Ah = A + B @ Ri @ D.T @ C
    top = np.hstack([Ah, B @ Ri @ B.T])
    bot = np.hstack([-C.T @ (np.eye(ss.n_z) + D @ Ri @ D.T) @ C, -Ah.T])
    return np.vstack([top, bot])


def _sigma_max(M: np.ndarray) -> float:
    return float(np.linalg.svd(M, compute_uv=False)[0])


def hinf_norm(ss: StateSpace, tol: float = 1e-6) -> float:
    """L2 induced norm of a stable system by Hamiltonian bisection.

    For ``gamma > sigma_max(D)``, ``gamma`` is below the norm exactly when the
    associated Hamiltonian matrix has an eigenvalue on the imaginary axis.
    Frequencies found on the axis also tighten the lower end of the bracket.
    """
    _require_hurwitz(ss.A)
    sd = _sigma_max(ss.D)
    if not ss.B.any() or not ss.C.any():
        return sd
    lo = max(sd, _sigma_max(ss.evalfr(0.0)))
    for lam in np.linalg.eigvals(ss.A):
        if abs(lam.imag) > 0:
            lo = max(lo, _sigma_max(ss.evalfr(1j * abs(lam.imag))))

    def crossing(gamma):
        if gamma <= sd * (1 + 1e-12):
            return True, []
        ev = np.linalg.eigvals(_hamiltonian(ss, gamma))
        on_axis = np.abs(ev.real) <= 1e-7 * np.maximum(1.0, np.abs(ev))
        return bool(np.any(on_axis)), [abs(e.imag) for e in ev[on_axis]]

    hi = max(2.0 * lo, tol)
    for _ in range(200):
        found, _ = crossing(hi)
        if not found:
            break
        lo = hi
        hi *= 2.0
    else:
        raise SolverError("could not bracket the H-infinity norm")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        found, freqs = crossing(mid)
        if found:
            lo = mid
            for w in freqs:
                lo = max(lo, min(_sigma_max(ss.evalfr(1j * w)), hi))
        else:
            hi = mid
    return 0.5 * (lo + hi)


def sample_lower_bound_2plus(
    ss: StateSpace,
    num_trials: int = 200,
    horizon: float | None = None,
    seed: int = 0,
    ascent_steps: int = 20,
    return_input: bool = False,
):
    """Heuristic lower bound of the L2 gain over nonnegative inputs.

    Each trial draws a piecewise-constant nonnegative input (segment count
    random in 1..64, levels ``|N(0,1)|``), normalized to unit energy. The
    trials are then improved by ``ascent_steps`` of projected ascent on the
    discretized output energy; every iterate stays a nonnegative
    piecewise-constant input and the energy never decreases. Output energy is
    integrated exactly for held inputs, and truncating the horizon can only
    lower the ratio, so the result never exceeds the true norm.
    """
    lam = _require_hurwitz(ss.A)
    if horizon is None:
        horizon = max(10.0 / abs(lam), 20.0)
    dt = default_step(ss.A)
    K = max(int(math.ceil(horizon / dt)), 1)
    n, m = ss.n, ss.n_w
    Ad, Bd, W = _zoh_output_gramian(ss, dt)
    rng = np.random.default_rng(seed)

    inputs = np.empty((K, m, num_trials))
    for j in range(num_trials):
        segs = int(2 ** rng.integers(0, 7))
        levels = np.abs(rng.standard_normal((segs, m)))
        idx = np.minimum((np.arange(K) * segs) // K, segs - 1)
        inputs[:, :, j] = levels[idx]

    def normalize(U):
        e = np.sqrt(dt * np.sum(U**2, axis=(0, 1)))
        e[e == 0] = 1.0
        return U / e

    def forward(U):
        X = np.empty((K, n, U.shape[2]))
        x = np.zeros((n, U.shape[2]))
        J = np.zeros(U.shape[2])
        for k in range(K):
            X[k] = x
            xi = np.vstack([x, U[k]])
            J += np.sum(xi * (W @ xi), axis=0)
            x = Ad @ x + Bd @ U[k]
        return X, J

    U = normalize(inputs)
    X, J = forward(U)
    for _ in range(ascent_steps):
        G = np.empty_like(U)
        lam_next = np.zeros((n, num_trials))
        for k in range(K - 1, -1, -1):
            xi = np.vstack([X[k], U[k]])
            Wxi = W @ xi
            G[k] = 2.0 * Wxi[n:] + Bd.T @ lam_next
            lam_next = 2.0 * Wxi[:n] + Ad.T @ lam_next
        Gp = np.maximum(G, 0.0)
        dead = ~np.any(Gp > 0, axis=(0, 1))
        Gp[:, :, dead] = U[:, :, dead]
        U_new = normalize(Gp)
        X_new, J_new = forward(U_new)
        better = J_new >= J
        U[:, :, better] = U_new[:, :, better]
        X[:, :, better] = X_new[:, :, better]
        J[better] = J_new[better]

    best = int(np.argmax(J))
    value = math.sqrt(max(float(J[best]), 0.0))
    if return_input:
        return value, Signal.uniform(U[:, :, best], dt)
    return value


def impulse_response_nonnegative(ss: StateSpace, horizon: float = 20.0, samples: int = 2001,
                                 tol: float = 1e-9) -> bool:
    """Sampled probe of external positivity (test fixtures only, not a proof)."""
    ts = np.linspace(0.0, horizon, samples)
    for t in ts:
        if np.any(ss.C @ expm(ss.A * t) @ ss.B < -tol):
            return False
    return bool(np.all(ss.D >= -tol))
