"""Filtered upper bounds over (alpha, N) grids and small-gain certificates."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DimensionMismatch, L2PlusError, SolverError
from .filterbank import PositiveFilterSpec, augment
from .linsys import (
    StateSpace,
    default_step,
    hinf_norm,
    max_real_eig,
    sample_lower_bound_2plus,
    validate_for_analysis,
)
from .sdp import assemble_primal, certify_primal, solve

logger = logging.getLogger(__name__)

DEFAULT_ALPHAS = (-1.0, -1.2, -1.4)
DEFAULT_N_MAX = 15
MONOTONE_SLACK = 1e-6

__all__ = [
    "BoundCell",
    "BoundReport",
    "SmallGainCertificate",
    "FeedbackTrajectory",
    "compute_cell",
    "compute_bound",
    "sweep",
    "certify_small_gain",
    "relu_feedback_sim",
    "default_mixing",
]


@dataclass
class BoundCell:
    alpha: float
    N: int
    gamma: float | None
    status: str
    seconds: float
    gap: float | None = None
    message: str = ""
    gamma_certified: float | None = None  # exactly feasible, slightly above gamma


def compute_cell(ss: StateSpace, alpha: float, N: int, backend: str | None = None,
                 tol: float = 1e-10, validate: bool = True) -> BoundCell:
    """Solve one (alpha, N) SDP; failures are recorded rather than raised."""
    t0 = time.perf_counter()
    try:
        if validate:
            validate_for_analysis(ss)
        aug = augment(ss, PositiveFilterSpec(alpha, N, ss.n_w))
        res = solve(assemble_primal(aug), backend=backend, tol=tol)
        cert = certify_primal(aug, res) if res.ok else None
    except L2PlusError as exc:
        return BoundCell(alpha, N, None, "Error", time.perf_counter() - t0, None, str(exc))
    return BoundCell(alpha, N, res.gamma, res.status.value, time.perf_counter() - t0, res.gap,
                     "" if res.ok else res.raw_status, cert.gamma if cert else None)


def compute_bound(ss: StateSpace, alpha: float, N: int, backend: str | None = None,
                  tol: float = 1e-10, certified: bool = False) -> float:
    """Upper bound on the L2 gain under nonnegative inputs from the degree-``N`` filter.

    ``N = 0`` gives the filter-free bound (``alpha`` is then ignored). The
    solver optimum is returned by default; with ``certified`` the value of
    an exactly feasible point near it (see :func:`certify_primal`).
    """
    validate_for_analysis(ss)
    aug = augment(ss, PositiveFilterSpec(alpha, N, ss.n_w))
    try:
        res = solve(assemble_primal(aug), backend=backend, tol=tol)
        if not res.ok:
            raise SolverError(f"solver returned {res.raw_status}")
        return certify_primal(aug, res).gamma if certified else res.gamma
    except SolverError as exc:
        raise SolverError(f"(alpha={alpha}, N={N}): {exc}") from exc


def _num(x) -> str:
    # shortest repr that round-trips the double exactly
    return "" if x is None else repr(float(x))


@dataclass
class BoundReport:
    system: str
    hinf: float
    cells: list[BoundCell]
    lower_bound: float | None = None
    lower_bound_meta: dict = field(default_factory=dict)
    monotone: dict = field(default_factory=dict)
    improvement: dict = field(default_factory=dict)
    sandwich: dict = field(default_factory=dict)

    def alphas(self) -> list[float]:
        return sorted({c.alpha for c in self.cells}, reverse=True)

    def column(self, alpha: float) -> list[BoundCell]:
        return sorted((c for c in self.cells if c.alpha == alpha), key=lambda c: c.N)

    def table(self) -> dict[float, dict[int, float | None]]:
        return {a: {c.N: c.gamma for c in self.column(a)} for a in self.alphas()}

    def best(self) -> BoundCell | None:
        ok = [c for c in self.cells if c.gamma is not None and c.status == "Optimal"]
        return min(ok, key=lambda c: (c.gamma, -abs(c.alpha), -c.N)) if ok else None

    def failed(self) -> list[BoundCell]:
        return [c for c in self.cells if c.status != "Optimal"]

    def evaluate(self, slack: float = MONOTONE_SLACK) -> None:
        """Fill in the per-alpha monotonicity and improvement verdicts."""
        self.monotone, self.improvement, self.sandwich = {}, {}, {}
        for a in self.alphas():
            vals = [(c.N, c.gamma) for c in self.column(a) if c.gamma is not None]
            worst = max((g1 - g0 for (_, g0), (_, g1) in zip(vals, vals[1:])), default=0.0)
            self.monotone[a] = {"non_increasing": worst <= slack, "max_increase": max(worst, 0.0)}
            base = dict(vals).get(0)
            if base is not None:
                excess = max((g - base for _, g in vals), default=0.0)
                self.improvement[a] = {"no_worse_than_unfiltered": excess <= slack,
                                       "max_excess": max(excess, 0.0)}
            outside = [c for c in self.column(a) if c.gamma is not None and (
                c.gamma > self.hinf + slack
                or (self.lower_bound is not None and c.gamma < self.lower_bound - slack))]
            self.sandwich[a] = {"within": not outside, "cells": [c.N for c in outside]}
            if worst > slack:
                warnings.warn(f"alpha={a}: bound increases by {worst:.3e} between consecutive N",
                              RuntimeWarning, stacklevel=2)

    def to_dict(self) -> dict:
        return {
            "system": self.system,
            "hinf": self.hinf,
            "lower_bound": self.lower_bound,
            "lower_bound_meta": self.lower_bound_meta,
            "cells": [asdict(c) for c in sorted(self.cells, key=lambda c: (-c.alpha, c.N))],
            "monotone": {repr(a): v for a, v in self.monotone.items()},
            "improvement": {repr(a): v for a, v in self.improvement.items()},
            "sandwich": {repr(a): v for a, v in self.sandwich.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "BoundReport":
        rep = cls(
            system=data["system"],
            hinf=data["hinf"],
            cells=[BoundCell(**c) for c in data["cells"]],
            lower_bound=data.get("lower_bound"),
            lower_bound_meta=data.get("lower_bound_meta", {}),
        )
        rep.monotone = {float(k): v for k, v in data.get("monotone", {}).items()}
        rep.improvement = {float(k): v for k, v in data.get("improvement", {}).items()}
        rep.sandwich = {float(k): v for k, v in data.get("sandwich", {}).items()}
        return rep

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["alpha", "N", "gamma", "status", "gap", "seconds"])
        for c in sorted(self.cells, key=lambda c: (-c.alpha, c.N)):
            w.writerow([_num(c.alpha), c.N, _num(c.gamma), c.status, _num(c.gap), _num(c.seconds)])
        return buf.getvalue()


def _cell_job(args):
    ss_dict, alpha, N, backend, tol = args
    return compute_cell(StateSpace.from_dict(ss_dict), alpha, N, backend, tol, validate=False)


def sweep(
    ss: StateSpace,
    alphas=DEFAULT_ALPHAS,
    N_max: int = DEFAULT_N_MAX,
    *,
    system: str = "G",
    lower_bound_trials: int = 200,
    seed: int = 0,
    workers: int = 1,
    backend: str | None = None,
    tol: float = 1e-10,
) -> BoundReport:
    """Bounds for every ``alpha`` in ``alphas`` and ``N = 0..N_max``.

    The filter-free cell does not depend on ``alpha`` and is solved once.
    Set ``lower_bound_trials=0`` to skip the sampled lower bound.
    """
    if N_max < 0:
        raise DimensionMismatch("N_max must be nonnegative")
    alphas = [float(a) for a in alphas]
    if not alphas:
        raise DimensionMismatch("at least one alpha is required")
    validate_for_analysis(ss)
    hinf = hinf_norm(ss)

    jobs = [(ss.to_dict(), alphas[0], 0, backend, tol)]
    jobs += [(ss.to_dict(), a, N, backend, tol) for a in alphas for N in range(1, N_max + 1)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_cell_job, jobs))
    else:
        results = [_cell_job(j) for j in jobs]
    base = results[0]
    cells = [BoundCell(a, 0, base.gamma, base.status, base.seconds, base.gap, base.message,
                       base.gamma_certified) for a in alphas]
    cells += results[1:]
    cells.sort(key=lambda c: (-c.alpha, c.N))
    for c in cells:
        if c.status != "Optimal":
            logger.warning("cell alpha=%s N=%s failed: %s %s", c.alpha, c.N, c.status, c.message)

    rep = BoundReport(system=system, hinf=hinf, cells=cells)
    if lower_bound_trials > 0:
        lam = max_real_eig(ss.A)
        horizon = max(10.0 / abs(lam), 20.0)
        rep.lower_bound = sample_lower_bound_2plus(ss, lower_bound_trials, horizon, seed)
        rep.lower_bound_meta = {"trials": lower_bound_trials, "horizon": horizon, "seed": seed,
                                "dt": default_step(ss.A)}
    rep.evaluate()
    return rep


@dataclass
class SmallGainCertificate:
    method: str  # "L2", "L2plus" or "none"
    gamma_used: float | None
    hinf: float
    bound: float | None = None
    alpha: float | None = None
    N: int | None = None

    @property
    def certified(self) -> bool:
        return self.method != "none"


def certify_small_gain(ss: StateSpace, alpha: float = -1.4, N: int = 15,
                       backend: str | None = None) -> SmallGainCertificate:
    """Global stability certificate for the loop ``w = Phi(z)``.

    ``Phi`` is any static map with nonnegative outputs and unit L2 gain; ``ss``
    need not be square since ``Phi`` may mix channels. The
    standard small-gain test is tried first; the filtered nonnegative-input
    bound is only computed when that fails.
    """
    hinf = hinf_norm(ss)
    if hinf < 1.0:
        return SmallGainCertificate("L2", hinf, hinf)
    bound = compute_bound(ss, alpha, N, backend=backend)
    if bound < 1.0:
        return SmallGainCertificate("L2plus", bound, hinf, bound, alpha, N)
    return SmallGainCertificate("none", None, hinf, bound, alpha, N)


@dataclass
class FeedbackTrajectory:
    times: np.ndarray
    states: np.ndarray
    sup_norm: float
    final_norm: float
    diverged: bool

    @property
    def bounded(self) -> bool:
        return not self.diverged


def default_mixing(n_z: int, n_w: int) -> np.ndarray:
    """Unit-norm ``n_w x n_z`` gain: identity when square, else a scaled all-ones matrix."""
    if n_z == n_w:
        return np.eye(n_w)
    return np.ones((n_w, n_z)) / math.sqrt(n_w * n_z)


def relu_feedback_sim(ss: StateSpace, x0, horizon: float = 50.0, dt: float | None = None,
                      mixing=None, nonlinearity=None, blowup: float = 1e6) -> FeedbackTrajectory:
    """Simulate ``x' = A x + B Phi(z)``, ``z = C x + D Phi(z)`` with RK4.

    ``Phi(z) = max(K z, 0)`` with ``K = mixing``, by default
    :func:`default_mixing`. A direct feedthrough ``D`` makes the loop
    implicit; it is resolved by fixed-point iteration at every evaluation.
    ``nonlinearity`` replaces ``Phi`` entirely when given.
    """
    if nonlinearity is None:
        if mixing is None:
            K = default_mixing(ss.n_z, ss.n_w)
        else:
            K = np.asarray(mixing, dtype=float)
            if K.shape != (ss.n_w, ss.n_z):
                raise DimensionMismatch(f"mixing must be {(ss.n_w, ss.n_z)}, got {K.shape}")

        def nonlinearity(z):
            return np.maximum(K @ z, 0.0)

    x = np.asarray(x0, dtype=float).ravel().copy()
    if x.size != ss.n:
        raise DimensionMismatch(f"x0 must have {ss.n} entries")
    if dt is None:
        dt = default_step(ss.A)
    has_d = bool(np.any(ss.D))

    def loop_input(x):
        cx = ss.C @ x
        w = nonlinearity(cx)
        if has_d:
            for _ in range(200):
                w_new = nonlinearity(cx + ss.D @ w)
                if np.max(np.abs(w_new - w)) <= 1e-13 * (1.0 + np.max(np.abs(w_new))):
                    w = w_new
                    break
                w = w_new
            else:
                raise SolverError("algebraic loop through D did not converge")
        return w

    def f(x):
        return ss.A @ x + ss.B @ loop_input(x)

    steps = int(math.ceil(horizon / dt))
    X = np.empty((steps + 1, ss.n))
    X[0] = x
    diverged = False
    last = 0
    for k in range(steps):
        k1 = f(x)
        k2 = f(x + 0.5 * dt * k1)
        k3 = f(x + 0.5 * dt * k2)
        k4 = f(x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        X[k + 1] = x
        last = k + 1
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > blowup:
            diverged = True
            break
    X = X[: last + 1]
    norms = np.linalg.norm(X, axis=1)
    return FeedbackTrajectory(dt * np.arange(last + 1), X, float(np.max(norms)), float(norms[-1]),
                              diverged)
