"""Positive filters of Jordan-block form and the plant/filter augmented system."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidAlpha
from .linsys import StateSpace

__all__ = ["PositiveFilterSpec", "AugmentedSystem", "build_positive_filter", "augment"]


@dataclass(frozen=True)
class PositiveFilterSpec:
    """Filter with pole ``alpha`` repeated ``N`` times per input channel.

    ``N = 0`` means no filter. ``alpha`` is only constrained when ``N >= 1``.
    """

    alpha: float
    N: int
    n_w: int

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 0:
            raise DimensionMismatch(f"filter degree must be a nonnegative integer, got {self.N}")
        if int(self.n_w) != self.n_w or self.n_w < 1:
            raise DimensionMismatch(f"n_w must be a positive integer, got {self.n_w}")
        if self.N > 0 and not self.alpha < 0:
            raise InvalidAlpha(f"filter pole must be negative, got alpha={self.alpha}")
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "n_w", int(self.n_w))

    @property
    def n_p(self) -> int:
        return self.N * self.n_w


def jordan_block(alpha: float, N: int) -> np.ndarray:
    return alpha * np.eye(N) + np.eye(N, k=1)


def build_positive_filter(spec: PositiveFilterSpec) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(A_p, B_p) = (J_{alpha,N} kron I, e_N kron I)``.

    The first ``n_w`` filter states carry ``1/(s - alpha)^N``, the last ``n_w``
    carry ``1/(s - alpha)``.
    """
    if spec.N < 1:
        raise DimensionMismatch("build_positive_filter needs N >= 1; N = 0 is handled by augment")
    if not spec.alpha < 0:
        raise InvalidAlpha(f"filter pole must be negative, got alpha={spec.alpha}")
    eye = np.eye(spec.n_w)
    e_last = np.zeros((spec.N, 1))
    e_last[-1, 0] = 1.0
    return np.kron(jordan_block(spec.alpha, spec.N), eye), np.kron(e_last, eye)


@dataclass(frozen=True, eq=False)
class AugmentedSystem:
    """Plant stacked with a positive filter driven by the same input.

    ``z = C_a x_a + D_a w`` is the plant output and ``z_p = C_zp x_a + D_zp w``
    collects the filter states followed by ``w``; it is nonnegative whenever
    ``w`` is.
    """

    plant: StateSpace
    spec: PositiveFilterSpec
    A_a: np.ndarray
    B_a: np.ndarray
    C_a: np.ndarray
    D_a: np.ndarray
    C_zp: np.ndarray
    D_zp: np.ndarray
    A_p: np.ndarray
    B_p: np.ndarray

    @property
    def n(self) -> int:
        return self.plant.n

    @property
    def n_p(self) -> int:
        return self.spec.n_p

    @property
    def n_w(self) -> int:
        return self.plant.n_w

    @property
    def n_z(self) -> int:
        return self.plant.n_z

    @property
    def n_a(self) -> int:
        return self.n + self.n_p

    def as_statespace(self) -> StateSpace:
        return StateSpace(self.A_a, self.B_a, self.C_a, self.D_a)

    def filter_statespace(self) -> StateSpace:
        """The filter alone with output ``z_p`` (requires ``N >= 1``)."""
        out_c = np.vstack([np.eye(self.n_p), np.zeros((self.n_w, self.n_p))])
        return StateSpace(self.A_p, self.B_p, out_c, self.D_zp)


def augment(ss: StateSpace, spec: PositiveFilterSpec) -> AugmentedSystem:
    if spec.n_w != ss.n_w:
        raise DimensionMismatch(f"filter built for n_w={spec.n_w}, plant has n_w={ss.n_w}")
    n, nw, nz, npp = ss.n, ss.n_w, ss.n_z, spec.n_p
    if spec.N > 0:
        A_p, B_p = build_positive_filter(spec)
    else:
        A_p, B_p = np.zeros((0, 0)), np.zeros((0, nw))
    A_a = np.zeros((n + npp, n + npp))
    A_a[:n, :n] = ss.A
    A_a[n:, n:] = A_p
    B_a = np.vstack([ss.B, B_p])
    C_a = np.hstack([ss.C, np.zeros((nz, npp))])
    C_zp = np.zeros((npp + nw, n + npp))
    C_zp[:npp, n:] = np.eye(npp)
    D_zp = np.vstack([np.zeros((npp, nw)), np.eye(nw)])
    mats = [A_a, B_a, C_a, ss.D.copy(), C_zp, D_zp, A_p, B_p]
    for m in mats:
        m.setflags(write=False)
    return AugmentedSystem(ss, spec, *mats)
