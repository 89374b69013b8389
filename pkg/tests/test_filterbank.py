import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.linalg import expm

from l2plus.errors import DimensionMismatch, InvalidAlpha
from l2plus.filterbank import PositiveFilterSpec, augment, build_positive_filter, jordan_block
from l2plus.linsys import StateSpace, is_internally_positive, is_metzler
from l2plus.sdp import filter_gramian


def test_jordan_kron_hand_expanded():
    A_p, B_p = build_positive_filter(PositiveFilterSpec(-2.0, 2, 2))
    expected_A = np.array([
        [-2, 0, 1, 0],
        [0, -2, 0, 1],
        [0, 0, -2, 0],
        [0, 0, 0, -2],
    ], dtype=float)
    expected_B = np.array([[0, 0], [0, 0], [1, 0], [0, 1]], dtype=float)
    assert np.array_equal(A_p, expected_A)
    assert np.array_equal(B_p, expected_B)


def test_jordan_block():
    assert np.array_equal(jordan_block(-1.5, 3), [[-1.5, 1, 0], [0, -1.5, 1], [0, 0, -1.5]])


def test_alpha_must_be_negative_when_filtering():
    with pytest.raises(InvalidAlpha):
        PositiveFilterSpec(0.0, 1, 1)
    with pytest.raises(InvalidAlpha):
        PositiveFilterSpec(0.3, 4, 2)
    PositiveFilterSpec(0.3, 0, 2)  # alpha unused without a filter


def test_bad_degrees():
    with pytest.raises(DimensionMismatch):
        PositiveFilterSpec(-1.0, -1, 1)
    with pytest.raises(DimensionMismatch):
        PositiveFilterSpec(-1.0, 2, 0)
    with pytest.raises(DimensionMismatch):
        build_positive_filter(PositiveFilterSpec(-1.0, 0, 1))


@settings(max_examples=40, deadline=None)
@given(st.floats(-5, -0.05), st.integers(1, 8), st.integers(1, 3))
def test_filter_is_internally_positive(alpha, N, n_w):
    aug = augment(_plant(n_w), PositiveFilterSpec(alpha, N, n_w))
    assert is_metzler(aug.A_p)
    assert is_internally_positive(aug.filter_statespace())
    assert aug.A_p.shape == (N * n_w, N * n_w)
    assert np.max(np.linalg.eigvals(aug.A_p).real) == pytest.approx(alpha)


def _plant(n_w, n=3):
    A = -np.eye(n) + 0.1 * np.eye(n, k=1)
    B = np.ones((n, n_w))
    C = np.ones((1, n))
    return StateSpace(A, B, C, np.zeros((1, n_w)))


def test_filter_channels_are_repeated_poles():
    alpha, N = -1.3, 4
    aug = augment(_plant(1), PositiveFilterSpec(alpha, N, 1))
    filt = aug.filter_statespace()
    s = 0.7 + 1.1j
    G = filt.evalfr(s)[:, 0]
    expected = [1 / (s - alpha) ** (N - i) for i in range(N)] + [1.0]
    assert np.allclose(G, expected)


def test_augmented_plant_output_unchanged(mimo):
    aug = augment(mimo, PositiveFilterSpec(-1.2, 3, 2))
    for s in (0.0, 0.5j, 2.0 + 1j):
        assert np.allclose(aug.as_statespace().evalfr(s), mimo.evalfr(s))
    assert aug.n_a == 5 + 6
    assert aug.C_zp.shape == (8, 11) and aug.D_zp.shape == (8, 2)


def test_augment_without_filter(siso):
    aug = augment(siso, PositiveFilterSpec(-1.0, 0, 1))
    assert aug.n_a == siso.n
    assert np.array_equal(aug.A_a, siso.A)
    assert np.array_equal(aug.D_zp, np.eye(1))


def test_augment_dimension_check(siso):
    with pytest.raises(DimensionMismatch):
        augment(siso, PositiveFilterSpec(-1.0, 2, 2))


def test_filter_gramian_closed_form():
    # exp(J t) e_2 = e^{alpha t} [t, 1]; integrate the outer product
    alpha = -0.8
    A_p, B_p = build_positive_filter(PositiveFilterSpec(alpha, 2, 1))
    Z = filter_gramian(A_p, B_p, 1)
    a = -2 * alpha
    expected = np.array([[2 / a**3, 1 / a**2], [1 / a**2, 1 / a]])
    assert np.allclose(Z, expected, rtol=1e-12)


def test_filter_gramian_quadrature():
    A_p, B_p = build_positive_filter(PositiveFilterSpec(-1.4, 3, 2))
    Z = filter_gramian(A_p, B_p, 2)
    b = B_p @ np.ones((2, 1))
    for i, j in [(0, 0), (0, 5), (2, 3), (5, 5)]:
        val, _ = quad(lambda t: (expm(A_p * t) @ b)[i, 0] * (expm(A_p * t) @ b)[j, 0], 0, math.inf)
        assert Z[i, j] == pytest.approx(val, rel=1e-8)
    assert np.all(Z > 0)
