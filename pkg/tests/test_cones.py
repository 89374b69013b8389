import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from l2plus.cones import (
    CopositiveMultiplier,
    is_copositive_2x2,
    is_grid_copositive,
    metzler_lyapunov_solution,
    simplex_grid,
    simplex_min,
)
from l2plus.errors import DimensionMismatch, DimensionTooLarge, NotHurwitz, NotMetzler
from l2plus.sdp import psd_plus_nn_decompose, psd_plus_nn_margin


def test_simplex_grid_counts():
    X = simplex_grid(3, 4)
    assert X.shape == (15, 3)  # C(6, 2)
    assert np.allclose(X.sum(axis=1), 1.0)
    assert X.min() >= 0
    assert len({tuple(r) for r in X}) == 15


def test_simplex_min_known_values():
    assert simplex_min(np.eye(2)) == pytest.approx(0.5)
    val, x = simplex_min(np.array([[1.0, -2.0], [-2.0, 1.0]]), return_point=True)
    assert val == pytest.approx(-0.5)
    assert np.allclose(x, [0.5, 0.5])
    # Horn matrix is copositive with minimum 0 on the simplex
    horn = np.array([
        [1, -1, 1, 1, -1],
        [-1, 1, -1, 1, 1],
        [1, -1, 1, -1, 1],
        [1, 1, -1, 1, -1],
        [-1, 1, 1, -1, 1],
    ], dtype=float)
    assert simplex_min(horn, resolution=24) == pytest.approx(0.0, abs=1e-12)
    assert is_grid_copositive(horn, resolution=24)


def test_simplex_min_limits():
    with pytest.raises(DimensionTooLarge):
        simplex_min(np.eye(9))
    with pytest.raises(DimensionMismatch):
        simplex_min(np.ones((2, 3)))
    assert simplex_min(np.zeros((0, 0))) == 0.0


def test_multiplier_validity():
    assert CopositiveMultiplier(np.eye(2), np.ones((2, 2))).is_valid()
    assert not CopositiveMultiplier(-np.eye(2), np.zeros((2, 2))).is_valid()
    assert not CopositiveMultiplier(np.eye(2), -np.ones((2, 2))).is_valid()
    with pytest.raises(DimensionMismatch):
        CopositiveMultiplier(np.eye(2), np.eye(3))


def test_2x2_criterion_matches_dense_grid():
    rng = np.random.default_rng(7)
    for _ in range(300):
        Q = rng.uniform(-1, 1, (2, 2))
        Q = Q + Q.T
        # the grid is exact in 2x2 up to its resolution; avoid razor-thin cases
        grid = simplex_min(Q, resolution=4000)
        if abs(grid) < 1e-3:
            continue
        assert is_copositive_2x2(Q) == (grid >= 0)


def test_psd_plus_nn_agrees_with_copositivity_2x2():
    # PSD+NN equals the copositive cone for m <= 4
    rng = np.random.default_rng(11)
    agree = 0
    for _ in range(1000):
        Q = rng.uniform(-1, 1, (2, 2))
        Q = Q + Q.T
        margin, _ = psd_plus_nn_margin(Q)
        cop = is_copositive_2x2(Q)
        if abs(margin) < 1e-6:
            continue
        assert (margin > 0) == cop, Q
        agree += 1
    assert agree > 900


def test_decomposition_reconstructs():
    Q = np.array([[1.0, -0.5, 2.0], [-0.5, 1.0, 0.3], [2.0, 0.3, 0.5]])
    mult = psd_plus_nn_decompose(Q)
    assert mult is not None
    assert np.allclose(mult.Q, Q, atol=1e-7)
    assert mult.is_valid(tol=1e-7)
    assert psd_plus_nn_decompose(np.array([[1.0, -2.0], [-2.0, 1.0]])) is None


@settings(max_examples=60, deadline=None)
@given(arrays(float, (3, 3), elements=st.floats(-2, 2)), arrays(float, (3, 3), elements=st.floats(0, 2)))
def test_psd_plus_nn_is_grid_copositive(F, M):
    S = F @ F.T
    Q = S + 0.5 * (M + M.T)
    assert simplex_min(Q) >= -1e-10


def _random_metzler_hurwitz(rng, m):
    A = rng.uniform(0, 1, (m, m))
    np.fill_diagonal(A, 0)
    A -= np.diag(A.sum(axis=1) + rng.uniform(0.1, 1.0, m))  # strict diagonal dominance
    return A


def test_metzler_lyapunov_closed_form_scalar():
    assert metzler_lyapunov_solution([[-2.0]], [[4.0]])[0, 0] == pytest.approx(1.0)


def test_metzler_lyapunov_nonneg_and_copositive():
    rng = np.random.default_rng(3)
    for _ in range(30):
        m = int(rng.integers(1, 6))
        A = _random_metzler_hurwitz(rng, m)
        Q = rng.uniform(0, 1, (m, m))
        Q = Q + Q.T
        P = metzler_lyapunov_solution(A, Q)
        assert P.min() >= -1e-9
        assert simplex_min(P) >= -1e-8


def test_metzler_lyapunov_preconditions():
    with pytest.raises(NotMetzler):
        metzler_lyapunov_solution([[-1.0, -0.1], [0.0, -1.0]], np.eye(2))
    with pytest.raises(NotHurwitz):
        metzler_lyapunov_solution([[0.5, 0.0], [0.0, -1.0]], np.eye(2))
