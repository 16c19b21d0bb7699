import math

import numpy as np
import pytest
import scipy.linalg as sl
from hypothesis import given, settings
from hypothesis import strategies as st

from dobotc.errors import DimensionError, SingularEquationError, StabilizabilityError
from dobotc.matrixlab import (
    care_residual,
    eigenvalues,
    pinv,
    solve_care,
    solve_lyapunov,
    solve_sylvester,
    stabilizing_gain_init,
)
from dobotc.plantmodel import WAFER_A, WAFER_B_U, WAFER_C_O

A_P = np.array(WAFER_A)
B_P = np.array(WAFER_B_U)
C_P = np.array(WAFER_C_O)


def kron_lyapunov(A, W):
    """Oracle: (I (x) A^T + A^T (x) I) vec(P) = -vec(W), column-major vec."""
    n = A.shape[0]
    K = np.kron(np.eye(n), A.T) + np.kron(A.T, np.eye(n))
    return np.linalg.solve(K, -W.flatten("F")).reshape((n, n), order="F")


def kron_sylvester(A1, A2, C):
    n, m = A1.shape[0], A2.shape[0]
    K = np.kron(np.eye(m), A1) + np.kron(A2.T, np.eye(n))
    return np.linalg.solve(K, C.flatten("F")).reshape((n, m), order="F")


def random_hurwitz(rng, n):
    M = rng.standard_normal((n, n))
    shift = max(0.0, np.linalg.eigvals(M).real.max()) + rng.uniform(0.5, 2.0)
    return M - shift * np.eye(n)


# -- eigenvalues

def test_eigenvalues_identity():
    assert eigenvalues(np.eye(2)).eigenvalues == ((1.0, 0.0), (1.0, 0.0))


def test_eigenvalues_rotation_generator():
    spec = eigenvalues([[0.0, 1.0], [-1.0, 0.0]])
    assert spec.eigenvalues[0][0] == pytest.approx(0.0, abs=1e-15)
    assert [im for _, im in spec] == pytest.approx([-1.0, 1.0])


def test_eigenvalues_wafer_A_quadratic_oracle():
    tr, det = 3.127 + 0.258, 3.127 * 0.258 - 1.567 * 0.2803
    assert tr == pytest.approx(3.385)
    assert det == pytest.approx(0.3675, abs=1e-4)
    disc = math.sqrt(tr * tr - 4 * det)
    expected = [(tr + disc) / 2, (tr - disc) / 2]
    spec = eigenvalues(A_P)
    assert [re for re, _ in spec] == pytest.approx(expected, rel=1e-12)
    assert all(re > 0 for re, _ in spec)


def test_eigenvalues_ordering_and_conjugates():
    M = np.diag([-1.0, 2.0, 0.5]) + 0.0
    assert [re for re, _ in eigenvalues(M)] == [2.0, 0.5, -1.0]
    rot = np.array([[1.0, -3.0], [3.0, 1.0]])
    spec = eigenvalues(rot).eigenvalues
    assert spec[0][1] < spec[1][1]
    assert spec[0][1] == pytest.approx(-spec[1][1], abs=1e-9)


def test_eigenvalues_non_square():
    with pytest.raises(DimensionError):
        eigenvalues(np.ones((2, 3)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5))
def test_eigenvalues_similarity_invariance(seed, n):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n))
    S = rng.standard_normal((n, n)) + 3.0 * np.eye(n)
    if np.linalg.cond(S) > 50:
        return
    a = eigenvalues(M).as_complex()
    b = eigenvalues(S @ M @ np.linalg.inv(S)).as_complex()
    # match as multisets
    for z in a:
        assert np.min(np.abs(b - z)) <= 1e-8 * (1 + abs(z))


# -- Lyapunov / Sylvester

def test_lyapunov_minus_identity():
    P = solve_lyapunov(-np.eye(2), np.eye(2))
    np.testing.assert_allclose(P, 0.5 * np.eye(2), atol=1e-15)


def test_lyapunov_diagonal():
    P = solve_lyapunov(np.diag([-1.0, -2.0]), np.diag([2.0, 4.0]))
    np.testing.assert_allclose(P, np.eye(2), atol=1e-15)


def test_lyapunov_random_matches_kronecker_and_scipy(rng):
    for n in range(1, 5):
        for _ in range(5):
            A = random_hurwitz(rng, n)
            W = rng.standard_normal((n, n))
            W = W + W.T
            P = solve_lyapunov(A, W)
            np.testing.assert_allclose(P, kron_lyapunov(A, W), atol=1e-10)
            np.testing.assert_allclose(P, sl.solve_continuous_lyapunov(A.T, -W), atol=1e-10)
            assert np.linalg.norm(A.T @ P + P @ A + W) <= 1e-10 * (1 + np.linalg.norm(W))


def test_lyapunov_singular():
    with pytest.raises(SingularEquationError):
        solve_lyapunov(np.diag([1.0, -1.0]), np.eye(2))


def test_sylvester_scalar_cases():
    c = np.array([[1.0], [2.0]])
    np.testing.assert_allclose(solve_sylvester(-np.eye(2), [[0.0]], c), -c)
    np.testing.assert_allclose(solve_sylvester([[-2.0]], [[-1.0]], [[6.0]]), [[-2.0]])


def test_sylvester_random_matches_oracle(rng):
    for n, m in [(3, 2), (2, 3), (4, 1), (1, 4), (4, 4)]:
        A1 = random_hurwitz(rng, n)
        A2 = random_hurwitz(rng, m)
        C = rng.standard_normal((n, m))
        X = solve_sylvester(A1, A2, C)
        np.testing.assert_allclose(X, kron_sylvester(A1, A2, C), atol=1e-10)
        np.testing.assert_allclose(X, sl.solve_sylvester(A1, A2, C), atol=1e-10)
        assert np.linalg.norm(A1 @ X + X @ A2 - C) <= 1e-10 * (1 + np.linalg.norm(C))


def test_sylvester_singular():
    with pytest.raises(SingularEquationError):
        solve_sylvester([[1.0]], [[-1.0]], [[1.0]])
    with pytest.raises(DimensionError):
        solve_sylvester(np.eye(2), np.eye(3), np.ones((3, 2)))


# -- CARE

def test_care_scalar_positive_root():
    # -2P - P^2 + 1 = 0  ->  P = -1 + sqrt(2)
    oracle = (-2.0 + math.sqrt(4.0 + 4.0)) / 2.0
    P = solve_care([[-1.0]], [[1.0]], [[1.0]], [[1.0]])
    assert P[0, 0] == pytest.approx(oracle, abs=1e-10)
    assert P[0, 0] == pytest.approx(math.sqrt(2) - 1, abs=1e-10)


def test_care_zero_state_cost():
    A = np.array([[-1.0, 2.0], [0.0, -3.0]])
    P = solve_care(A, np.eye(2), np.zeros((2, 2)), np.eye(2))
    np.testing.assert_allclose(P, 0.0, atol=1e-14)


@pytest.mark.parametrize("Q_e,r", [(5, 5), (10, 2.5), (10, 5), (2, 1)])
def test_care_wafer_plant(Q_e, r):
    Q = Q_e * C_P.T @ C_P
    R = r * np.eye(2)
    P = solve_care(A_P, B_P, Q, R)
    assert care_residual(A_P, B_P, Q, R, P) <= 1e-8 * (1 + np.linalg.norm(Q))
    assert np.linalg.norm(P - P.T) <= 1e-10
    assert np.linalg.eigvalsh(P).min() >= -1e-9
    K = np.linalg.solve(R, B_P.T @ P)
    assert eigenvalues(A_P - B_P @ K).is_hurwitz()
    np.testing.assert_allclose(P, sl.solve_continuous_are(A_P, B_P, Q, R), rtol=1e-9, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 3))
def test_care_random_properties(seed, n, m):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    B = rng.standard_normal((n, m))
    if np.linalg.matrix_rank(np.hstack([np.linalg.matrix_power(A, k) @ B for k in range(n)])) < n:
        return
    if np.linalg.cond(np.hstack([np.linalg.matrix_power(A, k) @ B for k in range(n)])) > 1e6:
        return
    G = rng.standard_normal((n, n))
    Q = G @ G.T
    R = np.eye(m) * rng.uniform(0.5, 2.0)
    P = solve_care(A, B, Q, R)
    assert care_residual(A, B, Q, R, P) <= 1e-8 * (1 + np.linalg.norm(Q))
    assert np.linalg.norm(P - P.T) <= 1e-10
    assert np.linalg.eigvalsh(P).min() >= -1e-9
    assert eigenvalues(A - B @ np.linalg.solve(R, B.T @ P)).is_hurwitz()


# -- stabilizing gain

def test_stabilizing_gain_hurwitz_a():
    K0 = stabilizing_gain_init(-np.eye(2), np.ones((2, 1)))
    np.testing.assert_array_equal(K0, np.zeros((1, 2)))


def test_stabilizing_gain_wafer_plant():
    K0 = stabilizing_gain_init(A_P, B_P)
    assert eigenvalues(A_P - B_P @ K0).max_real < 0


def test_stabilizing_gain_scalar():
    K0 = stabilizing_gain_init([[1.0]], [[1.0]])
    assert K0[0, 0] > 1.0


def test_stabilizing_gain_uncontrollable():
    with pytest.raises(StabilizabilityError):
        stabilizing_gain_init(np.eye(2), np.array([[1.0], [0.0]]))


# -- pseudoinverse

def test_pinv_examples():
    M = np.array([[2.0, 1.0], [1.0, 3.0]])
    np.testing.assert_allclose(pinv(M), np.linalg.inv(M), atol=1e-14)
    np.testing.assert_allclose(pinv([[3.0, 4.0]]), [[3 / 25], [4 / 25]], atol=1e-15)
    np.testing.assert_array_equal(pinv(np.zeros((1, 2))), np.zeros((2, 1)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 4))
def test_pinv_penrose_identities(seed, r, c):
    M = np.random.default_rng(seed).standard_normal((r, c))
    Mp = pinv(M)
    np.testing.assert_allclose(M @ Mp @ M, M, atol=1e-9)
    np.testing.assert_allclose(Mp @ M @ Mp, Mp, atol=1e-9)
    np.testing.assert_allclose((M @ Mp).T, M @ Mp, atol=1e-9)
    np.testing.assert_allclose((Mp @ M).T, Mp @ M, atol=1e-9)
