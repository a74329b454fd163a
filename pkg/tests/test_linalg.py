import numpy as np
import pytest
import scipy.linalg
from hypothesis import assume, given, strategies as st
from hypothesis.extra.numpy import arrays

from otfilter.exceptions import InvalidMatrix, NonStationary, NotPSD
from otfilter.linalg import (
    as_sym,
    eig_sym,
    inv_sqrt_pd,
    pinv_psd,
    psd_rank,
    solve_lyapunov,
    spectral_radius,
    sqrt_psd,
)

from .conftest import random_psd


def test_eig_identity():
    w, Q = eig_sym(np.eye(2))
    np.testing.assert_allclose(w, [1, 1])
    np.testing.assert_allclose(Q @ Q.T, np.eye(2), atol=1e-14)


def test_eig_diagonal_and_reconstruction():
    w, _ = eig_sym(np.diag([4.0, 9.0]))
    np.testing.assert_allclose(w, [4, 9])
    m = np.array([[2.0, 1.0], [1.0, 2.0]])
    w, Q = eig_sym(m)
    np.testing.assert_allclose(w, [1, 3], atol=1e-14)
    np.testing.assert_allclose(Q @ np.diag(w) @ Q.T, m, atol=1e-14)


def test_sqrt_examples():
    np.testing.assert_allclose(sqrt_psd(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(sqrt_psd(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-14)
    m = np.array([[2.0, 1.0], [1.0, 2.0]])
    s = sqrt_psd(m)
    np.testing.assert_allclose(s @ s, m, atol=1e-12)
    v = np.array([[1.0], [2.0]])
    np.testing.assert_allclose(sqrt_psd(v @ v.T), v @ v.T / np.sqrt(5), atol=1e-12)


def test_pinv_examples():
    np.testing.assert_allclose(pinv_psd(np.eye(2)), np.eye(2))
    np.testing.assert_allclose(pinv_psd(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]))
    v = np.array([[1.0], [2.0]])
    A = v @ v.T
    X = pinv_psd(A)
    np.testing.assert_allclose(X, A / 25, atol=1e-14)
    for lhs, rhs in ((A @ X @ A, A), (X @ A @ X, X), ((A @ X).T, A @ X), ((X @ A).T, X @ A)):
        np.testing.assert_allclose(lhs, rhs, atol=1e-14)


def test_errors():
    with pytest.raises(NotPSD):
        sqrt_psd(np.diag([1.0, -1.0]))
    with pytest.raises(InvalidMatrix):
        as_sym(np.ones((2, 3)))
    with pytest.raises(InvalidMatrix):
        as_sym(np.array([[np.nan]]))
    with pytest.raises(NotPSD):
        inv_sqrt_pd(np.diag([1.0, 0.0]))


def test_lyapunov_examples():
    np.testing.assert_allclose(solve_lyapunov(np.zeros((2, 2)), np.eye(2)), np.eye(2))
    np.testing.assert_allclose(solve_lyapunov([[0.5]], [[3.0]]), [[4.0]])
    np.testing.assert_allclose(solve_lyapunov(np.diag([0.9, 0.5]), np.eye(2)), np.diag([1 / 0.19, 1 / 0.75]),
                               rtol=1e-10)
    with pytest.raises(NonStationary):
        solve_lyapunov([[1.0]], [[1.0]])


def test_lyapunov_matches_scipy(rng):
    for _ in range(20):
        C = rng.standard_normal((4, 4))
        C *= 0.95 / spectral_radius(C)
        Q = random_psd(rng, 4)
        np.testing.assert_allclose(solve_lyapunov(C, Q), scipy.linalg.solve_discrete_lyapunov(C, Q),
                                   rtol=1e-8, atol=1e-10)


def test_rank():
    v = np.array([[1.0], [2.0], [3.0]])
    assert psd_rank(v @ v.T) == 1
    assert psd_rank(np.eye(3)) == 3


@given(arrays(np.float64, (3, 3), elements=st.floats(-3, 3)))
def test_sqrt_squares_back(G):
    M = G @ G.T
    S = sqrt_psd(M)
    assert np.allclose(S, S.T)
    assert np.allclose(S @ S, M, atol=1e-8 * (1 + np.abs(M).max()))


@given(arrays(np.float64, (3, 2), elements=st.floats(-3, 3)))
def test_pinv_penrose_rank_deficient(G):
    A = G @ G.T
    w = np.linalg.eigvalsh(A)
    assume(w[-1] > 1e-3 and np.all((w < 1e-10 * w[-1]) | (w > 1e-4 * w[-1])))
    X = pinv_psd(A)
    tol = 1e-8 * (1 + np.abs(A).max()) * (1 + np.abs(X).max()) ** 2
    assert np.allclose(A @ X @ A, A, atol=tol)
    assert np.allclose(X @ A @ X, X, atol=tol)
