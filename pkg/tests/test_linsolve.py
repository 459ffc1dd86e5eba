import numpy as np
import pytest
import scipy.linalg as dla
import scipy.sparse as sparse

from wavesplit.errors import DegenerateConstraintsError, SolverError
from wavesplit.linsolve import (EigenPairs, SPDSolver, SaddleSolver,
                                largest_eigenvalue, smallest_eigenpairs,
                                solve_saddle, solve_spd)

from conftest import random_spd


def test_spd_identity_and_diag():
    np.testing.assert_allclose(solve_spd(np.eye(3), [1.0, 2.0, 3.0]),
                               [1.0, 2.0, 3.0], rtol=1e-14)
    D = sparse.diags([2.0, 4.0, 8.0])
    np.testing.assert_allclose(solve_spd(D, [2.0, 2.0, 2.0]),
                               [1.0, 0.5, 0.25], rtol=1e-14)
    assert np.array_equal(solve_spd(D, np.zeros(3)), np.zeros(3))


def test_spd_against_cholesky_oracle():
    rng = np.random.default_rng(7)
    for trial in range(100):
        n = int(rng.integers(2, 25))
        A = random_spd(rng, n)
        b = rng.standard_normal(n)
        expect = dla.cho_solve(dla.cho_factor(A), b)
        got = solve_spd(sparse.csc_matrix(A), b)
        np.testing.assert_allclose(got, expect, rtol=1e-8, atol=1e-10)
        assert np.linalg.norm(A @ got - b) <= 1e-10 * np.linalg.norm(b)


def test_spd_reuse_factorization():
    rng = np.random.default_rng(3)
    A = random_spd(rng, 12)
    solver = SPDSolver(sparse.csc_matrix(A))
    for _ in range(5):
        b = rng.standard_normal(12)
        x = solver.solve(b)
        assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_saddle_hand_example():
    # minimize 1/2 x^T I x - e1^T x  s.t.  x1 = 2  ->  x = (2, 0), mu = -1
    A = np.eye(2)
    C = np.array([[1.0, 0.0]])
    x, mu = solve_saddle(A, C, np.array([1.0, 0.0]), np.array([2.0]))
    np.testing.assert_allclose(x, [2.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(mu, [-1.0], atol=1e-12)


def test_saddle_zero_rhs():
    A = np.diag([1.0, 2.0, 3.0])
    C = np.array([[1.0, 1.0, 1.0]])
    x, mu = solve_saddle(A, C, np.zeros(3), np.zeros(1))
    assert np.array_equal(x, np.zeros(3))
    assert np.array_equal(mu, np.zeros(1))


def test_saddle_against_dense_kkt_oracle():
    rng = np.random.default_rng(11)
    for trial in range(100):
        n = int(rng.integers(3, 20))
        m = int(rng.integers(1, n - 1))
        A = random_spd(rng, n)
        C = rng.standard_normal((m, n))
        b = rng.standard_normal(n)
        c = rng.standard_normal(m)
        K = np.block([[A, C.T], [C, np.zeros((m, m))]])
        expect = np.linalg.solve(K, np.concatenate([b, c]))
        x, mu = solve_saddle(sparse.csc_matrix(A), sparse.csc_matrix(C), b, c)
        np.testing.assert_allclose(x, expect[:n], rtol=1e-7, atol=1e-9)
        np.testing.assert_allclose(mu, expect[n:], rtol=1e-7, atol=1e-9)
        np.testing.assert_allclose(C @ x, c, atol=1e-8)


def test_saddle_badly_scaled_constraints():
    # constraint rows many orders below A's scale: equilibration keeps the
    # multipliers accurate
    rng = np.random.default_rng(5)
    A = random_spd(rng, 8) * 1e6
    C = rng.standard_normal((2, 8)) * 1e-5
    b = rng.standard_normal(8)
    c = rng.standard_normal(2) * 1e-5
    x, mu = solve_saddle(A, C, b, c)
    K = np.block([[A, C.T], [C, np.zeros((2, 2))]])
    expect = np.linalg.solve(K, np.concatenate([b, c]))
    np.testing.assert_allclose(x, expect[:8], rtol=1e-6)
    np.testing.assert_allclose(C @ x, c, rtol=1e-6)


def test_saddle_degenerate_rows():
    A = np.eye(3)
    dup = np.array([[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
    with pytest.raises(DegenerateConstraintsError) as info:
        solve_saddle(A, dup, np.ones(3), np.array([1.0, 1.0]))
    assert info.value.row in (0, 1)
    with pytest.raises(DegenerateConstraintsError) as info:
        SaddleSolver(A, np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]))
    assert info.value.row == 1
    assert "identically zero" in str(info.value)


def test_smallest_eigenpairs_diagonal():
    A = np.diag([3.0, 1.0, 2.0])
    pairs = smallest_eigenpairs(A, np.eye(3), 2)
    np.testing.assert_allclose(pairs.values, [1.0, 2.0], atol=1e-12)
    # eigenvectors are +-e2 and +-e3
    np.testing.assert_allclose(np.abs(pairs.vectors),
                               [[0, 0], [1, 0], [0, 1]], atol=1e-12)


def test_smallest_eigenpairs_equal_pencil():
    rng = np.random.default_rng(2)
    B = random_spd(rng, 6)
    pairs = smallest_eigenpairs(B, B, 3)
    np.testing.assert_allclose(pairs.values, np.ones(3), atol=1e-10)
    G = pairs.vectors.T @ B @ pairs.vectors
    np.testing.assert_allclose(G, np.eye(3), atol=1e-10)


def test_smallest_eigenpairs_dense_oracle():
    rng = np.random.default_rng(19)
    for trial in range(100):
        n = int(rng.integers(5, 30))
        k = int(rng.integers(1, n + 1))
        R = rng.standard_normal((n, n))
        A = R @ R.T                      # sym PSD
        B = random_spd(rng, n)
        expect = dla.eigh(A, B, eigvals_only=True)[:k]
        pairs = smallest_eigenpairs(A, B, k)
        np.testing.assert_allclose(pairs.values, expect, rtol=1e-8, atol=1e-8)
        G = pairs.vectors.T @ B @ pairs.vectors
        np.testing.assert_allclose(G, np.eye(k), atol=1e-8)


def test_smallest_eigenpairs_iterative_path():
    # n=600 > dense cutoff: 1D Laplacian pencil with known spectrum
    n = 600
    main = 2.0 * np.ones(n)
    off = -1.0 * np.ones(n - 1)
    A = sparse.diags([off, main, off], [-1, 0, 1], format="csc")
    B = sparse.identity(n, format="csc") * 0.5
    pairs = smallest_eigenpairs(A, B, 4)
    j = np.arange(1, 5)
    expect = 2.0 * 4.0 * np.sin(j * np.pi / (2 * (n + 1))) ** 2
    np.testing.assert_allclose(pairs.values, expect, rtol=1e-8)
    G = pairs.vectors.T @ (B @ pairs.vectors)
    np.testing.assert_allclose(G, np.eye(4), atol=1e-8)


def test_smallest_eigenpairs_k_validation():
    A = np.eye(4)
    with pytest.raises(ValueError, match="k="):
        smallest_eigenpairs(A, A, 0)
    with pytest.raises(ValueError, match="k="):
        smallest_eigenpairs(A, A, 5)


def test_largest_eigenvalue():
    A = np.diag([1.0, 5.0, 3.0])
    assert np.isclose(largest_eigenvalue(A, np.eye(3)), 5.0, rtol=1e-12)
    B = np.diag([1.0, 2.0, 1.0])
    assert np.isclose(largest_eigenvalue(A, B), 3.0, rtol=1e-12)
    # iterative branch against the known 1D Laplacian extreme
    n = 600
    off = -np.ones(n - 1)
    L = sparse.diags([off, 2 * np.ones(n), off], [-1, 0, 1], format="csc")
    lam = largest_eigenvalue(L, sparse.identity(n, format="csc"))
    expect = 4.0 * np.sin(n * np.pi / (2 * (n + 1))) ** 2
    assert np.isclose(lam, expect, rtol=1e-8)


def test_eigen_determinism():
    rng = np.random.default_rng(23)
    R = rng.standard_normal((30, 30))
    A = R @ R.T
    B = random_spd(rng, 30)
    first = smallest_eigenpairs(A, B, 5)
    second = smallest_eigenpairs(A, B, 5)
    assert np.array_equal(first.values, second.values)
    assert np.array_equal(first.vectors, second.vectors)
