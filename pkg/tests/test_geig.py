import numpy as np
import pytest
from hypothesis import given, strategies as st

from tnnmaxwell.geig import (ClusteredEigenvalueError, SingularMassError,
                             checked_sensitivity, clusters, eigenvalue_sensitivity,
                             fix_signs, jacobi_eigh, solve_generalized,
                             subspace_trace_sensitivity)


def _spd(rng, p, shift=0.1):
    A = rng.standard_normal((p, p))
    return A @ A.T + shift * np.eye(p)


def test_trivial_examples():
    r = solve_generalized(np.diag([2.0, 8.0]), np.eye(2))
    np.testing.assert_allclose(r.values, [2, 8])
    np.testing.assert_allclose(np.abs(r.vectors), np.eye(2), atol=1e-15)
    r = solve_generalized(np.diag([2.0, 3.0]), np.diag([1.0, 3.0]))
    np.testing.assert_allclose(r.values, [1, 2])
    r = solve_generalized(np.array([[2.0, 1.0], [1.0, 2.0]]), np.eye(2))
    np.testing.assert_allclose(r.values, [1, 3], atol=1e-15)


def test_zero_mass_rejected():
    with pytest.raises(SingularMassError):
        solve_generalized(np.eye(2), np.zeros((2, 2)))


def test_truncation_drops_null_directions():
    M = np.diag([1.0, 1.0, 0.0])
    S = np.diag([3.0, 1.0, 5.0])
    r = solve_generalized(S, M)
    assert r.discarded == 1 and len(r) == 2
    np.testing.assert_allclose(r.values, [1, 3])


def test_excessive_discards_warn():
    M = np.diag([1.0, 0.0, 0.0])
    r = solve_generalized(np.eye(3), M)
    assert r.discarded == 2 and r.warnings


def _check_pair(S, M, r):
    U = r.vectors
    np.testing.assert_allclose(U.T @ M @ U, np.eye(U.shape[1]), atol=1e-8)
    nS, nM = np.linalg.norm(S, 2), np.linalg.norm(M, 2)
    for k, lam in enumerate(r.values):
        res = np.linalg.norm(S @ U[:, k] - lam * M @ U[:, k])
        assert res <= 1e-8 * (nS + abs(lam) * nM)
    assert np.all(np.diff(r.values) >= 0)


@pytest.mark.parametrize("method", ["lapack", "jacobi"])
@given(st.integers(1, 10), st.integers(0, 2 ** 31 - 1))
def test_residual_and_orthogonality(method, p, seed):
    rng = np.random.default_rng(seed)
    S, M = _spd(rng, p), _spd(rng, p, 0.5)
    _check_pair(S, M, solve_generalized(S, M, method=method))


@given(st.integers(1, 3), st.integers(0, 2 ** 31 - 1))
def test_characteristic_polynomial_agreement(p, seed):
    rng = np.random.default_rng(seed)
    S, M = _spd(rng, p), _spd(rng, p, 0.5)
    r = solve_generalized(S, M)
    # det(S - lam M) as a polynomial in lam, sampled and interpolated exactly
    xs = np.arange(p + 1, dtype=float)
    ys = [np.linalg.det(S - x * M) for x in xs]
    coeffs = np.polynomial.polynomial.polyfit(xs, ys, p)
    roots = np.sort(np.polynomial.polynomial.polyroots(coeffs).real)
    # polish roots by Newton on det
    for _ in range(5):
        for i, lam in enumerate(roots):
            h = 1e-7 * max(1.0, abs(lam))
            f = np.linalg.det(S - lam * M)
            df = (np.linalg.det(S - (lam + h) * M) - np.linalg.det(S - (lam - h) * M)) / (2 * h)
            if df != 0:
                roots[i] = lam - f / df
    np.testing.assert_allclose(r.values, np.sort(roots), rtol=1e-10)


@given(st.integers(1, 8), st.floats(-5, 5), st.integers(0, 2 ** 31 - 1))
def test_shift_covariance(p, c, seed):
    rng = np.random.default_rng(seed)
    S, M = _spd(rng, p), _spd(rng, p, 0.5)
    r0 = solve_generalized(S, M)
    r1 = solve_generalized(S + c * M, M)
    np.testing.assert_allclose(r1.values, r0.values + c, atol=1e-10 * max(1, np.abs(r0.values).max()))
    if np.all(np.diff(r0.values) > 1e-6 * np.abs(r0.values).max()):
        np.testing.assert_allclose(np.abs(r1.vectors), np.abs(r0.vectors), atol=1e-7)


def test_jacobi_matches_lapack(rng):
    for p in (1, 2, 5, 17):
        A = rng.standard_normal((p, p))
        A = A + A.T
        w, V = jacobi_eigh(A)
        np.testing.assert_allclose(w, np.linalg.eigvalsh(A), atol=1e-12)
        np.testing.assert_allclose(V.T @ V, np.eye(p), atol=1e-12)
        np.testing.assert_allclose(A @ V, V * w, atol=1e-11)


def test_fix_signs():
    U = np.array([[0.1, -0.2], [-0.9, 0.8]])
    F = fix_signs(U)
    assert F[1, 0] > 0 and F[1, 1] > 0


def test_sensitivity_examples():
    S, M = np.diag([1.0, 2.0]), np.eye(2)
    r = solve_generalized(S, M)
    E = np.diag([1.0, 0.0])
    assert eigenvalue_sensitivity(r.values[0], r.vectors[:, 0], E, np.zeros((2, 2))) == 1.0
    assert eigenvalue_sensitivity(1.0, r.vectors[:, 0], np.zeros((2, 2)), E) == -1.0


def _fd_eigs(S, M, dS, dM, h=1e-6):
    a = solve_generalized(S + h * dS, M + h * dM).values
    b = solve_generalized(S - h * dS, M - h * dM).values
    return (a - b) / (2 * h)


def test_sensitivity_matches_fd(rng):
    for _ in range(10):
        S, M = _spd(rng, 4), _spd(rng, 4, 0.5)
        dS, dM = rng.standard_normal((4, 4)), rng.standard_normal((4, 4))
        dS, dM = dS + dS.T, dM + dM.T
        r = solve_generalized(S, M)
        fd = _fd_eigs(S, M, dS, dM)
        for k in range(4):
            an = eigenvalue_sensitivity(r.values[k], r.vectors[:, k], dS, dM)
            assert an == pytest.approx(fd[k], rel=1e-6, abs=1e-9)


def test_trace_sensitivity():
    r = solve_generalized(np.eye(2), np.eye(2))
    assert subspace_trace_sensitivity([0, 1], r, np.diag([1.0, -1.0]), np.zeros((2, 2))) == 0.0
    S = np.diag([1.0, 3.0])
    r = solve_generalized(S, np.eye(2))
    dS = np.array([[0.3, 0.1], [0.1, -0.2]])
    assert subspace_trace_sensitivity([0], r, dS, np.zeros((2, 2))) == pytest.approx(
        eigenvalue_sensitivity(r.values[0], r.vectors[:, 0], dS, np.zeros((2, 2))))
    with pytest.raises(ValueError):
        subspace_trace_sensitivity([0, 2], solve_generalized(np.eye(3), np.eye(3)), dS, dS)


def test_trace_sensitivity_degenerate_fd(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    M = _spd(rng, 4, 1.0)
    L = np.linalg.cholesky(M)
    # S with a double eigenvalue 2 for the pencil (S, M)
    S = L @ Q @ np.diag([2.0, 2.0, 5.0, 7.0]) @ Q.T @ L.T
    r = solve_generalized(S, M)
    assert clusters(r.values) [0] == [0, 1]
    dS, dM = rng.standard_normal((4, 4)), rng.standard_normal((4, 4))
    dS, dM = dS + dS.T, dM + dM.T
    fd = _fd_eigs(S, M, dS, dM)
    an = subspace_trace_sensitivity([0, 1], r, dS, dM)
    assert an == pytest.approx(fd[0] + fd[1], rel=1e-6)
    with pytest.raises(ClusteredEigenvalueError):
        checked_sensitivity(0, r, dS, dM)


def test_clusters():
    assert clusters([1.0, 1.0 + 1e-9, 2.0, 3.0, 3.0]) == [[0, 1], [2], [3, 4]]
    assert clusters([]) == []
