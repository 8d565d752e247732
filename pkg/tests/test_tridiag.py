import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fastdiva.tridiag import (TridiagCov, TridiagGaussModel, banded_inverse, clip_offdiag, continuants,
                              eig_constant_c, inverse_entry, solve, tridiag_solve)
from conftest import cn


def random_tc(rng, K, scale=1.0):
    return TridiagCov(clip_offdiag(scale * cn(rng, K - 1)))


def full_inverse(tc):
    K = tc.K
    return np.array([[inverse_entry(tc, i, j) for j in range(K)] for i in range(K)])


def test_clip_offdiag():
    np.testing.assert_allclose(clip_offdiag([0.3, 0.8j, 0]), [0.3, 0.4j, 0])
    c = clip_offdiag([3 - 4j])
    assert abs(c[0]) == pytest.approx(0.4) and np.angle(c[0]) == pytest.approx(np.angle(3 - 4j))


def test_inverse_identity_and_2x2():
    tc = TridiagCov(np.zeros(4))
    np.testing.assert_allclose(full_inverse(tc), np.eye(5))
    tc = TridiagCov([0.4])
    np.testing.assert_allclose(full_inverse(tc), np.array([[1, -0.4], [-0.4, 1]]) / 0.84)
    with pytest.raises(IndexError):
        inverse_entry(tc, 0, 2)


@pytest.mark.parametrize("K", [4, 16, 32, 64])
def test_inverse_matches_dense(K):
    rng = np.random.default_rng(K)
    for _ in range(5):
        tc = random_tc(rng, K)
        inv = full_inverse(tc)
        assert np.max(np.abs(inv - np.linalg.inv(tc.dense()))) < 1e-8
        np.testing.assert_allclose(inv, inv.conj().T, atol=1e-14)


def test_continuants_are_minors():
    rng = np.random.default_rng(1)
    for K in (2, 5, 16, 32):
        tc = random_tc(rng, K)
        D = tc.dense()
        theta, xi = continuants(tc.c)
        assert theta[0] == theta[1] == 1 and xi[K] == xi[K + 1] == 1
        for i in range(1, K + 1):
            lead = np.linalg.det(D[:i, :i]).real
            trail = np.linalg.det(D[i - 1:, i - 1:]).real
            assert abs(theta[i] - lead) <= 1e-8 * abs(lead)
            assert abs(xi[i] - trail) <= 1e-8 * abs(trail)


def test_large_k_does_not_underflow():
    tc = TridiagCov(np.full(4095, 0.4))
    d = tc.inverse_diagonal()
    assert np.all(np.isfinite(d)) and np.all(d > 1) and np.all(d < 5)


def test_banded_inverse():
    rng = np.random.default_rng(2)
    tc = random_tc(rng, 12)
    np.testing.assert_allclose(banded_inverse(tc, 11), np.linalg.inv(tc.dense()), atol=1e-12)
    np.testing.assert_array_equal(banded_inverse(TridiagCov(np.zeros(5)), 0), np.eye(6))
    b = banded_inverse(tc, 2)
    assert np.all(np.triu(b, 3) == 0) and np.all(np.tril(b, -3) == 0)
    with pytest.raises(ValueError):
        banded_inverse(tc, 12)


def test_banded_truncation_error_constant_c():
    """Entries decay geometrically with ratio |c| / q, q = (1 + sqrt(1 - 4|c|^2)) / 2.

    For c = 0.4 the ratio is 0.5, so the largest entry dropped by k_max = 10
    is 0.5**11 / sqrt(1 - 4c^2), about 4.9e-4 of the diagonal.
    """
    c = 0.4
    tc = TridiagCov(np.full(63, c))
    full = banded_inverse(tc, 63)
    np.testing.assert_allclose(full, np.linalg.inv(tc.dense()), atol=1e-12)
    dropped = full - banded_inverse(tc, 10)
    ratio = c / ((1 + np.sqrt(1 - 4 * c**2)) / 2)
    expected = ratio**11 / np.sqrt(1 - 4 * c**2)
    assert np.max(np.abs(dropped)) == pytest.approx(expected, rel=1e-6)
    assert np.max(np.abs(dropped)) < 1e-3 * np.max(np.abs(full))


def test_solve_small_cases():
    b = cn(np.random.default_rng(3), 4)
    np.testing.assert_allclose(solve(TridiagCov(np.zeros(3)), b), b)
    x = solve(TridiagCov([0.4]), np.array([1.0, 0.0]))
    np.testing.assert_allclose(x, np.array([1, -0.4]) / 0.84)


@settings(max_examples=40, deadline=None)
@given(K=st.integers(2, 64), seed=st.integers(0, 2**32 - 1))
def test_solve_matches_dense(K, seed):
    rng = np.random.default_rng(seed)
    tc = random_tc(rng, K, scale=2.0)
    b = cn(rng, K, 3)
    x = solve(tc, b)
    D = tc.dense()
    assert np.max(np.abs(D @ x - b)) < 1e-10 * np.max(np.abs(b))
    np.testing.assert_allclose(x, banded_inverse(tc, K - 1) @ b, atol=1e-9)


def test_tridiag_solve_batched():
    rng = np.random.default_rng(4)
    c = clip_offdiag(cn(rng, 3, 2, 6))
    b = cn(rng, 3, 2, 7, 5)
    x = tridiag_solve(c, b)
    for i in range(3):
        for j in range(2):
            np.testing.assert_allclose(TridiagCov(c[i, j]).dense() @ x[i, j], b[i, j], atol=1e-12)


def test_eig_constant_c():
    np.testing.assert_allclose(eig_constant_c(5, 0.0), np.ones(5))
    np.testing.assert_allclose(eig_constant_c(3, 0.4), [1.5656854249, 1.0, 0.4343145751], atol=1e-9)
    for c in (0.4, 0.25j, -0.3):
        ref = np.linalg.eigvalsh(TridiagCov(np.full(31, c)).dense())
        np.testing.assert_allclose(np.sort(eig_constant_c(32, c)), ref, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(K=st.integers(2, 256), seed=st.integers(0, 2**32 - 1))
def test_clipped_spectrum_bounded(K, seed):
    tc = random_tc(np.random.default_rng(seed), K, scale=5.0)
    assert np.all(np.abs(tc.c) <= 0.4 + 1e-15)
    assert np.linalg.eigvalsh(tc.dense())[0] >= 0.2


def test_model_uncorrelated_reduces_to_circular():
    rng = np.random.default_rng(5)
    u = np.zeros((4, 1, 1, 8), dtype=complex)
    u[:, 0, 0, :4] = 2 * np.eye(4)  # orthogonal components: c_hat = 0
    u[:, 0, 0, 4:] = 2 * np.eye(4)
    sigma2 = np.mean(np.abs(u) ** 2, axis=-1)
    phi, nu, rho = TridiagGaussModel().evaluate(u, sigma2)
    np.testing.assert_allclose(phi, (u / np.sqrt(sigma2)[..., None]).conj())
    np.testing.assert_allclose(rho, 1)
    np.testing.assert_array_equal(nu, 1)


def test_model_score_2x2():
    tc = TridiagCov([0.4])
    np.testing.assert_allclose(tc.score(np.array([1.0, 0.0])), np.array([1, -0.4]) / 0.84)


def test_model_truncated_path_agrees():
    rng = np.random.default_rng(6)
    s = cn(rng, 6, 1, 2, 40)
    s[1:] += 0.5 * s[:-1]
    sigma2 = np.mean(np.abs(s) ** 2, axis=-1)
    exact = TridiagGaussModel().evaluate(s, sigma2)
    trunc = TridiagGaussModel(k_max=5).evaluate(s, sigma2)
    np.testing.assert_allclose(trunc.phi, exact.phi, atol=1e-10)
    np.testing.assert_allclose(trunc.rho, exact.rho)


def test_empirical_nu_on_tridiagonal_data():
    from fastdiva.acceptance import tridiag_samples
    rng = np.random.default_rng(7)
    c = clip_offdiag(0.35 * cn(rng, 9))
    s = tridiag_samples(c, 200, rng)[:, None, None, :]
    sigma2 = np.mean(np.abs(s) ** 2, axis=-1)
    phi, _, _ = TridiagGaussModel().evaluate(s, sigma2)
    nu = np.mean(phi * s / np.sqrt(sigma2)[..., None], axis=-1)
    np.testing.assert_allclose(nu, 1, atol=1e-10)


def test_empirical_nu_generic_data_deviation():
    """On generic data nu_k = conj((Sigma^{-1} Sigma_hat)_kk), which differs from one."""
    rng = np.random.default_rng(8)
    s = cn(rng, 5, 60)
    s[1:] += 0.3 * s[:-1]
    cell = s[:, None, None, :]
    sigma2 = np.mean(np.abs(cell) ** 2, axis=-1)
    model = TridiagGaussModel()
    phi, _, _ = model.evaluate(cell, sigma2)
    u = s / np.sqrt(sigma2[:, 0, 0])[:, None]
    nu = np.mean(phi[:, 0, 0] * u, axis=-1)
    tc = TridiagCov(model.fit(u))
    expected = np.diag(np.linalg.solve(tc.dense(), u @ u.conj().T / u.shape[1])).conj()
    np.testing.assert_allclose(nu, expected, atol=1e-12)
    assert np.max(np.abs(nu - 1)) > 1e-3
