import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fastdiva.models import (DegenerateNormalizationError, GaussModel, GaussianModelState, RatiModel,
                             SingularModelError, build_gaussian_state, clip_circularity,
                             gauss_score_scalar_noncirc, gauss_score_vector, gauss_stats, get_model,
                             rati_score, rati_stats)
from conftest import cn


def wirtinger(f, s, k, h=1e-6):
    """(d f / d s_k, d f / d conj(s_k)) by central differences; ``f`` maps a K-vector to a K-vector."""
    e = np.zeros_like(s)
    e[k] = h
    dre = (f(s + e) - f(s - e)) / (2 * h)
    dim = (f(s + 1j * e) - f(s - 1j * e)) / (2 * h)
    return 0.5 * (dre - 1j * dim), 0.5 * (dre + 1j * dim)


def nu_hat(model, s):
    """Empirical nu of ``model`` on samples ``s`` (K, Ns) forming one cell."""
    cell = s[:, None, None, :]
    sigma2 = np.mean(np.abs(cell) ** 2, axis=-1)
    phi, _, _ = model.evaluate(cell, sigma2)
    return np.mean(phi * cell / np.sqrt(sigma2)[..., None], axis=-1).ravel()


# rati ---------------------------------------------------------------------

def test_rati_score_values():
    assert rati_score(np.zeros((1, 1)))[0, 0] == 0
    assert rati_score(np.array([1 + 1j]))[0] == pytest.approx((1 - 1j) / 3)
    np.testing.assert_allclose(rati_score(np.array([1, 1j])), [1 / 3, -1j / 3])


def test_rati_stats_single_sample():
    nu, rho = rati_stats(np.ones((1, 1), dtype=complex))
    assert nu[0] == pytest.approx(0.5)
    assert rho[0] == pytest.approx(0.25)


def test_rati_zero_samples_rejected():
    with pytest.raises(DegenerateNormalizationError):
        rati_stats(np.zeros((1, 5), dtype=complex))


def test_rati_nu_monte_carlo():
    rng = np.random.default_rng(0)
    s = cn(rng, 1, 100_000)
    nu, _ = rati_stats(s)
    # E[|s|^2 / (1 + |s|^2)] for |s|^2 ~ Exp(1) equals 1 - e E1(1)
    expected = 1 - np.e * 0.21938393439552029
    assert abs(nu[0] - expected) / expected < 0.01


@pytest.mark.parametrize("K", [1, 3])
def test_rati_rho_matches_derivative(K):
    rng = np.random.default_rng(K)
    for _ in range(10):
        s = cn(rng, K)
        for k in range(K):
            _, d_conj = wirtinger(lambda v: rati_score(v), s, k)
            _, rho = rati_stats(s[:, None])
            assert abs(d_conj[k] - rho[k]) < 1e-6 * abs(rho[k])


# Gaussian ------------------------------------------------------------------

def test_gauss_circular_identity_covariance():
    st_ = GaussianModelState(sigma=np.eye(3), gamma=np.zeros((3, 3)), sigma_hat=np.ones(3))
    s = cn(np.random.default_rng(1), 3, 4)
    np.testing.assert_allclose(gauss_score_vector(s, st_), s.conj())
    nu, rho = gauss_stats(st_)
    np.testing.assert_allclose(nu, 1)
    np.testing.assert_allclose(rho, 1)


def test_gauss_scalar_noncircular_values():
    st_ = GaussianModelState(sigma=np.eye(1), gamma=np.full((1, 1), 0.5), sigma_hat=np.ones(1))
    assert gauss_score_vector(np.ones(1), st_)[0] == pytest.approx(2 / 3)
    assert gauss_stats(st_)[1][0] == pytest.approx(4 / 3)
    assert gauss_score_scalar_noncirc(1.0, 0.5) == pytest.approx(2 / 3)
    assert gauss_score_scalar_noncirc(1 + 2j, 0.0) == 1 - 2j


def test_scalar_delta_clip_keeps_score_finite():
    with pytest.raises(ValueError):
        gauss_score_scalar_noncirc(1.0, 1.0)
    d = clip_circularity(0.999j)
    assert abs(d) == pytest.approx(0.99) and d.real == pytest.approx(0)
    val = gauss_score_scalar_noncirc(1.0, d)
    assert np.isfinite(val) and abs(val) < 1 / (1 - 0.99**2) * 2


def test_build_state_singular_and_loaded():
    s = np.array([[1.0 + 0j], [2.0 + 1j]])  # K=2 > Ns=1
    with pytest.raises(SingularModelError, match="mu"):
        build_gaussian_state(s, mu=0.0)
    st_ = build_gaussian_state(s, mu=0.1)
    assert st_.K == 2
    np.testing.assert_allclose(st_.P, st_.P.conj().T, atol=1e-10)


def test_build_state_scalar_unit_variance():
    s = cn(np.random.default_rng(2), 1, 50_000)
    st_ = build_gaussian_state(s)
    assert st_.mu == 0.0
    assert st_.sigma[0, 0].real == pytest.approx(1, abs=0.03)


def random_state(rng, K):
    X = cn(rng, K, K)
    S = X @ X.conj().T + K * np.eye(K)
    Y = rng.standard_normal((K, K))
    G = 0.3 * (Y + Y.T)
    return GaussianModelState(sigma=S, gamma=G, sigma_hat=np.sqrt(np.real(np.diag(S))))


def test_gauss_rho_matches_derivative():
    rng = np.random.default_rng(3)
    for K in (1, 2, 4):
        st_ = random_state(rng, K)
        _, rho = gauss_stats(st_)
        for _ in range(10):
            s = cn(rng, K)
            for k in range(K):
                _, d_conj = wirtinger(st_.score, s, k)
                assert abs(d_conj[k] - rho[k]) < 1e-6 * abs(rho[k])


def test_gauss_rho_monte_carlo():
    """rho_k equals the sample mean of d phi_k / d conj(s_k) over model draws."""
    rng = np.random.default_rng(4)
    st_ = random_state(rng, 3)
    # draw from the normalized model: augmented covariance [[S, G], [G*, S*]]
    lam = 1 / st_.sigma_hat
    S = lam[:, None] * st_.sigma * lam
    G = lam[:, None] * st_.gamma * lam
    aug = np.block([[S, G], [G.conj(), S.conj()]])
    # real representation of the complex vector
    J = np.block([[np.eye(3), np.eye(3)], [-1j * np.eye(3), 1j * np.eye(3)]]) / 2
    R = np.real(J @ aug @ J.conj().T)
    v = np.linalg.cholesky(R) @ rng.standard_normal((6, 100_000))
    s = v[:3] + 1j * v[3:]
    h = 1e-6
    derivs = []
    for k in range(3):
        e = np.zeros((3, 1))
        e[k] = h
        dre = (st_.score(s + e) - st_.score(s - e))[k] / (2 * h)
        dim = (st_.score(s + 1j * e) - st_.score(s - 1j * e))[k] / (2 * h)
        derivs.append(np.mean(0.5 * (dre + 1j * dim)))
    _, rho = gauss_stats(st_)
    np.testing.assert_allclose(np.real(derivs), rho, rtol=0.02)


@settings(max_examples=25, deadline=None)
@given(K=st.integers(1, 5), seed=st.integers(0, 2**32 - 1), circular=st.booleans())
def test_empirical_nu_is_one_without_loading(K, seed, circular):
    rng = np.random.default_rng(seed)
    s = rng.standard_normal((K, K)) @ cn(rng, K, 40) + 0.4 * cn(rng, K, 40).conj()
    model = GaussModel(noncircular=not circular, mu=0.0 if K > 1 else None)
    np.testing.assert_allclose(nu_hat(model, s), 1, atol=1e-10)


def test_loaded_nu_deviates_slightly():
    """With diagonal loading the empirical nu is close to, but not exactly, one."""
    rng = np.random.default_rng(5)
    s = cn(rng, 4, 200)
    dev = np.abs(nu_hat(GaussModel(), s) - 1)
    assert 1e-6 < dev.max() < 1e-2


def test_circular_score_decorrelates():
    rng = np.random.default_rng(6)
    s = rng.standard_normal((3, 3)) @ cn(rng, 3, 100)
    st_ = build_gaussian_state(s, mu=0.0, noncircular=False)
    u = s / st_.sigma_hat[:, None]
    Xi = st_.score(u) @ u.T / u.shape[1]
    np.testing.assert_allclose(Xi, np.eye(3), atol=1e-10)


def test_model_registry():
    assert isinstance(get_model("rati"), RatiModel)
    assert get_model("gauss").name == "gauss"
    assert get_model("gauss-circ").name == "gauss-circ"
    assert get_model("gausstri").name == "gausstri"
    with pytest.raises(ValueError):
        get_model("laplace")


def test_batched_gauss_matches_per_cell_state():
    rng = np.random.default_rng(7)
    s_hat = cn(rng, 3, 2, 2, 30) + 0.3 * cn(rng, 3, 2, 2, 30).conj()
    sigma2 = np.mean(np.abs(s_hat) ** 2, axis=-1)
    phi, nu, rho = GaussModel(mu=0.05).evaluate(s_hat, sigma2)
    st_ = build_gaussian_state(s_hat[:, 1, 0], mu=0.05)
    u = s_hat[:, 1, 0] / np.sqrt(sigma2[:, 1, 0])[:, None]
    np.testing.assert_allclose(phi[:, 1, 0], st_.score(u), atol=1e-10)
    np.testing.assert_allclose(rho[:, 1, 0], st_.stats()[1], atol=1e-10)
    np.testing.assert_array_equal(nu, 1)
