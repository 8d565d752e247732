"""Source models for the SOI: score functions and the statistics nu and rho.

A source model sees the current SOI estimates of every cell and returns

* ``phi``: the score ``phi_k`` evaluated at every normalized sample,
* ``nu``:  ``mean(phi_k(u) * u_k)`` per cell,
* ``rho``: ``mean(d phi_k / d conj(u_k))`` per cell,

where ``u_k = s_k / sigma_k`` is the SOI estimate scaled to unit sample
variance. Gaussian models return ``nu = 1`` analytically.

Everything here operates on arrays with the dataset index ``k`` on axis 0 and
samples on the last axis, so ``u`` is typically shaped ``(K, T, L, Ns)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

__all__ = [
    "ModelStats",
    "SourceModel",
    "RatiModel",
    "GaussModel",
    "GaussianModelState",
    "DegenerateNormalizationError",
    "SingularModelError",
    "rati_score",
    "rati_logpdf",
    "rati_stats",
    "rati_diagnostics",
    "build_gaussian_state",
    "gauss_score_vector",
    "gauss_stats",
    "gauss_score_scalar_noncirc",
    "clip_circularity",
    "get_model",
    "MODEL_NAMES",
]

NU_FLOOR = 1e-8
DELTA_CLIP = 0.99
SINGULAR_COND = 1e12


class DegenerateNormalizationError(FloatingPointError):
    """nu is (numerically) zero, so the normalized gradient is undefined."""


class SingularModelError(np.linalg.LinAlgError):
    """Estimated SOI covariance (or P) is singular; diagonal loading mu > 0 helps."""


class ModelStats(NamedTuple):
    phi: np.ndarray
    nu: np.ndarray
    rho: np.ndarray


class SourceModel:
    """Base class. Subclasses implement :meth:`evaluate`."""

    name = "base"

    def evaluate(self, s_hat: np.ndarray, sigma2: np.ndarray) -> ModelStats:
        """Score and statistics for SOI estimates ``s_hat`` (K, ..., Ns).

        ``sigma2`` holds the per-cell sample variances, shape ``s_hat.shape[:-1]``.
        """
        raise NotImplementedError

    def diagnostics(self, s_hat: np.ndarray, sigma2: np.ndarray):
        """``(xi, eta)`` per cell; only needed by Hessian verification."""
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}()"


def _normalize(s_hat, sigma2):
    return s_hat / np.sqrt(sigma2)[..., None]


# ---------------------------------------------------------------------------
# rational nonlinearity


def rati_score(s: np.ndarray) -> np.ndarray:
    """``phi_k(s) = conj(s_k) / (1 + sum_j |s_j|^2)``, components on axis 0."""
    s = np.asarray(s, dtype=np.complex128)
    denom = 1.0 + np.sum(np.abs(s) ** 2, axis=0, keepdims=True)
    return s.conj() / denom


def rati_logpdf(s: np.ndarray) -> np.ndarray:
    """Log model density up to an additive constant."""
    s = np.asarray(s)
    return -np.log1p(np.sum(np.abs(s) ** 2, axis=0))


def _rati_partials(s):
    denom = 1.0 + np.sum(np.abs(s) ** 2, axis=0, keepdims=True)
    d_conj = 1.0 / denom - np.abs(s) ** 2 / denom**2
    d_plain = -(s.conj() ** 2) / denom**2
    return d_conj, d_plain


def rati_stats(s: np.ndarray):
    """Sample ``(nu, rho)`` of the rati score; samples on the last axis.

    Raises
    ------
    DegenerateNormalizationError
        If any ``|nu| < 1e-8``.
    """
    s = np.asarray(s, dtype=np.complex128)
    phi = rati_score(s)
    nu = np.mean(phi * s, axis=-1)
    if np.any(np.abs(nu) < NU_FLOOR):
        raise DegenerateNormalizationError("nu vanishes; the SOI estimate is (nearly) zero")
    d_conj, _ = _rati_partials(s)
    rho = np.mean(d_conj, axis=-1)
    return nu, rho


def rati_diagnostics(s: np.ndarray):
    s = np.asarray(s, dtype=np.complex128)
    d_conj, d_plain = _rati_partials(s)
    xi = np.mean(d_conj * np.abs(s) ** 2, axis=-1)
    eta = np.mean(d_plain * s**2, axis=-1)
    return xi, eta


class RatiModel(SourceModel):
    """``phi(s) = s^* / (1 + |s|^2)``; for K > 1 the denominator sums over all components."""

    name = "rati"

    def evaluate(self, s_hat, sigma2):
        u = _normalize(s_hat, sigma2)
        phi = rati_score(u)
        nu = np.mean(phi * u, axis=-1)
        if np.any(np.abs(nu) < NU_FLOOR):
            raise DegenerateNormalizationError("nu vanishes; the SOI estimate is (nearly) zero")
        d_conj, _ = _rati_partials(u)
        return ModelStats(phi, nu, np.mean(d_conj, axis=-1))

    def diagnostics(self, s_hat, sigma2):
        return rati_diagnostics(_normalize(s_hat, sigma2))

    # fixed-density interface used by the contrast function
    def score(self, u):
        return rati_score(u)

    def logpdf(self, u):
        return rati_logpdf(u)


# ---------------------------------------------------------------------------
# Gaussian models


def _herm(A):
    return A.conj().swapaxes(-1, -2)


def _check_cond(A, what):
    cond = np.linalg.cond(A)
    if not np.all(np.isfinite(cond)) or np.any(cond > SINGULAR_COND):
        raise SingularModelError(
            f"{what} is singular (condition number {np.max(cond):.3g}); "
            "use diagonal loading mu > 0"
        )


def _gauss_operators(S, G):
    """Score operators for covariance ``S`` and pseudo-covariance ``G``.

    Returns ``(Pinv, Bm)`` with ``psi(s) = Pinv @ conj(s) - Bm @ s``; both
    batched over leading axes.
    """
    _check_cond(S, "SOI covariance")
    Sinv = np.linalg.inv(S)
    P = S.conj() - _herm(G) @ Sinv @ G
    P = 0.5 * (P + _herm(P))
    _check_cond(P, "matrix P")
    Pinv = np.linalg.inv(P)
    M = _herm(G) @ Sinv
    Bm = 0.5 * (M.swapaxes(-1, -2) @ Pinv.conj() + Pinv @ M)
    return Pinv, Bm


@dataclass(frozen=True)
class GaussianModelState:
    """Estimated Gaussian SOI model for one cell.

    ``sigma`` and ``gamma`` are the (possibly loaded) covariance and
    pseudo-covariance of the raw SOI estimates; ``sigma_hat`` their standard
    deviations used for normalization. Scores act on normalized samples.
    """

    sigma: np.ndarray
    gamma: np.ndarray
    sigma_hat: np.ndarray
    mu: float = 0.0
    _ops: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        lam = 1.0 / np.asarray(self.sigma_hat, dtype=float)
        Sn = lam[:, None] * self.sigma * lam[None, :]
        Gn = lam[:, None] * self.gamma * lam[None, :]
        object.__setattr__(self, "_ops", _gauss_operators(Sn, Gn))

    @property
    def K(self) -> int:
        return self.sigma.shape[0]

    @property
    def P(self) -> np.ndarray:
        """``conj(Sigma) - Gamma^H Sigma^{-1} Gamma`` (unnormalized)."""
        S, G = self.sigma, self.gamma
        return S.conj() - _herm(G) @ np.linalg.solve(S, G)

    @property
    def M(self) -> np.ndarray:
        return _herm(self.gamma) @ np.linalg.inv(self.sigma)

    @property
    def Lambda(self) -> np.ndarray:
        return np.diag(1.0 / self.sigma_hat)

    def score(self, u):
        Pinv, Bm = self._ops
        u = np.asarray(u, dtype=np.complex128)
        flat = u.reshape(self.K, -1)
        return (Pinv @ flat.conj() - Bm @ flat).reshape(u.shape)

    def logpdf(self, u):
        """Log density of the normalized variable, up to an additive constant."""
        Pinv, Bm = self._ops
        u = np.asarray(u, dtype=np.complex128)
        flat = u.reshape(self.K, -1)
        # -u^H P^{-*} u + Re(u^T M^T P^{-*} u); Bm is the symmetric part of M^T P^{-*}
        quad = np.einsum("in,ij,jn->n", flat.conj(), Pinv.conj(), flat).real
        pseudo = np.einsum("in,ij,jn->n", flat, Bm, flat).real
        return (pseudo - quad).reshape(u.shape[1:])

    def stats(self):
        """Analytic ``(nu, rho)``: ``nu = 1`` and ``rho_k = sigma_k^2 (P^{-1})_kk``."""
        Pinv, _ = self._ops
        return np.ones(self.K), np.real(np.diag(Pinv)).copy()


def default_mu(sigma_hat_cov: np.ndarray) -> float:
    K = sigma_hat_cov.shape[-1]
    return 1e-3 * np.real(np.trace(sigma_hat_cov, axis1=-2, axis2=-1)) / K


def build_gaussian_state(s_hat: np.ndarray, mu: float | None = None,
                         noncircular: bool = True) -> GaussianModelState:
    """Fit a Gaussian SOI model to the samples of one cell.

    Parameters
    ----------
    s_hat : ndarray, shape (K, Ns)
        Raw SOI estimates.
    mu : float, optional
        Diagonal loading. ``None`` selects ``1e-3 * trace / K`` for ``K > 1``
        and no loading for ``K = 1``.
    noncircular : bool
        Estimate the pseudo-covariance; otherwise it is fixed to zero.
    """
    s_hat = np.atleast_2d(np.asarray(s_hat, dtype=np.complex128))
    K, Ns = s_hat.shape
    S = s_hat @ s_hat.conj().T / Ns
    sigma_hat = np.sqrt(np.real(np.diag(S)))
    if mu is None:
        mu = default_mu(S) if K > 1 else 0.0
    if mu < 0:
        raise ValueError("mu must be non-negative")
    if np.any(sigma_hat == 0):
        raise SingularModelError("an SOI component has zero sample variance")
    G = s_hat @ s_hat.T / Ns if noncircular else np.zeros_like(S)
    return GaussianModelState(sigma=S + mu * np.eye(K), gamma=G, sigma_hat=sigma_hat, mu=float(mu))


def gauss_score_vector(s: np.ndarray, state: GaussianModelState) -> np.ndarray:
    """Gaussian score of normalized SOI samples ``s`` (K, ...) under ``state``."""
    return state.score(s)


def gauss_stats(state: GaussianModelState):
    return state.stats()


def clip_circularity(delta, limit: float = DELTA_CLIP):
    """Shrink ``|delta|`` to at most ``limit``, keeping the phase."""
    delta = np.asarray(delta, dtype=np.complex128)
    mag = np.abs(delta)
    scale = np.where(mag > limit, limit / np.where(mag > 0, mag, 1.0), 1.0)
    return delta * scale


def gauss_score_scalar_noncirc(s, delta):
    """``(s^* - conj(delta) s) / (1 - |delta|^2)`` for a unit-variance scalar SOI."""
    delta = np.asarray(delta)
    if np.any(np.abs(delta) >= 1):
        raise ValueError("|delta| must be below 1; clip it first")
    s = np.asarray(s)
    return (s.conj() - delta.conj() * s) / (1.0 - np.abs(delta) ** 2)


class GaussModel(SourceModel):
    """Gaussian SOI with estimated covariance and, optionally, pseudo-covariance.

    For ``K = 1`` without loading the closed-form scalar score is used, with the
    circularity estimate clipped to ``|delta| <= 0.99``.
    """

    def __init__(self, noncircular: bool = True, mu: float | None = None):
        self.noncircular = noncircular
        self.mu = mu

    @property
    def name(self):
        return "gauss" if self.noncircular else "gauss-circ"

    def __repr__(self):
        return f"GaussModel(noncircular={self.noncircular}, mu={self.mu})"

    def _scalar(self, u):
        if self.noncircular:
            delta = clip_circularity(np.mean(u[0] ** 2, axis=-1))
        else:
            delta = np.zeros(u.shape[1:-1], dtype=np.complex128)
        phi = gauss_score_scalar_noncirc(u[0], delta[..., None])[None]
        rho = 1.0 / (1.0 - np.abs(delta) ** 2)
        return phi, rho[None], delta[None]

    def _matrices(self, s_hat):
        """Per-cell normalized covariance/pseudo-covariance, cells first."""
        K = s_hat.shape[0]
        Ns = s_hat.shape[-1]
        cells = np.moveaxis(s_hat, 0, -2)  # (..., K, Ns)
        S = cells @ _herm(cells) / Ns
        var = np.real(np.diagonal(S, axis1=-2, axis2=-1))
        if np.any(var <= 0):
            raise SingularModelError("an SOI component has zero sample variance")
        mu = default_mu(S) if self.mu is None else np.full(S.shape[:-2], float(self.mu))
        S = S + np.asarray(mu)[..., None, None] * np.eye(K)
        if self.noncircular:
            G = cells @ cells.swapaxes(-1, -2) / Ns
        else:
            G = np.zeros_like(S)
        lam = 1.0 / np.sqrt(var)
        Sn = lam[..., :, None] * S * lam[..., None, :]
        Gn = lam[..., :, None] * G * lam[..., None, :]
        return Sn, Gn, cells * lam[..., None]

    def evaluate(self, s_hat, sigma2):
        K = s_hat.shape[0]
        if K == 1 and not self.mu:
            phi, rho, _ = self._scalar(_normalize(s_hat, sigma2))
            return ModelStats(phi, np.ones_like(rho), rho)
        Sn, Gn, un = self._matrices(s_hat)
        Pinv, Bm = _gauss_operators(Sn, Gn)
        phi = Pinv @ un.conj() - Bm @ un
        phi = np.moveaxis(phi, -2, 0)
        rho = np.moveaxis(np.real(np.diagonal(Pinv, axis1=-2, axis2=-1)), -1, 0)
        return ModelStats(phi, np.ones_like(rho), rho)

    def diagnostics(self, s_hat, sigma2):
        K = s_hat.shape[0]
        if K == 1 and not self.mu:
            u = _normalize(s_hat, sigma2)
            _, rho, delta = self._scalar(u)
            d_plain = -delta.conj() / (1.0 - np.abs(delta) ** 2)
            xi = rho * np.mean(np.abs(u) ** 2, axis=-1)
            eta = d_plain * np.mean(u**2, axis=-1)
            return xi, eta
        Sn, Gn, un = self._matrices(s_hat)
        Pinv, Bm = _gauss_operators(Sn, Gn)
        d_conj = np.moveaxis(np.real(np.diagonal(Pinv, axis1=-2, axis2=-1)), -1, 0)
        d_plain = -np.moveaxis(np.diagonal(Bm, axis1=-2, axis2=-1), -1, 0)
        u = np.moveaxis(un, -2, 0)
        xi = d_conj * np.mean(np.abs(u) ** 2, axis=-1)
        eta = d_plain * np.mean(u**2, axis=-1)
        return xi, eta


MODEL_NAMES = ("rati", "gauss", "gauss-circ", "gausstri")


def get_model(name: str, **kwargs) -> SourceModel:
    """Model by name: ``rati``, ``gauss``, ``gauss-circ`` or ``gausstri``."""
    if name == "rati":
        return RatiModel()
    if name == "gauss":
        return GaussModel(noncircular=True, **kwargs)
    if name == "gauss-circ":
        return GaussModel(noncircular=False, **kwargs)
    if name == "gausstri":
        from .tridiag import TridiagGaussModel

        return TridiagGaussModel(**kwargs)
    raise ValueError(f"unknown source model {name!r}; expected one of {MODEL_NAMES}")
