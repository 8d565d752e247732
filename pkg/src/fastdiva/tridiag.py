"""Unit-diagonal Hermitian tridiagonal SOI covariance ("gausstri" model).

The covariance of the normalized SOI vector is modeled as::

    [[1,        c_1                     ],
     [conj(c_1), 1,     c_2             ],
     [          ...     ...     c_{K-1} ],
     [                  conj(c_{K-1}), 1]]

with ``|c_k| <= 0.4`` so that every eigenvalue stays above ``0.2``.
Indices in this module are 0-based: ``c[m]`` couples components ``m`` and
``m + 1``.

Inverse entries follow the continuant (Usmani) formula. The continuants
themselves shrink geometrically with ``K``, so entries are assembled from the
ratios ``theta_i / theta_{i-1}`` and ``xi_i / xi_{i+1}``, which stay within
``[0.8, 1]`` after clipping.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .models import ModelStats, SourceModel, _normalize

__all__ = [
    "OFFDIAG_LIMIT",
    "TridiagCov",
    "clip_offdiag",
    "continuants",
    "inverse_entry",
    "banded_inverse",
    "solve",
    "tridiag_solve",
    "eig_constant_c",
    "TridiagGaussModel",
]

OFFDIAG_LIMIT = 0.4


def clip_offdiag(c_hat, limit: float = OFFDIAG_LIMIT) -> np.ndarray:
    """Shrink entries with ``|c| > limit`` to magnitude ``limit``, keeping the phase."""
    c_hat = np.asarray(c_hat, dtype=np.complex128)
    mag = np.abs(c_hat)
    over = mag > limit
    out = c_hat.copy()
    out[over] = limit * c_hat[over] / mag[over]
    return out


def continuants(c) -> tuple[np.ndarray, np.ndarray]:
    """Leading and trailing principal minors of the tridiagonal matrix.

    Returns ``theta`` of length ``K + 1`` with ``theta[i]`` the determinant of
    the leading ``i x i`` block (``theta[0] = 1``), and ``xi`` of length
    ``K + 2`` with ``xi[i]`` the determinant of the trailing block starting at
    1-based row ``i`` (``xi[K] = xi[K + 1] = 1``; ``xi[0]`` is unused and NaN).
    """
    c2 = np.abs(np.asarray(c, dtype=np.complex128)) ** 2
    K = c2.size + 1
    theta = np.ones(K + 1)
    for i in range(2, K + 1):
        theta[i] = theta[i - 1] - c2[i - 2] * theta[i - 2]
    xi = np.ones(K + 2)
    xi[0] = np.nan
    for i in range(K - 1, 0, -1):
        xi[i] = xi[i + 1] - c2[i - 1] * xi[i + 2]
    return theta, xi


def _ratios(c2):
    """Forward/backward continuant ratios, batched over leading axes of ``c2``.

    ``r[..., i] = theta_{i+1} / theta_i`` and ``q[..., i] = xi_{i+1} / xi_{i+2}``
    in 1-based continuant indexing.
    """
    K = c2.shape[-1] + 1
    r = np.ones(c2.shape[:-1] + (K,))
    q = np.ones(c2.shape[:-1] + (K,))
    for i in range(1, K):
        r[..., i] = 1.0 - c2[..., i - 1] / r[..., i - 1]
    for i in range(K - 2, -1, -1):
        q[..., i] = 1.0 - c2[..., i] / q[..., i + 1]
    return r, q


def _inverse_diagonal(c2, r, q):
    K = r.shape[-1]
    denom = np.ones(r.shape)
    if K > 1:
        denom[..., 1:] -= c2 / r[..., :-1]
        denom[..., :-1] -= c2 / q[..., 1:]
    return 1.0 / denom


@dataclass(frozen=True)
class TridiagCov:
    """Tridiagonal covariance from (already clipped) off-diagonal entries ``c``."""

    c: np.ndarray
    theta: np.ndarray = field(init=False, repr=False)
    xi: np.ndarray = field(init=False, repr=False)
    _r: np.ndarray = field(init=False, repr=False)
    _q: np.ndarray = field(init=False, repr=False)
    _diag: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.c, dtype=np.complex128))
        object.__setattr__(self, "c", c)
        theta, xi = continuants(c)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "xi", xi)
        c2 = np.abs(c) ** 2
        r, q = _ratios(c2)
        if np.any(r <= 0) or np.any(q <= 0):
            raise np.linalg.LinAlgError("tridiagonal covariance is not positive definite")
        object.__setattr__(self, "_r", r)
        object.__setattr__(self, "_q", q)
        object.__setattr__(self, "_diag", _inverse_diagonal(c2, r, q))

    @classmethod
    def from_estimate(cls, c_hat) -> "TridiagCov":
        return cls(clip_offdiag(c_hat))

    @property
    def K(self) -> int:
        return self.c.size + 1

    def dense(self) -> np.ndarray:
        return np.eye(self.K, dtype=np.complex128) + np.diag(self.c, 1) + np.diag(self.c.conj(), -1)

    def inverse_diagonal(self) -> np.ndarray:
        return self._diag.copy()

    def score(self, u):
        """``conj(Sigma^{-1} u)``, components on axis 0."""
        return solve(self, u).conj()

    def logpdf(self, u):
        """``-u^H Sigma^{-1} u`` (up to an additive constant)."""
        u = np.asarray(u, dtype=np.complex128)
        return -np.real(np.sum(u.conj() * solve(self, u), axis=0))


def inverse_entry(tc: TridiagCov, i: int, j: int) -> complex:
    """Entry ``(i, j)`` (0-based) of the inverse covariance."""
    K = tc.K
    if not (0 <= i < K and 0 <= j < K):
        raise IndexError(f"({i}, {j}) out of range for K={K}")
    if tc.theta[K] == 0:
        raise np.linalg.LinAlgError("singular tridiagonal covariance")
    lo, hi = min(i, j), max(i, j)
    val = complex(tc._diag[lo])
    for m in range(lo, hi):
        val *= -tc.c[m] / tc._q[m + 1]
    return val if i <= j else np.conj(val)


def banded_inverse(tc: TridiagCov, k_max: int) -> np.ndarray:
    """Inverse covariance with entries beyond ``k_max`` off the diagonal set to zero.

    Costs ``O(k_max * K)``; returned as a dense ``K x K`` array.
    """
    K = tc.K
    if not 0 <= k_max <= K - 1:
        raise ValueError(f"k_max must lie in [0, {K - 1}], got {k_max}")
    out = np.diag(tc._diag.astype(np.complex128))
    band = tc._diag.astype(np.complex128)
    factors = -tc.c / tc._q[1:]
    idx = np.arange(K)
    for m in range(1, k_max + 1):
        band = band[: K - m] * factors[m - 1 : K - 1]
        out[idx[: K - m], idx[m:]] = band
        out[idx[m:], idx[: K - m]] = band.conj()
    return out


def tridiag_solve(c, b):
    """Solve ``Sigma x = b`` for unit-diagonal Hermitian tridiagonal ``Sigma``.

    Parameters
    ----------
    c : ndarray, shape (..., K - 1)
        Upper off-diagonal; the lower one is its conjugate.
    b : ndarray, shape (..., K, n)
        Right-hand sides; leading axes broadcast against those of ``c``.
    """
    c = np.asarray(c, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    K = b.shape[-2]
    if K == 1:
        return b.copy()
    cp = np.empty(c.shape, dtype=np.complex128)
    dp = np.empty(np.broadcast_shapes(b.shape, c.shape[:-1] + (K, 1)), dtype=np.complex128)
    cp[..., 0] = c[..., 0]
    dp[..., 0, :] = b[..., 0, :]
    for i in range(1, K):
        lower = c[..., i - 1].conj()
        denom = 1.0 - lower * cp[..., i - 1]
        if i < K - 1:
            cp[..., i] = c[..., i] / denom
        dp[..., i, :] = (b[..., i, :] - lower[..., None] * dp[..., i - 1, :]) / denom[..., None]
    for i in range(K - 2, -1, -1):
        dp[..., i, :] -= cp[..., i, None] * dp[..., i + 1, :]
    return dp


def solve(tc: TridiagCov, b) -> np.ndarray:
    """``Sigma^{-1} b`` in ``O(K)`` per right-hand side; components on axis 0."""
    b = np.asarray(b, dtype=np.complex128)
    flat = b.reshape(tc.K, -1)
    return tridiag_solve(tc.c, flat).reshape(b.shape)


def eig_constant_c(K: int, c) -> np.ndarray:
    """Eigenvalues ``1 + 2|c| cos(k pi / (K + 1))``, ``k = 1..K``."""
    k = np.arange(1, K + 1)
    return 1.0 + 2.0 * abs(c) * np.cos(k * np.pi / (K + 1))


class TridiagGaussModel(SourceModel):
    """Circular Gaussian SOI with clipped tridiagonal covariance, fitted per cell.

    Parameters
    ----------
    k_max : int, optional
        If given, the score uses the inverse truncated to ``k_max``
        off-diagonals instead of the exact tridiagonal solve.
    """

    name = "gausstri"

    def __init__(self, k_max: int | None = None):
        self.k_max = k_max

    def __repr__(self):
        return f"TridiagGaussModel(k_max={self.k_max})"

    def fit(self, u):
        """Clipped off-diagonals per cell from normalized samples (K, ..., Ns)."""
        c_hat = np.mean(u[:-1] * u[1:].conj(), axis=-1)
        return clip_offdiag(np.moveaxis(c_hat, 0, -1))

    def evaluate(self, s_hat, sigma2):
        u = _normalize(s_hat, sigma2)
        K = u.shape[0]
        if K == 1:
            ones = np.ones(u.shape[1:-1])
            return ModelStats(u.conj(), ones[None], ones[None])
        c = self.fit(u)  # (..., K-1)
        r, q = _ratios(np.abs(c) ** 2)
        rho = np.moveaxis(_inverse_diagonal(np.abs(c) ** 2, r, q), -1, 0)
        cells = np.moveaxis(u, 0, -2)  # (..., K, Ns)
        if self.k_max is None:
            x = tridiag_solve(c, cells)
        else:
            k_max = min(self.k_max, K - 1)
            x = np.empty_like(cells)
            for idx in np.ndindex(c.shape[:-1]):
                x[idx] = banded_inverse(TridiagCov(c[idx]), k_max) @ cells[idx]
        phi = np.moveaxis(x, -2, 0).conj()
        return ModelStats(phi, np.ones_like(rho), rho)

    def diagnostics(self, s_hat, sigma2):
        _, _, rho = self.evaluate(s_hat, sigma2)
        u = _normalize(s_hat, sigma2)
        return rho * np.mean(np.abs(u) ** 2, axis=-1), np.zeros_like(rho, dtype=np.complex128)
