"""Constant-separating-vector (CSV) mixing and demixing matrices.

For dataset ``k`` and block ``t`` the mixing matrix is built from
``gamma[k, t]`` (scalar), ``g[k, t]`` (length ``d - 1``) and ``h[k]``::

    A = [[gamma,  h^H                   ],
         [g,      (g h^H - I) / gamma   ]]

and its inverse from the separating vector ``w[k] = [beta[k]; h[k]]``::

    W = [[conj(beta), h^H        ],
         [g,          -gamma * I ]]

The two are inverses of each other whenever ``w^H a = 1`` with
``a = [gamma; g]``. Only the parameters are stored, so the CSV structure
(``w`` shared by all blocks) holds by construction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SegmentedDataset

__all__ = [
    "CSVParams",
    "SingularParameterizationError",
    "InconsistentParametersError",
    "build_mixing",
    "build_demixing",
    "mix",
    "random_csv_params",
]

CONSTRAINT_TOL = 1e-8


class SingularParameterizationError(ValueError):
    pass


class InconsistentParametersError(ValueError):
    pass


@dataclass(frozen=True)
class CSVParams:
    """Mixing parameters of ``K`` datasets over ``T`` blocks.

    Attributes
    ----------
    beta : ndarray, shape (K,)
    h : ndarray, shape (K, d - 1)
    gamma : ndarray, shape (K, T)
    g : ndarray, shape (K, T, d - 1)
    """

    beta: np.ndarray
    h: np.ndarray
    gamma: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        for name in ("beta", "h", "gamma", "g"):
            arr = np.array(getattr(self, name), dtype=np.complex128)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        K, T = self.gamma.shape
        if self.beta.shape != (K,) or self.h.shape[0] != K or self.g.shape[:2] != (K, T):
            raise ValueError("inconsistent CSV parameter shapes")
        if self.h.shape[1] != self.g.shape[2]:
            raise ValueError("h and g must both have length d - 1")

    @property
    def K(self) -> int:
        return self.gamma.shape[0]

    @property
    def T(self) -> int:
        return self.gamma.shape[1]

    @property
    def d(self) -> int:
        return self.h.shape[1] + 1

    @property
    def w(self) -> np.ndarray:
        """Separating vectors, shape (K, d)."""
        return np.concatenate([self.beta[:, None], self.h], axis=1)

    @property
    def a(self) -> np.ndarray:
        """Mixing vectors of the SOI, shape (K, T, d)."""
        return np.concatenate([self.gamma[..., None], self.g], axis=2)

    def constraint_residual(self) -> np.ndarray:
        """``w_k^H a_{k,t} - 1`` for every (k, t)."""
        wa = self.beta.conj()[:, None] * self.gamma + np.einsum(
            "ki,kti->kt", self.h.conj(), self.g
        )
        return wa - 1.0


def build_mixing(params: CSVParams, k: int, t: int) -> np.ndarray:
    """Mixing matrix ``A_{k,t}``, shape (d, d)."""
    gamma = params.gamma[k, t]
    if gamma == 0:
        raise SingularParameterizationError(f"gamma[{k}, {t}] is zero")
    g = params.g[k, t]
    h = params.h[k]
    d = params.d
    A = np.empty((d, d), dtype=np.complex128)
    A[0, 0] = gamma
    A[0, 1:] = h.conj()
    A[1:, 0] = g
    A[1:, 1:] = (np.outer(g, h.conj()) - np.eye(d - 1)) / gamma
    return A


def build_demixing(params: CSVParams, k: int, t: int) -> np.ndarray:
    """Demixing matrix ``W_{k,t}``, shape (d, d); the inverse of ``A_{k,t}``."""
    res = params.constraint_residual()[k, t]
    if abs(res) > CONSTRAINT_TOL:
        raise InconsistentParametersError(
            f"distortionless constraint violated at (k={k}, t={t}): |w^H a - 1| = {abs(res):.3g}"
        )
    d = params.d
    W = np.empty((d, d), dtype=np.complex128)
    W[0, 0] = np.conj(params.beta[k])
    W[0, 1:] = params.h[k].conj()
    W[1:, 0] = params.g[k, t]
    W[1:, 1:] = -params.gamma[k, t] * np.eye(d - 1)
    return W


def mixing_matrices(params: CSVParams) -> np.ndarray:
    """All ``A_{k,t}``, shape (K, T, d, d)."""
    return np.array(
        [[build_mixing(params, k, t) for t in range(params.T)] for k in range(params.K)]
    )


def demixing_matrices(params: CSVParams) -> np.ndarray:
    """All ``W_{k,t}``, shape (K, T, d, d)."""
    return np.array(
        [[build_demixing(params, k, t) for t in range(params.T)] for k in range(params.K)]
    )


def mix(params: CSVParams, u: np.ndarray) -> SegmentedDataset:
    """Apply ``x_{k,t,l} = A_{k,t} u_{k,t,l}``.

    Parameters
    ----------
    u : ndarray, shape (K, T, L, d, Ns)
        Source samples; channel 0 is the SOI, channels 1..d-1 the background.
    """
    u = np.asarray(u)
    K, T = params.K, params.T
    if u.ndim != 5 or u.shape[:2] != (K, T) or u.shape[3] != params.d:
        raise ValueError(
            f"sources of shape {u.shape} do not match K={K}, T={T}, d={params.d}"
        )
    A = mixing_matrices(params)
    return SegmentedDataset(np.einsum("ktij,ktljn->ktlin", A, u))


def random_csv_params(K: int, T: int, d: int, rng: np.random.Generator,
                      min_gamma: float = 0.3) -> CSVParams:
    """Draw a random CSV instance.

    ``beta`` and ``h`` (hence ``w``) are drawn once per dataset from a circular
    unit Gaussian. For each block, ``g`` is drawn the same way and ``gamma`` is
    the value that satisfies ``w^H a = 1``; ``g`` is redrawn while
    ``|gamma| < min_gamma`` to keep ``A`` reasonably conditioned.
    """
    def cn(*shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)

    beta = np.empty(K, dtype=np.complex128)
    h = cn(K, d - 1)
    gamma = np.empty((K, T), dtype=np.complex128)
    g = np.empty((K, T, d - 1), dtype=np.complex128)
    for k in range(K):
        b = cn()
        while abs(b) < min_gamma:
            b = cn()
        beta[k] = b
        for t in range(T):
            while True:
                gt = cn(d - 1)
                gam = (1.0 - h[k].conj() @ gt) / np.conj(beta[k])
                if abs(gam) >= min_gamma:
                    break
            g[k, t] = gt
            gamma[k, t] = gam
    return CSVParams(beta=beta, h=h, gamma=gamma, g=g)
