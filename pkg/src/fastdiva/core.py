"""Segmented multi-dataset observations and their second-order block statistics.

Arrays follow a fixed axis order throughout the package::

    x[k, t, l, channel, n]   dataset k, block t, sub-block l, sample n

so that a whole experiment is a single complex ndarray of shape
``(K, T, L, d, Ns)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "SegmentedDataset",
    "BlockStats",
    "segment",
    "sample_cov",
    "sample_pcov",
    "block_stats",
]


@dataclass(frozen=True)
class SegmentedDataset:
    """Observed mixtures split into ``T`` blocks of ``L`` sub-blocks each.

    Parameters
    ----------
    x : ndarray, shape (K, T, L, d, Ns), complex
        Mixture samples. Assumed zero-mean; no demeaning is done here.
    """

    x: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x)
        if x.ndim != 5:
            raise ValueError(f"expected x of shape (K, T, L, d, Ns), got {x.shape}")
        K, T, L, d, Ns = x.shape
        if min(K, T, L, Ns) < 1:
            raise ValueError(f"all of K, T, L, Ns must be >= 1, got {x.shape}")
        if d < 2:
            raise ValueError(f"need at least two channels, got d={d}")
        x = x.astype(np.complex128, copy=False)
        x.setflags(write=False)
        object.__setattr__(self, "x", x)

    @property
    def K(self) -> int:
        return self.x.shape[0]

    @property
    def T(self) -> int:
        return self.x.shape[1]

    @property
    def L(self) -> int:
        return self.x.shape[2]

    @property
    def d(self) -> int:
        return self.x.shape[3]

    @property
    def Ns(self) -> int:
        return self.x.shape[4]

    @property
    def N(self) -> int:
        return self.T * self.L * self.Ns

    def flatten(self) -> np.ndarray:
        """Return the raw streams, shape (K, d, N), in temporal order."""
        K, T, L, d, Ns = self.x.shape
        return self.x.transpose(0, 3, 1, 2, 4).reshape(K, d, T * L * Ns)

    def resegment(self, L: int) -> "SegmentedDataset":
        """Same samples and blocks, split into a different number of sub-blocks."""
        K, T, _, d, _ = self.x.shape
        blocks = self.x.transpose(0, 1, 3, 2, 4).reshape(K, T, d, -1)
        Nb = blocks.shape[-1]
        if Nb % L:
            raise ValueError(f"block length {Nb} is not divisible by L={L}")
        x = blocks.reshape(K, T, d, L, Nb // L).transpose(0, 1, 3, 2, 4)
        return SegmentedDataset(x)

    @cached_property
    def stats(self) -> "BlockStats":
        return block_stats(self)


def segment(raw, T: int, L: int) -> SegmentedDataset:
    """Split raw streams into ``T`` blocks of ``L`` equal sub-blocks.

    Parameters
    ----------
    raw : array_like, shape (K, d, N) or (d, N)
        One ``d x N`` complex matrix per dataset.
    T, L : int
        Number of blocks and sub-blocks per block.

    Raises
    ------
    ValueError
        If ``N`` is not divisible by ``T * L``. Truncation is left to the caller.
    """
    raw = np.asarray(raw)
    if raw.ndim == 2:
        raw = raw[None]
    if raw.ndim != 3:
        raise ValueError(f"expected raw data of shape (K, d, N), got {raw.shape}")
    if T < 1 or L < 1:
        raise ValueError("T and L must be positive")
    K, d, N = raw.shape
    if N % (T * L):
        raise ValueError(f"N={N} is not divisible by T*L={T * L}")
    Ns = N // (T * L)
    x = raw.reshape(K, d, T, L, Ns).transpose(0, 2, 3, 1, 4)
    return SegmentedDataset(x)


def sample_cov(x: np.ndarray) -> np.ndarray:
    """Sample covariance ``mean_n x(n) x(n)^H`` over the last axis.

    Works on a single ``d x Ns`` cell or on any stack of them.
    """
    x = np.asarray(x)
    return np.einsum("...in,...jn->...ij", x, x.conj()) / x.shape[-1]


def sample_pcov(x: np.ndarray) -> np.ndarray:
    """Sample pseudo-covariance ``mean_n x(n) x(n)^T`` over the last axis."""
    x = np.asarray(x)
    return np.einsum("...in,...jn->...ij", x, x) / x.shape[-1]


@dataclass(frozen=True)
class BlockStats:
    """Cached per-cell covariance ``C``, pseudo-covariance ``D`` and block mean ``Cbar``.

    Shapes are ``(K, T, L, d, d)`` for ``C`` and ``D`` and ``(K, T, d, d)`` for
    ``Cbar``.
    """

    C: np.ndarray
    D: np.ndarray
    Cbar: np.ndarray


def block_stats(data: SegmentedDataset) -> BlockStats:
    C = sample_cov(data.x)
    # enforce exact Hermitian / symmetric structure against roundoff in einsum
    C = 0.5 * (C + C.conj().swapaxes(-1, -2))
    D = sample_pcov(data.x)
    D = 0.5 * (D + D.swapaxes(-1, -2))
    Cbar = C.mean(axis=2)
    for arr in (C, D, Cbar):
        arr.setflags(write=False)
    return BlockStats(C=C, D=D, Cbar=Cbar)
