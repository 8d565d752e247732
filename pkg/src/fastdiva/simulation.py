"""Synthetic trials with known ground truth.

Random streams are derived from one integer seed through
``numpy.random.SeedSequence`` spawn keys, one key per purpose and cell, so a
trial is reproducible bit for bit and independent of generation order:

=========================  ==========================================
spawn key                  stream
=========================  ==========================================
``(0,)``                   mixing parameters and background scaling
``(1, j, t, l)``           SOI stream ``j`` on cell (t, l)
``(2, k, t, l)``           background of dataset ``k`` on cell (t, l)
``(3,)``                   SOI coupling matrix (dependent mode)
``(4,)``                   initialization perturbation
=========================  ==========================================
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .core import SegmentedDataset
from .mixing import CSVParams, mix, mixing_matrices, random_csv_params

__all__ = [
    "TrialConfig",
    "GroundTruth",
    "variance_profile",
    "sample_cggd",
    "generate_trial",
    "perturb_init",
    "trial_rng",
]


@dataclass(frozen=True)
class TrialConfig:
    """One synthetic trial.

    Attributes
    ----------
    K, T, L, Ns, d : int
        Datasets, blocks, sub-blocks per block, samples per sub-block, channels.
    c : float
        Shape of the complex generalized Gaussian SOI (1 is Gaussian).
    delta : complex
        SOI circularity coefficient ``E[s^2] / E[|s|^2]``, ``|delta| < 1``.
    alpha : float
        Nonstationarity exponent of the SOI variance profile.
    seed : int
    dependence_mix : bool
        Mix ``K`` independent SOI streams with a random ``K x K`` circular
        Gaussian matrix so the SOI components become dependent.
    tridiag_c : float, optional
        Correlate adjacent SOI components through a constant tridiagonal
        covariance with this off-diagonal value (frequency-domain emulation).
    """

    K: int = 1
    T: int = 1
    L: int = 20
    Ns: int = 250
    d: int = 6
    c: float = 1.0
    delta: complex = 0.0
    alpha: float = 0.0
    seed: int = 0
    dependence_mix: bool = False
    tridiag_c: float | None = None

    def __post_init__(self):
        if min(self.K, self.T, self.L, self.Ns) < 1 or self.d < 2:
            raise ValueError("dimensions must be positive and d >= 2")
        if self.c <= 0:
            raise ValueError("shape parameter c must be positive")
        if abs(self.delta) > 1:
            raise ValueError("|delta| must not exceed 1")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")

    @property
    def N(self) -> int:
        return self.T * self.L * self.Ns


@dataclass(frozen=True)
class GroundTruth:
    """True mixing and the quantities needed to score an extraction.

    ``soi_variance[k, t, l]`` is the model variance of SOI component ``k``;
    ``background_variance[k]`` the per-channel variance of its background.
    ``sources`` keeps the unmixed samples, shape (K, T, L, d, Ns).
    """

    params: CSVParams
    w_star: np.ndarray
    variance_profile: np.ndarray
    soi_variance: np.ndarray
    background_variance: np.ndarray
    sources: np.ndarray

    @property
    def A(self) -> np.ndarray:
        return mixing_matrices(self.params)


def trial_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _cn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def variance_profile(T: int, L: int, alpha: float) -> np.ndarray:
    """``[sin(t pi / (T+1)) sin(l pi / (L+1))]^alpha`` on the (T, L) grid, 1-based t, l."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    st = np.sin(np.arange(1, T + 1) * np.pi / (T + 1))
    sl = np.sin(np.arange(1, L + 1) * np.pi / (L + 1))
    return np.outer(st, sl) ** alpha


def sample_cggd(n: int, c: float, delta: complex, rng: np.random.Generator) -> np.ndarray:
    """Unit-variance complex generalized Gaussian samples with circularity ``delta``.

    A circular variate ``z = sqrt(A g^{1/c}) e^{i theta}`` (``g ~ Gamma(1/c)``,
    ``A = Gamma(1/c) / Gamma(2/c)``) is made improper by
    ``s = e^{i arg(delta)/2} (p z + q conj(z))`` with ``p^2 + q^2 = 1`` and
    ``2 p q = |delta|``. For ``c != 1`` this keeps the second-order statistics
    exact but is not the intrinsic non-circular GGD family.
    """
    if c <= 0:
        raise ValueError("c must be positive")
    if abs(delta) >= 1:
        raise ValueError("|delta| = 1 (fully improper) is not supported")
    g = rng.gamma(1.0 / c, 1.0, size=n)
    scale = np.exp(gammaln(1.0 / c) - gammaln(2.0 / c))
    theta = rng.uniform(0.0, 2 * np.pi, size=n)
    z = np.sqrt(scale * g ** (1.0 / c)) * np.exp(1j * theta)
    m = abs(delta)
    p = (np.sqrt(1 + m) + np.sqrt(1 - m)) / 2
    q = (np.sqrt(1 + m) - np.sqrt(1 - m)) / 2
    return np.exp(0.5j * np.angle(delta)) * (p * z + q * z.conj())


def _tridiag_sqrt(K, c):
    S = np.eye(K) + c * (np.eye(K, k=1) + np.eye(K, k=-1))
    return np.linalg.cholesky(S)


def generate_trial(cfg: TrialConfig):
    """Draw sources and CSV mixing for one trial.

    Returns
    -------
    data : SegmentedDataset
        Mixtures segmented with ``cfg.L`` sub-blocks.
    truth : GroundTruth
    """
    K, T, L, Ns, d = cfg.K, cfg.T, cfg.L, cfg.Ns, cfg.d
    profile = variance_profile(T, L, cfg.alpha)

    soi = np.empty((K, T, L, Ns), dtype=np.complex128)
    for j in range(K):
        for t in range(T):
            for l in range(L):
                soi[j, t, l] = np.sqrt(profile[t, l]) * sample_cggd(
                    Ns, cfg.c, cfg.delta, trial_rng(cfg.seed, 1, j, t, l))
    soi_var = np.broadcast_to(profile, (K, T, L)).copy()
    if cfg.dependence_mix and K > 1:
        Mx = _cn(trial_rng(cfg.seed, 3), (K, K))
        soi = np.einsum("kj,jtln->ktln", Mx, soi)
        soi_var = np.einsum("kj,jtl->ktl", np.abs(Mx) ** 2, soi_var)
    if cfg.tridiag_c is not None and K > 1:
        Rt = _tridiag_sqrt(K, cfg.tridiag_c)
        soi = np.einsum("kj,jtln->ktln", Rt, soi)
        soi_var = np.einsum("kj,jtl->ktl", np.abs(Rt) ** 2, soi_var)

    rng0 = trial_rng(cfg.seed, 0)
    params = random_csv_params(K, T, d, rng0)
    A = mixing_matrices(params)
    # background scaled so that SOI and background powers on the sensors match on average
    soi_power = np.einsum("ktd,kt->k", np.abs(A[..., 0]) ** 2, soi_var.mean(axis=2)) / T
    bg_power = np.sum(np.abs(A[..., 1:]) ** 2, axis=(1, 2, 3)) / T
    bg_var = soi_power / bg_power

    u = np.empty((K, T, L, d, Ns), dtype=np.complex128)
    u[:, :, :, 0] = soi
    for k in range(K):
        for t in range(T):
            for l in range(L):
                u[k, t, l, 1:] = np.sqrt(bg_var[k]) * _cn(trial_rng(cfg.seed, 2, k, t, l), (d - 1, Ns))
    data = mix(params, u)
    truth = GroundTruth(params=params, w_star=params.w, variance_profile=profile,
                        soi_variance=soi_var, background_variance=bg_var, sources=u)
    return data, truth


def perturb_init(w_star: np.ndarray, rng: np.random.Generator, magnitude2: float = 0.01) -> np.ndarray:
    """``w_star + eps`` with ``eps`` orthogonal to ``w_star`` and ``|eps|^2 = magnitude2``.

    Works row-wise on an array of shape (K, d).
    """
    w_star = np.atleast_2d(np.asarray(w_star, dtype=np.complex128))
    out = w_star.copy()
    if magnitude2 == 0:
        return out
    for k, w in enumerate(w_star):
        v = _cn(rng, w.shape)
        v -= w * (w.conj() @ v) / (w.conj() @ w)
        out[k] = w + np.sqrt(magnitude2) * v / np.linalg.norm(v)
    return out
