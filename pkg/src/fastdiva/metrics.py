"""Extraction quality and robust averaging."""
from __future__ import annotations

import math

import numpy as np

from .simulation import GroundTruth

__all__ = ["ISR_FLOOR_DB", "isr", "isr_all", "trimmed_mean"]

ISR_FLOOR_DB = -120.0


def isr_all(w: np.ndarray, truth: GroundTruth) -> np.ndarray:
    """Interference-to-signal ratio in dB of every dataset's extracted signal.

    With gains ``g_t = A_t^H w`` the output is ``sum_i conj(g_t[i]) u_t[i]``, so::

        ISR = < sum_{i>=1} |g_t[i]|^2 var_bg >_t / < |g_t[0]|^2 <var_soi>_l >_t

    Perfect extraction is reported as ``ISR_FLOOR_DB``; zero SOI gain as ``+inf``.
    """
    w = np.atleast_2d(np.asarray(w))
    A = truth.A
    g = np.einsum("ktij,ki->ktj", A.conj(), w)
    leak = np.sum(np.abs(g[..., 1:]) ** 2, axis=-1) * truth.background_variance[:, None]
    gain = np.abs(g[..., 0]) ** 2 * truth.soi_variance.mean(axis=2)
    num = leak.mean(axis=1)
    den = gain.mean(axis=1)
    out = np.full(num.shape, np.inf)
    ok = den > 0
    with np.errstate(divide="ignore"):
        out[ok] = 10 * np.log10(num[ok] / den[ok])
    return np.maximum(out, ISR_FLOOR_DB)


def isr(w: np.ndarray, truth: GroundTruth, k: int) -> float:
    """ISR (dB) of dataset ``k``; ``w`` holds all separating vectors (K, d)."""
    return float(isr_all(w, truth)[k])


def trimmed_mean(values, fraction: float = 0.01) -> float:
    """Two-sided trimmed mean.

    Drops ``ceil(fraction * n)`` of the largest and of the smallest values,
    capped at ``floor((n - 1) / 2)`` so at least one value remains. NaNs are
    ignored; infinities are ordinary (extreme) values.
    """
    x = np.asarray(values, dtype=float).ravel()
    x = np.sort(x[~np.isnan(x)])
    n = x.size
    if n == 0:
        raise ValueError("no values to average")
    if not 0 <= fraction < 0.5:
        raise ValueError("fraction must lie in [0, 0.5)")
    m = min(math.ceil(fraction * n - 1e-9), (n - 1) // 2)
    kept = x[m:n - m] if m else x
    return float(np.mean(kept))
