"""FastDIVA and QuickIVE: Newton-type extraction of one SOI per dataset.

Each iteration

1. recomputes the mixing vectors from the current separating vectors so that
   the SOI and background estimates are uncorrelated over every block,
2. evaluates the source model on the current SOI estimates,
3. takes the step ``w <- w - H^{-1} grad`` per dataset.

FastDIVA and QuickIVE differ only in the Hessian approximation. The rank-one
parts of the exact Hessians are not used at run time; :func:`full_hessians_diag`
assembles them for verification.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .core import BlockStats, SegmentedDataset
from .models import SourceModel, get_model

__all__ = [
    "ALGORITHMS",
    "SolverConfig",
    "ExtractionState",
    "DegenerateDirectionError",
    "SingularHessianError",
    "soi_estimates",
    "soi_variances",
    "update_a",
    "subblock_a",
    "gradient",
    "gradient_terms12",
    "hessian",
    "newton_step",
    "crit",
    "run",
    "ContrastTerms",
    "contrast_eval",
    "full_hessians_diag",
]

log = logging.getLogger(__name__)

ALGORITHMS = ("fastdiva", "quickive")
DENOM_FLOOR = 1e-14


class DegenerateDirectionError(FloatingPointError):
    """``w^H C w`` vanished: the current separating vector extracts nothing."""


class SingularHessianError(np.linalg.LinAlgError):
    pass


@dataclass
class SolverConfig:
    """Iteration settings.

    ``hessian_floor`` bounds the accepted FastDIVA Hessian conditioning: when
    ``cond(H) > 1 / hessian_floor`` the QuickIVE Hessian is used for that
    dataset and iteration instead.
    """

    algorithm: str = "fastdiva"
    model: SourceModel | str = "gauss"
    tol: float = 1e-6
    max_iter: int = 1000
    hessian_floor: float = 1e-10

    def __post_init__(self):
        self.algorithm = self.algorithm.lower()
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if isinstance(self.model, str):
            self.model = get_model(self.model)
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass
class ExtractionState:
    """Result (and intermediate state) of an extraction run.

    ``w_history[i]`` holds the separating vectors after ``i`` iterations, so
    ``w_history[0]`` is the initialization.
    """

    w: np.ndarray
    a: np.ndarray
    s_hat: np.ndarray
    sigma2: np.ndarray
    n_iter: int = 0
    crit: list = field(default_factory=list)
    converged: bool = False
    fallbacks: int = 0
    w_history: list = field(default_factory=list)

    @property
    def crit_trace(self) -> np.ndarray:
        """Per-iteration stopping criterion, shape (n_iter, K)."""
        return np.array(self.crit)


# ---------------------------------------------------------------------------
# building blocks


def soi_estimates(data: SegmentedDataset, w: np.ndarray) -> np.ndarray:
    """``s_hat[k, t, l, n] = w_k^H x_{k,t,l}(n)``."""
    return np.einsum("kd,ktldn->ktln", w.conj(), data.x)


def soi_variances(stats: BlockStats, w: np.ndarray) -> np.ndarray:
    """``w_k^H C_{k,t,l} w_k``, shape (K, T, L)."""
    return np.einsum("kd,ktlde,ke->ktl", w.conj(), stats.C, w).real


def update_a(stats: BlockStats, w: np.ndarray) -> np.ndarray:
    """Mixing vectors ``Cbar w / (w^H Cbar w)`` satisfying the block-wise orthogonality.

    Returns shape (K, T, d).
    """
    num = np.einsum("ktde,ke->ktd", stats.Cbar, w)
    den = np.einsum("kd,ktd->kt", w.conj(), num).real
    if np.any(den < DENOM_FLOOR):
        raise DegenerateDirectionError("w^H Cbar w is (nearly) zero")
    return num / den[..., None]


def subblock_a(stats: BlockStats, w: np.ndarray) -> np.ndarray:
    """Sub-block counterparts ``C_l w / (w^H C_l w)``, shape (K, T, L, d)."""
    num = np.einsum("ktlde,ke->ktld", stats.C, w)
    den = np.einsum("kd,ktld->ktl", w.conj(), num).real
    if np.any(den < DENOM_FLOOR):
        raise DegenerateDirectionError("w^H C_l w is (nearly) zero")
    return num / den[..., None]


def _score_moment(data, phi, sigma2):
    """``mean_n phi_k(n) x_k(n) / sigma_k`` per cell, shape (K, T, L, d)."""
    m = np.einsum("ktln,ktldn->ktld", phi, data.x) / data.Ns
    return m / np.sqrt(sigma2)[..., None]


def gradient(data: SegmentedDataset, a: np.ndarray, phi: np.ndarray, nu: np.ndarray,
             sigma2: np.ndarray) -> np.ndarray:
    """Normalized gradient ``< a_t - < nu^{-1} E[phi x / sigma] >_l >_t``, shape (K, d)."""
    m = _score_moment(data, phi, sigma2) / nu[..., None]
    return np.mean(a - m.mean(axis=2), axis=1)


def gradient_terms12(data: SegmentedDataset, w: np.ndarray, density) -> np.ndarray:
    """Derivative w.r.t. ``conj(w)`` of the first two contrast terms.

    ``density`` is a fixed model density (``score`` method) shared by all
    cells. ``nu`` is the empirical ``mean(phi_k(u) u_k)`` for that density.
    """
    stats = data.stats
    sigma2 = soi_variances(stats, w)
    u = soi_estimates(data, w) / np.sqrt(sigma2)[..., None]
    phi = density.score(u)
    nu = np.mean(phi * u, axis=-1)
    a_l = subblock_a(stats, w)
    m = _score_moment(data, phi, sigma2)
    return -np.mean(m - np.real(nu)[..., None] * a_l + a_l, axis=(1, 2))


def hessian(stats: BlockStats, sigma2: np.ndarray, nu: np.ndarray, rho: np.ndarray,
            algorithm: str = "fastdiva") -> np.ndarray:
    """Approximate Hessians per dataset, shape (K, d, d)."""
    weight = rho / (np.conj(nu) * sigma2)
    quick = -np.mean(weight[..., None, None] * stats.C, axis=(1, 2))
    if algorithm == "quickive":
        return quick
    if algorithm != "fastdiva":
        raise ValueError(f"unknown algorithm {algorithm!r}")
    lead = stats.Cbar / sigma2.mean(axis=2)[..., None, None]
    return lead.mean(axis=1) + quick


def newton_step(w: np.ndarray, grad: np.ndarray, H: np.ndarray) -> np.ndarray:
    """``w_k - H_k^{-1} grad_k`` for every dataset."""
    try:
        step = np.linalg.solve(H, grad[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise SingularHessianError("Hessian is singular") from exc
    return w - step


def crit(w: np.ndarray, w_old: np.ndarray) -> np.ndarray:
    """``1 - |w^H w_old| / (|w| |w_old|)`` per dataset."""
    inner = np.abs(np.sum(w.conj() * w_old, axis=-1))
    norms = np.linalg.norm(w, axis=-1) * np.linalg.norm(w_old, axis=-1)
    return np.maximum(1.0 - inner / norms, 0.0)


# ---------------------------------------------------------------------------
# driver


def run(data: SegmentedDataset, config: SolverConfig | None = None, w_ini=None,
        callback: Callable[[ExtractionState], None] | None = None,
        **overrides) -> ExtractionState:
    """Iterate FastDIVA or QuickIVE from ``w_ini`` until convergence.

    Parameters
    ----------
    data : SegmentedDataset
    config : SolverConfig, optional
        Defaults are used when omitted; keyword ``overrides`` replace fields.
    w_ini : ndarray, shape (K, d)
        Initial separating vectors (non-zero).
    callback : callable, optional
        Called with the state after every iteration.

    Returns
    -------
    ExtractionState
        ``converged`` is False if ``max_iter`` was reached.
    """
    if config is None:
        config = SolverConfig(**overrides)
    elif overrides:
        config = SolverConfig(**{**config.__dict__, **overrides})
    if w_ini is None:
        raise ValueError("w_ini is required")
    w = np.array(w_ini, dtype=np.complex128).reshape(data.K, data.d)
    if np.any(np.linalg.norm(w, axis=1) == 0):
        raise ValueError("w_ini must be non-zero for every dataset")

    stats = data.stats
    model = config.model
    state = ExtractionState(w=w, a=update_a(stats, w), s_hat=None, sigma2=None)
    state.w_history.append(w.copy())
    floor = config.hessian_floor

    for it in range(config.max_iter):
        w_old = w
        a = update_a(stats, w)
        s_hat = soi_estimates(data, w)
        sigma2 = soi_variances(stats, w)
        phi, nu, rho = model.evaluate(s_hat, sigma2)
        grad = gradient(data, a, phi, nu, sigma2)
        H = hessian(stats, sigma2, nu, rho, config.algorithm)
        if config.algorithm == "fastdiva":
            bad = np.linalg.cond(H) > 1.0 / floor
            if np.any(bad):
                Hq = hessian(stats, sigma2, nu, rho, "quickive")
                H[bad] = Hq[bad]
                state.fallbacks += int(bad.sum())
                log.debug("iteration %d: FastDIVA Hessian ill-conditioned for k=%s",
                          it, np.flatnonzero(bad))
        w = newton_step(w, grad, H)
        if not np.all(np.isfinite(w)):
            raise FloatingPointError("non-finite separating vector")
        c = crit(w, w_old)
        state.w, state.a, state.s_hat, state.sigma2 = w, a, s_hat, sigma2
        state.n_iter = it + 1
        state.crit.append(c)
        state.w_history.append(w.copy())
        if callback is not None:
            callback(state)
        if np.all(c < config.tol):
            state.converged = True
            break

    state.a = update_a(stats, w)
    state.s_hat = soi_estimates(data, w)
    state.sigma2 = soi_variances(stats, w)
    return state


# ---------------------------------------------------------------------------
# contrast function and full Hessians (verification only)


class ContrastTerms(NamedTuple):
    total: float
    log_density: float
    log_variance: float
    background: float
    log_gamma: float


def _background_operator(a):
    """``B = [g, -gamma I]`` from ``a = [gamma; g]``, shape (..., d-1, d)."""
    d = a.shape[-1]
    B = np.zeros(a.shape[:-1] + (d - 1, d), dtype=np.complex128)
    B[..., :, 0] = a[..., 1:]
    B[..., :, 1:] = -a[..., 0, None, None] * np.eye(d - 1)
    return B


def contrast_eval(data: SegmentedDataset, w: np.ndarray, density, R=None) -> ContrastTerms:
    """Contrast value with ``a`` tied to ``w`` by the block-wise orthogonality.

    ``R`` (shape (K, T, d-1, d-1)) defaults to the inverse of the block-averaged
    background covariance, which makes the background term equal ``-K (d-1)``.
    The log-density term is defined up to an additive constant.
    """
    stats = data.stats
    K, d = data.K, data.d
    sigma2 = soi_variances(stats, w)
    u = soi_estimates(data, w) / np.sqrt(sigma2)[..., None]
    a = update_a(stats, w)
    B = _background_operator(a)
    Cz = np.einsum("ktij,ktljm,ktnm->ktlin", B, stats.C, B.conj())
    if R is None:
        R = np.linalg.inv(Cz.mean(axis=2))
    t1 = np.mean(density.logpdf(u), axis=-1).mean()
    t2 = -np.sum(np.log(sigma2), axis=0).mean()
    t3 = -np.einsum("ktij,ktlji->ktl", R, Cz).real.sum(axis=0).mean()
    t4 = (d - 2) * np.sum(np.log(np.abs(a[..., 0]) ** 2), axis=0).mean()
    return ContrastTerms(t1 + t2 + t3 + t4, t1, t2, t3, t4)


def full_hessians_diag(data: SegmentedDataset, w: np.ndarray, model: SourceModel):
    """Rank-one-inclusive Hessians with sample statistics in place of expectations.

    Returns ``{"fastdiva": (H1, H2), "quickive": (H1, H2)}`` where the first
    pair lets ``a`` follow ``w`` through the orthogonality constraint and the
    second keeps ``a`` fixed; arrays are (K, d, d), already averaged over
    blocks. ``H1`` is returned as is (not conjugated).
    """
    stats = data.stats
    sigma2 = soi_variances(stats, w)
    s_hat = soi_estimates(data, w)
    _, nu, rho = model.evaluate(s_hat, sigma2)
    xi, eta = model.diagnostics(s_hat, sigma2)
    tau = eta + xi + nu
    omega = xi + nu - rho
    a = update_a(stats, w)[:, :, None, :]  # (K, T, 1, d)
    a_l = subblock_a(stats, w)  # (K, T, L, d)

    def outer(u, v):
        return u[..., :, None] * v[..., None, :]

    aT = a[:, :, 0, :]
    main = -np.mean((rho / (nu * sigma2))[..., None, None] * stats.C.conj(), axis=2)
    lead = stats.Cbar.conj() / sigma2.mean(axis=2)[..., None, None]
    inv_nu = (1.0 / nu)[..., None]

    h1q = outer(np.mean(inv_nu * (tau[..., None] / 2 * a_l - eta[..., None] * a), axis=2), aT)
    h2q = main - outer(np.mean(inv_nu * ((xi - rho)[..., None] * a.conj()
                                         - tau[..., None] / 2 * a_l.conj()), axis=2), aT)
    h1f = outer(np.mean(inv_nu * (tau[..., None] / 2 * a_l - (nu + eta)[..., None] * a), axis=2), aT)
    h2f = lead + main - outer(np.mean(inv_nu * (omega[..., None] * a.conj()
                                                - tau[..., None] / 2 * a_l.conj()), axis=2), aT)
    # the formulas give conj(H1)
    return {
        "fastdiva": (h1f.conj().mean(axis=1), h2f.mean(axis=1)),
        "quickive": (h1q.conj().mean(axis=1), h2q.mean(axis=1)),
    }
