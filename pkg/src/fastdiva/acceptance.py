"""Acceptance checks with their tolerances and trial counts.

Each ``check_*`` function returns a :class:`CheckResult`; :func:`run_all`
runs them in order. Trial counts are the full ones; the suite takes a few
minutes on one core.
"""
from __future__ import annotations

import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import SegmentedDataset
from .harness import ExperimentSpec, run_experiment
from .mixing import build_demixing, build_mixing, random_csv_params
from .models import GaussModel, RatiModel, build_gaussian_state, clip_circularity, \
    gauss_score_scalar_noncirc
from .simulation import TrialConfig, generate_trial, trial_rng
from .solver import contrast_eval, full_hessians_diag, gradient, gradient_terms12, \
    soi_estimates, soi_variances, update_a
from .tridiag import TridiagCov, TridiagGaussModel, clip_offdiag, eig_constant_c, inverse_entry

__all__ = ["CheckResult", "CHECKS", "run_all"]


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] {self.number:2d} {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _cn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


# ---------------------------------------------------------------------------
# 1. algebra of the CSV parameterization


def check_algebra(n: int = 100, seed: int = 1) -> CheckResult:
    rng = np.random.default_rng(seed)
    dims = (2, 3, 6, 10)
    inv_err = det_err = 0.0
    for i in range(n):
        d = dims[i % len(dims)]
        p = random_csv_params(1, 1, d, rng)
        A, W = build_mixing(p, 0, 0), build_demixing(p, 0, 0)
        inv_err = max(inv_err, np.max(np.abs(A @ W - np.eye(d))))
        expected = (-1) ** (d - 1) * p.gamma[0, 0] ** (d - 2)
        det_err = max(det_err, abs(np.linalg.det(W) - expected) / abs(expected))
    ok = inv_err < 1e-10 and det_err < 1e-9
    return CheckResult(1, "CSV algebra", ok, f"max|AW-I|={inv_err:.2e}, max det rel err={det_err:.2e}")


# ---------------------------------------------------------------------------
# 2. gradient of contrast terms 1-2 against finite differences


def wirtinger_fd(f, w: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central-difference ``df/dconj(w) = (df/dRe + i df/dIm) / 2`` of a real ``f``."""
    g = np.zeros(w.shape, dtype=np.complex128)
    for idx in np.ndindex(w.shape):
        e = np.zeros(w.shape, dtype=np.complex128)
        e[idx] = h
        dre = (f(w + e) - f(w - e)) / (2 * h)
        dim = (f(w + 1j * e) - f(w - 1j * e)) / (2 * h)
        g[idx] = 0.5 * (dre + 1j * dim)
    return g


def _terms12(data, density):
    def f(w):
        t = contrast_eval(data, w, density)
        return t.log_density + t.log_variance
    return f


def check_gradient_oracle(points: int = 20, seed: int = 2) -> CheckResult:
    worst = {}
    for model in ("rati", "gauss"):
        err = 0.0
        for p in range(points):
            K = 1 + p % 2
            cfg = TrialConfig(K=K, T=2, L=3, Ns=200, d=4, alpha=1.0, delta=0.4, seed=seed * 1000 + p)
            data, truth = generate_trial(cfg)
            rng = trial_rng(cfg.seed, 9)
            w = truth.w_star + 0.3 * _cn(rng, K, cfg.d)
            if model == "rati":
                density = RatiModel()
            else:
                # freeze a Gaussian density fitted at this point
                u = soi_estimates(data, w) / np.sqrt(soi_variances(data.stats, w))[..., None]
                density = build_gaussian_state(u.reshape(K, -1), mu=0.0)
            g = gradient_terms12(data, w, density)
            fd = wirtinger_fd(_terms12(data, density), w)
            err = max(err, np.linalg.norm(fd - g) / np.linalg.norm(g))
        worst[model] = err
    ok = all(v < 1e-6 for v in worst.values())
    return CheckResult(2, "gradient oracle", ok,
                       ", ".join(f"{m} max rel err={v:.2e}" for m, v in worst.items()))


# ---------------------------------------------------------------------------
# 3. empirical nu of the Gaussian models


def tridiag_samples(c, Ns: int, rng) -> np.ndarray:
    """Samples whose sample covariance equals the tridiagonal matrix with off-diagonal ``c``."""
    K = len(c) + 1
    z = _cn(rng, K, Ns)
    S = z @ z.conj().T / Ns
    z = np.linalg.solve(np.linalg.cholesky(S), z)  # sample covariance now exactly I
    R = np.linalg.cholesky(TridiagCov(c).dense())
    return R @ z


def _empirical_nu(model, s):
    s = s[:, None, None, :]
    sigma2 = np.mean(np.abs(s) ** 2, axis=-1)
    phi, _, _ = model.evaluate(s, sigma2)
    u = s / np.sqrt(sigma2)[..., None]
    return np.mean(phi * u, axis=-1)


def check_nu_unity(trials: int = 20, seed: int = 3) -> CheckResult:
    rng = np.random.default_rng(seed)
    errs = {"scalar": 0.0, "vector": 0.0, "gausstri": 0.0}
    for _ in range(trials):
        # scalar non-circular, no loading
        s = 2.0 * (_cn(rng, 1, 500) + 0.5 * _cn(rng, 1, 500).conj())
        errs["scalar"] = max(errs["scalar"], np.max(np.abs(_empirical_nu(GaussModel(), s) - 1)))
        # vector, general covariance and pseudo-covariance, no loading
        K = 4
        s = rng.standard_normal((K, K)) @ _cn(rng, K, 500) + 0.3 * _cn(rng, K, 500).conj()
        errs["vector"] = max(errs["vector"],
                             np.max(np.abs(_empirical_nu(GaussModel(mu=0.0), s) - 1)))
        # tridiagonal: data whose sample covariance is tridiagonal within the clip
        K = 8
        c = 0.4 * rng.uniform(0, 1, K - 1) * np.exp(2j * np.pi * rng.uniform(size=K - 1))
        s = rng.uniform(0.5, 2.0, (K, 1)) * tridiag_samples(c, 300, rng)
        errs["gausstri"] = max(errs["gausstri"],
                               np.max(np.abs(_empirical_nu(TridiagGaussModel(), s) - 1)))
    ok = all(v < 1e-10 for v in errs.values())
    return CheckResult(3, "empirical nu = 1", ok,
                       ", ".join(f"{k} max|nu-1|={v:.1e}" for k, v in errs.items()))


# ---------------------------------------------------------------------------
# 4. consistency: gradient norm at the truth decays like Ns^-1/2


def gradient_at(data: SegmentedDataset, w: np.ndarray, model) -> np.ndarray:
    stats = data.stats
    sigma2 = soi_variances(stats, w)
    phi, nu, _ = model.evaluate(soi_estimates(data, w), sigma2)
    return gradient(data, update_a(stats, w), phi, nu, sigma2)


def check_consistency(trials: int = 50, seed: int = 4) -> CheckResult:
    sizes = (1_000, 10_000, 100_000)
    model = GaussModel()
    logs = np.empty((len(sizes), trials))
    for i, Ns in enumerate(sizes):
        for t in range(trials):
            cfg = TrialConfig(K=1, T=1, L=5, Ns=Ns, d=6, alpha=2.0, delta=0.5, seed=seed * 10_000 + t)
            data, truth = generate_trial(cfg)
            logs[i, t] = np.log10(np.linalg.norm(gradient_at(data, truth.w_star, model)))
    slope = np.polyfit(np.repeat(np.log10(sizes), trials), logs.ravel(), 1)[0]
    ok = abs(slope + 0.5) <= 0.15
    return CheckResult(4, "consistency slope", ok, f"slope={slope:.3f} (target -0.5 +/- 0.15)")


# ---------------------------------------------------------------------------
# 5. tridiagonal inverse and spectrum


def check_tridiag(trials: int = 50, seed: int = 5) -> CheckResult:
    rng = np.random.default_rng(seed)
    inv_err = eig_err = 0.0
    for K in (4, 16, 32, 64):
        for _ in range(trials):
            c = clip_offdiag(_cn(rng, K - 1))
            tc = TridiagCov(c)
            dense = np.linalg.inv(tc.dense())
            ours = np.array([[inverse_entry(tc, i, j) for j in range(K)] for i in range(K)])
            inv_err = max(inv_err, np.max(np.abs(ours - dense)))
        cc = 0.4 * np.exp(2j * np.pi * rng.uniform())
        ref = np.linalg.eigvalsh(TridiagCov(np.full(K - 1, cc)).dense())
        eig_err = max(eig_err, np.max(np.abs(np.sort(eig_constant_c(K, cc)) - ref)))
    lam_min = np.inf
    for _ in range(100):
        K = int(rng.integers(2, 257))
        c = clip_offdiag(3.0 * _cn(rng, K - 1))
        lam_min = min(lam_min, np.linalg.eigvalsh(TridiagCov(c).dense())[0])
    ok = inv_err < 1e-8 and eig_err < 1e-10 and lam_min >= 0.2
    return CheckResult(5, "tridiagonal inverse", ok,
                       f"inverse max err={inv_err:.1e}, eig err={eig_err:.1e}, min eig={lam_min:.3f}")


# ---------------------------------------------------------------------------
# 6. rank-one-inclusive Hessian against finite differences


def check_hessian_oracle(trials: int = 10, seed: int = 6, h: float = 1e-5) -> CheckResult:
    worst = 0.0
    for t in range(trials):
        cfg = TrialConfig(K=1, T=1, L=5, Ns=100_000, d=4, alpha=2.0, delta=0.5, seed=seed * 1000 + t)
        data, truth = generate_trial(cfg)
        stats = data.stats
        w0 = truth.w_star.astype(np.complex128)
        u = soi_estimates(data, w0) / np.sqrt(soi_variances(stats, w0))[..., None]
        delta = clip_circularity(np.mean(u**2, axis=-1))[..., None]  # frozen per cell

        def grad(w):
            sigma2 = soi_variances(stats, w)
            uu = soi_estimates(data, w) / np.sqrt(sigma2)[..., None]
            phi = gauss_score_scalar_noncirc(uu, delta)
            return gradient(data, update_a(stats, w), phi, np.ones(sigma2.shape), sigma2)[0]

        d = cfg.d
        J = np.zeros((d, d), dtype=np.complex128)  # d grad / d w
        for i in range(d):
            e = np.zeros((1, d), dtype=np.complex128)
            e[0, i] = h
            dre = (grad(w0 + e) - grad(w0 - e)) / (2 * h)
            dim = (grad(w0 + 1j * e) - grad(w0 - 1j * e)) / (2 * h)
            J[:, i] = 0.5 * (dre - 1j * dim)
        H2 = full_hessians_diag(data, w0, GaussModel())["fastdiva"][1][0]
        worst = max(worst, np.linalg.norm(J.conj() - H2, 2) / np.linalg.norm(H2, 2))
    return CheckResult(6, "Hessian oracle", worst < 0.05, f"max spectral rel err={worst:.3%}")


# ---------------------------------------------------------------------------
# 7-11: Monte-Carlo experiments through the harness


def _experiment(doc: dict, threads: int | None = None, out=None) -> dict:
    spec = ExperimentSpec.from_dict({"schema_version": 1, **doc})
    if out is not None:
        return run_experiment(spec, out, threads=threads)
    with tempfile.TemporaryDirectory() as tmp:
        return run_experiment(spec, tmp, threads=threads)


NONIDENT_DOC = {
    "sweep": "alpha", "values": [0.0], "trials": 100, "seed": 7,
    "trial": {"K": 1, "T": 1, "L": 20, "Ns": 250, "d": 6, "c": 1.0, "delta": [0.0, 0.0]},
    "algorithms": [{"algorithm": "fastdiva", "model": "gauss", "L": 20}],
}


def check_nonidentifiable(threads=None) -> CheckResult:
    s = _experiment(NONIDENT_DOC, threads)
    p = s["algorithms"]["FastDIVA-gauss-20"]
    init, fin = p["init_trimmed_mean"][0], p["trimmed_mean"][0]
    ok = fin is not None and abs(fin - init) <= 3.0
    return CheckResult(7, "non-identifiable control", ok,
                       f"init={init:.2f} dB, final={fin:.2f} dB, errors={p['errors'][0]} "
                       "(target |final-init| <= 3 dB)")


ALPHA_DOC = {
    "sweep": "alpha", "values": [0.1, 2.0], "trials": 200, "seed": 8,
    "trial": {"K": 1, "T": 1, "L": 20, "Ns": 250, "d": 6, "c": 1.0, "delta": [0.5, 0.0]},
    "algorithms": [{"algorithm": "fastdiva", "model": "gauss", "L": 20},
                   {"algorithm": "fastdiva", "model": "rati", "L": 1}],
}


def check_alpha_regime(threads=None) -> CheckResult:
    s = _experiment(ALPHA_DOC, threads)
    g = s["algorithms"]["FastDIVA-gauss-20"]["trimmed_mean"]
    r = s["algorithms"]["FastDIVA-rati-1"]["trimmed_mean"]
    ok = (g[0] <= -15 and r[0] >= -15 and g[1] < g[0] and r[1] < r[0] and g[1] <= r[1] - 5)
    return CheckResult(8, "alpha regime", ok,
                       f"alpha=0.1: gauss-20={g[0]:.2f}, rati-1={r[0]:.2f}; "
                       f"alpha=2: gauss-20={g[1]:.2f}, rati-1={r[1]:.2f} dB")


SMALL_N_DOC = {
    "sweep": "N", "values": [150], "trials": 200, "seed": 9,
    "trial": {"K": 1, "T": 3, "L": 5, "d": 6, "c": 1.0, "delta": [0.5, 0.0], "alpha": 2.0},
    "algorithms": [{"algorithm": "fastdiva", "model": "gauss", "L": 5}],
}


def check_small_n(threads=None) -> CheckResult:
    s = _experiment(SMALL_N_DOC, threads)
    v = s["algorithms"]["FastDIVA-gauss-5"]["trimmed_mean"][0]
    return CheckResult(9, "N=150 accuracy", v is not None and v <= -8.0,
                       f"FastDIVA-gauss trimmed mean={v:.2f} dB (target <= -8 dB)")


FREQ_DOC = {
    "sweep": "freqdomain", "values": [2.0], "trials": 50, "seed": 10, "max_iter": 30,
    "trial": {"K": 32, "T": 3, "L": 5, "Ns": 25, "d": 10, "c": 1.0, "tridiag_c": 0.3},
    "algorithms": [{"algorithm": "fastdiva", "model": "gausstri", "L": 5},
                   {"algorithm": "quickive", "model": "gausstri", "L": 5}],
}


def check_freqdomain(threads=None) -> CheckResult:
    s = _experiment(FREQ_DOC, threads)
    ok = True
    parts = []
    for label, p in s["algorithms"].items():
        med = np.array(p["trace"][0]["median"])
        best10 = float(np.min(med[1:11]))
        conv = p["converged_fraction"][0]
        ok &= best10 <= -20 and conv >= 0.9
        parts.append(f"{label}: best median ISR in 10 it={best10:.2f} dB, "
                     f"converged in 30 it={conv:.0%}")
    return CheckResult(10, "frequency-domain emulation", ok, "; ".join(parts))


DETERMINISM_DOC = {
    "sweep": "trace", "values": [2.0], "trials": 3, "seed": 11, "max_iter": 50,
    "trial": {"K": 2, "T": 2, "L": 4, "Ns": 50, "d": 4, "delta": [0.5, 0.0]},
    "algorithms": [{"algorithm": "fastdiva", "model": "gauss"},
                   {"algorithm": "quickive", "model": "rati"}],
}


def check_determinism(threads=None) -> CheckResult:
    """Run the same spec serially and on a worker pool; outputs must match bytewise."""
    names = ("trials.csv", "traces.csv", "summary.json")
    with tempfile.TemporaryDirectory() as tmp:
        a, b = Path(tmp, "a"), Path(tmp, "b")
        _experiment(DETERMINISM_DOC, 1, out=a)
        _experiment(DETERMINISM_DOC, max(2, threads or 1), out=b)
        same = all((a / n).read_bytes() == (b / n).read_bytes() for n in names)
    return CheckResult(11, "determinism", same, "byte-identical outputs" if same else "outputs differ")


CHECKS = (
    check_algebra,
    check_gradient_oracle,
    check_nu_unity,
    check_consistency,
    check_tridiag,
    check_hessian_oracle,
    check_nonidentifiable,
    check_alpha_regime,
    check_small_n,
    check_freqdomain,
    check_determinism,
)
_PARALLEL = {check_nonidentifiable, check_alpha_regime, check_small_n, check_freqdomain,
             check_determinism}


def run_all(threads: int | None = None, only=None, echo=print) -> list[CheckResult]:
    """Run the checks (all, or the numbers in ``only``), echoing one line each."""
    out = []
    for i, fn in enumerate(CHECKS, start=1):
        if only is not None and i not in only:
            continue
        t0 = time.perf_counter()
        res = fn(threads=threads) if fn in _PARALLEL else fn()
        res.seconds = time.perf_counter() - t0
        if echo is not None:
            echo(res.line())
        out.append(res)
    return out
