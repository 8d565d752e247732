"""Config-driven Monte-Carlo experiments.

An experiment is one JSON document (see ``ExperimentSpec``). Every trial
draws one synthetic instance per sweep value and runs every listed algorithm
on it from the same perturbed initialization. Results go to

``trials.csv``
    One row per (value, trial, algorithm, k).
``traces.csv``
    Per-iteration ISR, written for the ``trace`` and ``freqdomain`` sweeps.
``summary.json``
    Trimmed means and medians per algorithm and sweep value, plus
    per-iteration curves for the trace sweeps.

Floats are written with 17 significant digits and rows are sorted, so equal
specs give byte-identical files regardless of worker count.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .metrics import isr_all, trimmed_mean
from .simulation import TrialConfig, generate_trial, perturb_init, trial_rng
from .solver import SolverConfig, run
from .models import get_model

__all__ = [
    "SCHEMA_VERSION",
    "SWEEPS",
    "THREADS_ENV",
    "AlgorithmSpec",
    "ExperimentSpec",
    "TrialResult",
    "load_spec",
    "trial_seed",
    "run_trial",
    "run_experiment",
    "resolve_threads",
    "TRIAL_COLUMNS",
    "TRACE_COLUMNS",
]

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SWEEPS = ("alpha", "N", "trace", "freqdomain")
THREADS_ENV = "FASTDIVA_THREADS"

TRIAL_COLUMNS = ("sweep", "value", "trial", "seed", "algorithm", "k", "isr_init_db",
                 "isr_final_db", "iterations", "converged", "fallbacks", "status")
TRACE_COLUMNS = ("value", "trial", "algorithm", "k", "iteration", "isr_db", "crit")


@dataclass(frozen=True)
class AlgorithmSpec:
    """One algorithm variant.

    ``L`` is the number of sub-blocks the algorithm assumes (the data are
    re-segmented to it); ``None`` keeps the generator's ``L``. ``mode`` is
    ``"joint"`` (all datasets at once) or ``"separate"`` (each dataset on
    its own, ``K`` independent extractions).
    """

    algorithm: str = "fastdiva"
    model: str = "gauss"
    L: int | None = None
    mode: str = "joint"
    label: str | None = None
    model_options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("joint", "separate"):
            raise ValueError(f"mode must be 'joint' or 'separate', got {self.mode!r}")
        SolverConfig(algorithm=self.algorithm, model=get_model(self.model, **self.model_options))
        if self.label is None:
            suffix = "" if self.L is None else f"-{self.L}"
            name = {"fastdiva": "FastDIVA", "quickive": "QuickIVE"}[self.algorithm.lower()]
            object.__setattr__(self, "label", f"{name}-{self.model}{suffix}")


@dataclass(frozen=True)
class ExperimentSpec:
    """Parsed experiment document.

    Attributes
    ----------
    sweep : {"alpha", "N", "trace", "freqdomain"}
        ``alpha`` and ``N`` vary that quantity over ``values`` (``N`` sets
        ``Ns = N / (T L)``). ``trace`` and ``freqdomain`` record ISR per
        iteration; ``values`` then lists the ``alpha`` values to run.
    values : list of float
    trials : int
    seed : int
    trial : TrialConfig
        Template; ``seed`` and the swept field are overwritten per trial.
    algorithms : tuple of AlgorithmSpec
    max_iter, tol : solver settings shared by all algorithms.
    trim_fraction : float
    """

    sweep: str
    values: tuple
    trials: int
    algorithms: tuple
    trial: TrialConfig = TrialConfig()
    seed: int = 0
    max_iter: int = 1000
    tol: float = 1e-6
    trim_fraction: float = 0.01
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {self.schema_version}")
        if self.sweep not in SWEEPS:
            raise ValueError(f"sweep must be one of {SWEEPS}, got {self.sweep!r}")
        if len(self.values) == 0:
            raise ValueError("values must not be empty")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not self.algorithms:
            raise ValueError("algorithms must not be empty")
        labels = [a.label for a in self.algorithms]
        if len(set(labels)) != len(labels):
            raise ValueError(f"algorithm labels must be unique: {labels}")
        if self.sweep == "N":
            TL = self.trial.T * self.trial.L
            for n in self.values:
                if int(n) != n or int(n) % TL:
                    raise ValueError(f"N={n} is not a multiple of T*L={TL}")
        for a in self.algorithms:
            if a.L is not None and self.trial.L % a.L:
                raise ValueError(f"{a.label}: L={a.L} does not divide the generator L={self.trial.L}")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentSpec":
        doc = dict(doc)
        if "schema_version" not in doc:
            raise ValueError("config lacks schema_version")
        known = {f.name for f in fields(TrialConfig)}
        tdoc = dict(doc.pop("trial", {}))
        unknown = set(tdoc) - known
        if unknown:
            raise ValueError(f"unknown trial fields: {sorted(unknown)}")
        if "delta" in tdoc and isinstance(tdoc["delta"], (list, tuple)):
            tdoc["delta"] = complex(*tdoc["delta"])
        algs = tuple(AlgorithmSpec(**a) for a in doc.pop("algorithms"))
        allowed = {f.name for f in fields(cls)}
        unknown = set(doc) - allowed
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        doc["values"] = tuple(doc["values"])
        return cls(trial=TrialConfig(**tdoc), algorithms=algs, **doc)

    def to_dict(self) -> dict:
        t = asdict(self.trial)
        t["delta"] = [complex(t["delta"]).real, complex(t["delta"]).imag]
        return {
            "schema_version": self.schema_version,
            "sweep": self.sweep,
            "values": list(self.values),
            "trials": self.trials,
            "seed": self.seed,
            "max_iter": self.max_iter,
            "tol": self.tol,
            "trim_fraction": self.trim_fraction,
            "trial": t,
            "algorithms": [asdict(a) for a in self.algorithms],
        }

    def replace(self, **kw) -> "ExperimentSpec":
        return ExperimentSpec(**{**{f.name: getattr(self, f.name) for f in fields(self)}, **kw})

    def trial_config(self, value_index: int, trial: int) -> TrialConfig:
        value = self.values[value_index]
        kw = asdict(self.trial)
        kw["seed"] = trial_seed(self.seed, trial)
        if self.sweep == "N":
            kw["Ns"] = int(value) // (self.trial.T * self.trial.L)
        else:
            kw["alpha"] = float(value)
        if self.sweep == "freqdomain" and kw["tridiag_c"] is None:
            kw["tridiag_c"] = 0.3
        return TrialConfig(**kw)

    @property
    def records_traces(self) -> bool:
        return self.sweep in ("trace", "freqdomain")


def load_spec(path) -> ExperimentSpec:
    with open(path, encoding="utf-8") as fh:
        return ExperimentSpec.from_dict(json.load(fh))


def trial_seed(seed: int, trial: int) -> int:
    """64-bit seed of trial ``trial``; shared by all sweep values (common random numbers)."""
    hi, lo = np.random.SeedSequence(seed, spawn_key=(trial,)).generate_state(2, dtype=np.uint32)
    return (int(hi) << 32) | int(lo)


@dataclass
class TrialResult:
    """Outcome of one algorithm on one trial, for every dataset ``k``."""

    value_index: int
    trial: int
    seed: int
    algorithm: str
    isr_init: np.ndarray
    isr_final: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    fallbacks: np.ndarray
    status: str = "ok"
    trace: np.ndarray | None = None  # (n_iter + 1, K) ISR in dB, row 0 = initialization
    crit: np.ndarray | None = None  # (n_iter, K)


def _solve(data, w0, alg: AlgorithmSpec, spec: ExperimentSpec):
    seg = data if alg.L is None else data.resegment(alg.L)
    cfg = SolverConfig(algorithm=alg.algorithm, model=get_model(alg.model, **alg.model_options),
                       tol=spec.tol, max_iter=spec.max_iter)
    if alg.mode == "joint":
        st = run(seg, cfg, w_ini=w0)
        n = np.full(data.K, st.n_iter)
        return st.w, st.w_history, st.crit_trace, n, np.full(data.K, st.converged), \
            np.full(data.K, st.fallbacks)
    # separate extraction: one independent run per dataset
    from .core import SegmentedDataset

    ws, hist, crits, n, conv, fb = [], [], [], [], [], []
    for k in range(data.K):
        st = run(SegmentedDataset(seg.x[k:k + 1]), cfg, w_ini=w0[k:k + 1])
        ws.append(st.w[0])
        hist.append([h[0] for h in st.w_history])
        crits.append(st.crit_trace[:, 0])
        n.append(st.n_iter)
        conv.append(st.converged)
        fb.append(st.fallbacks)
    # pad histories with their final value so they share one iteration axis
    m = max(len(h) for h in hist)
    hist_arr = [np.array([h[min(i, len(h) - 1)] for h in hist]) for i in range(m)]
    crit_arr = np.full((m - 1, data.K), np.nan)
    for k, c in enumerate(crits):
        crit_arr[:len(c), k] = c
    return np.array(ws), hist_arr, crit_arr, np.array(n), np.array(conv), np.array(fb)


def run_trial(spec: ExperimentSpec, value_index: int, trial: int) -> list[TrialResult]:
    """Generate one instance and run every algorithm on it.

    Failures of an algorithm are recorded in ``status`` with NaN results;
    they do not abort the trial.
    """
    cfg = spec.trial_config(value_index, trial)
    data, truth = generate_trial(cfg)
    w0 = perturb_init(truth.w_star, trial_rng(cfg.seed, 4))
    init = isr_all(w0, truth)
    K = cfg.K
    out = []
    for alg in spec.algorithms:
        try:
            w, hist, crit, n, conv, fb = _solve(data, w0, alg, spec)
            res = TrialResult(value_index, trial, cfg.seed, alg.label, init, isr_all(w, truth),
                              n, conv, fb)
            if spec.records_traces:
                res.trace = np.array([isr_all(h, truth) for h in hist])
                res.crit = np.asarray(crit).reshape(-1, K)
        except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            log.info("trial %d value %d %s failed: %s", trial, value_index, alg.label, exc)
            nan = np.full(K, np.nan)
            res = TrialResult(value_index, trial, cfg.seed, alg.label, init, nan,
                              np.zeros(K, int), np.zeros(K, bool), np.zeros(K, int),
                              status=f"error:{type(exc).__name__}")
        out.append(res)
    return out


def _run_task(args):
    spec_doc, vi, tr = args
    return run_trial(ExperimentSpec.from_dict(spec_doc), vi, tr)


def resolve_threads(threads: int | None = None) -> int:
    """Worker count: explicit argument, else ``$FASTDIVA_THREADS``, else 1."""
    if threads is None:
        env = os.environ.get(THREADS_ENV)
        threads = int(env) if env else 1
    if threads < 1:
        raise ValueError("thread count must be at least 1")
    return threads


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    return str(x)


def _finite_or_none(x):
    x = float(x)
    return x if math.isfinite(x) else None


def _aggregate(spec: ExperimentSpec, results: list[TrialResult]) -> dict:
    summary = {"schema_version": SCHEMA_VERSION, "sweep": spec.sweep,
               "values": list(spec.values), "trials": spec.trials, "algorithms": {}}
    for alg in spec.algorithms:
        per = {"trimmed_mean": [], "median": [], "init_trimmed_mean": [], "iterations_median": [],
               "converged_fraction": [], "errors": []}
        if spec.records_traces:
            per["trace"] = []
        for vi in range(len(spec.values)):
            rs = [r for r in results if r.algorithm == alg.label and r.value_index == vi]
            fin = np.concatenate([r.isr_final for r in rs])
            ok = [r for r in rs if r.status == "ok"]
            per["errors"].append(len(rs) - len(ok))
            per["init_trimmed_mean"].append(_finite_or_none(trimmed_mean(
                np.concatenate([r.isr_init for r in rs]), spec.trim_fraction)))
            if np.all(np.isnan(fin)):
                per["trimmed_mean"].append(None)
                per["median"].append(None)
            else:
                per["trimmed_mean"].append(_finite_or_none(trimmed_mean(fin, spec.trim_fraction)))
                per["median"].append(_finite_or_none(np.nanmedian(fin)))
            its = np.concatenate([r.iterations for r in ok]) if ok else np.array([np.nan])
            per["iterations_median"].append(_finite_or_none(np.median(its)))
            conv = np.concatenate([r.converged for r in rs])
            per["converged_fraction"].append(float(np.mean(conv)))
            if spec.records_traces:
                per["trace"].append(_trace_summary(spec, ok))
        summary["algorithms"][alg.label] = per
    return summary


def _padded_traces(ok: list[TrialResult]) -> np.ndarray:
    """(trials, iterations, K) ISR traces, each padded with its final value."""
    m = max(r.trace.shape[0] for r in ok)
    out = np.empty((len(ok), m, ok[0].trace.shape[1]))
    for i, r in enumerate(ok):
        n = r.trace.shape[0]
        out[i, :n] = r.trace
        out[i, n:] = r.trace[-1]
    return out


def _trace_summary(spec: ExperimentSpec, ok: list[TrialResult]) -> dict | None:
    if not ok:
        return None
    tr = _padded_traces(ok)
    doc = {
        "iteration": list(range(tr.shape[1])),
        "median": np.median(tr.mean(axis=2), axis=0).tolist(),
        "trimmed_mean": [_finite_or_none(trimmed_mean(tr[:, i].ravel(), spec.trim_fraction))
                         for i in range(tr.shape[1])],
    }
    if spec.sweep == "freqdomain":
        # median over trials per frequency, then the spread over frequencies
        per_k = np.median(tr, axis=0)
        doc["freq_mean"] = per_k.mean(axis=1).tolist()
        doc["freq_min"] = per_k.min(axis=1).tolist()
        doc["freq_max"] = per_k.max(axis=1).tolist()
    return doc


def run_experiment(spec: ExperimentSpec, out_dir, threads: int | None = None) -> dict:
    """Run all trials of ``spec`` and write the result files into ``out_dir``.

    Returns the summary document (also written to ``summary.json``).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    threads = resolve_threads(threads)
    tasks = [(vi, tr) for vi in range(len(spec.values)) for tr in range(spec.trials)]
    if threads == 1:
        batches = [run_trial(spec, vi, tr) for vi, tr in tasks]
    else:
        doc = spec.to_dict()
        with ProcessPoolExecutor(max_workers=threads) as pool:
            batches = list(pool.map(_run_task, [(doc, vi, tr) for vi, tr in tasks],
                                    chunksize=max(1, len(tasks) // (4 * threads))))
    order = {a.label: i for i, a in enumerate(spec.algorithms)}
    results = sorted((r for b in batches for r in b),
                     key=lambda r: (r.value_index, r.trial, order[r.algorithm]))

    with open(out / "trials.csv", "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(TRIAL_COLUMNS)
        for r in results:
            for k in range(r.isr_init.size):
                wr.writerow([_fmt(v) for v in (
                    spec.sweep, float(spec.values[r.value_index]), r.trial, r.seed, r.algorithm, k,
                    r.isr_init[k], r.isr_final[k], r.iterations[k], bool(r.converged[k]),
                    r.fallbacks[k], r.status)])
    if spec.records_traces:
        with open(out / "traces.csv", "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow(TRACE_COLUMNS)
            for r in results:
                if r.trace is None:
                    continue
                for i in range(r.trace.shape[0]):
                    for k in range(r.trace.shape[1]):
                        c = r.crit[i - 1, k] if i > 0 else float("nan")
                        wr.writerow([_fmt(v) for v in (
                            float(spec.values[r.value_index]), r.trial, r.algorithm, k, i,
                            r.trace[i, k], c)])
    summary = _aggregate(spec, results)
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out / "config.json", "w", encoding="utf-8") as fh:
        json.dump(spec.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary
