"""Blind extraction of one source per dataset under the CSV mixing model.

The separating vector of each dataset is constant over blocks while the
mixing vector may change from block to block. Two Newton-type algorithms,
FastDIVA and QuickIVE, estimate the separating vectors with pluggable
source models: a non-Gaussian radial score (``"rati"``), Gaussian scores
exploiting nonstationarity and non-circularity (``"gauss"``,
``"gauss-circ"``), and a Gaussian model with tridiagonal coupling between
neighbouring datasets (``"gausstri"``).

Typical use::

    from fastdiva import TrialConfig, generate_trial, isr_all, perturb_init, run, trial_rng

    data, truth = generate_trial(TrialConfig(alpha=2.0, delta=0.5, seed=1))
    w0 = perturb_init(truth.w_star, trial_rng(1, 4))
    state = run(data, w_ini=w0, algorithm="fastdiva", model="gauss")
    isr_all(state.w, truth)
"""
from .core import BlockStats, SegmentedDataset, block_stats, sample_cov, sample_pcov, segment
from .metrics import ISR_FLOOR_DB, isr, isr_all, trimmed_mean
from .mixing import (
    CSVParams,
    InconsistentParametersError,
    SingularParameterizationError,
    build_demixing,
    build_mixing,
    mix,
    random_csv_params,
)
from .models import GaussModel, RatiModel, SourceModel, get_model
from .simulation import GroundTruth, TrialConfig, generate_trial, perturb_init, trial_rng
from .solver import ExtractionState, SolverConfig, run
from .tridiag import TridiagCov, TridiagGaussModel

__version__ = "0.1.0"

__all__ = [
    "BlockStats",
    "CSVParams",
    "ExtractionState",
    "GaussModel",
    "GroundTruth",
    "ISR_FLOOR_DB",
    "InconsistentParametersError",
    "RatiModel",
    "SegmentedDataset",
    "SingularParameterizationError",
    "SolverConfig",
    "SourceModel",
    "TridiagCov",
    "TridiagGaussModel",
    "TrialConfig",
    "block_stats",
    "build_demixing",
    "build_mixing",
    "generate_trial",
    "get_model",
    "isr",
    "isr_all",
    "mix",
    "perturb_init",
    "random_csv_params",
    "run",
    "sample_cov",
    "sample_pcov",
    "segment",
    "trial_rng",
    "trimmed_mean",
]
