import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fastdiva.metrics import ISR_FLOOR_DB, isr, isr_all, trimmed_mean
from fastdiva.mixing import CSVParams
from fastdiva.simulation import GroundTruth, TrialConfig, generate_trial


def test_isr_perfect_and_blind():
    _, truth = generate_trial(TrialConfig(T=2, L=2, Ns=10, d=4, seed=1))
    assert isr(truth.w_star, truth, 0) == ISR_FLOOR_DB
    # a = e1 and w = e2: zero SOI gain, unit background leakage
    p = CSVParams(beta=[1.0], h=[[0.0]], gamma=[[1.0]], g=[[[0.0]]])
    blind = GroundTruth(params=p, w_star=p.w, variance_profile=np.ones((1, 1)),
                        soi_variance=np.ones((1, 1, 1)), background_variance=np.ones(1),
                        sources=np.zeros((1, 1, 1, 2, 1)))
    assert isr(np.array([[0.0, 1.0]]), blind, 0) == math.inf
    assert isr(np.array([[1.0, 1.0]]), blind, 0) == pytest.approx(0.0)


def test_isr_matches_signal_domain_oracle():
    """Demix the retained sources sample by sample and compare powers directly."""
    cfg = TrialConfig(K=2, T=3, L=4, Ns=20_000, d=5, alpha=1.0, delta=0.5, seed=2)
    data, truth = generate_trial(cfg)
    rng = np.random.default_rng(0)
    for _ in range(3):
        w = truth.w_star + 0.3 * (rng.standard_normal((2, 5)) + 1j * rng.standard_normal((2, 5)))
        A = truth.A
        g = np.einsum("ktij,ki->ktj", A.conj(), w)
        u = truth.sources
        soi_part = np.conj(g[:, :, None, 0, None]) * u[:, :, :, 0]
        interf = np.einsum("kti,ktlin->ktln", g[..., 1:].conj(), u[:, :, :, 1:])
        # powers per block, averaged linearly over blocks
        p_soi = np.mean(np.abs(soi_part) ** 2, axis=(2, 3)).mean(axis=1)
        p_int = np.mean(np.abs(interf) ** 2, axis=(2, 3)).mean(axis=1)
        oracle = 10 * np.log10(p_int / p_soi)
        np.testing.assert_allclose(isr_all(w, truth), oracle, atol=0.5)
        # the extracted signal itself is the sum of both parts
        y = np.einsum("kd,ktldn->ktln", w.conj(), data.x)
        np.testing.assert_allclose(y, soi_part + interf, atol=1e-10)


def test_trimmed_mean_examples():
    assert trimmed_mean([0.0] * 99 + [math.inf]) == 0.0
    vals = np.random.default_rng(1).standard_normal(37)
    assert trimmed_mean(vals, 0.0) == pytest.approx(np.mean(vals))
    assert trimmed_mean([1, 2, 3, 4, 100]) == pytest.approx(3.0)
    assert trimmed_mean([5.0]) == 5.0
    assert trimmed_mean([1.0, np.nan, 3.0], 0.0) == 2.0
    with pytest.raises(ValueError):
        trimmed_mean([])
    with pytest.raises(ValueError):
        trimmed_mean([np.nan])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-200, 200), min_size=1, max_size=300), st.randoms(use_true_random=False))
def test_trimmed_mean_permutation_invariant(values, rnd):
    shuffled = list(values)
    rnd.shuffle(shuffled)
    assert trimmed_mean(shuffled) == pytest.approx(trimmed_mean(values), abs=1e-9)
    assert min(values) <= trimmed_mean(values) <= max(values)
