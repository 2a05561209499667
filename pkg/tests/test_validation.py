"""Tests for Monte-Carlo plan validation"""

import numpy as np
import pytest

from ehdn.core.dispatch import build_template
from ehdn.core.runner import validate, value_of_lifting
from ehdn.core.validation import (
    FailureSampler,
    estimate_welsc,
    sample_failures,
    sample_intensity,
    simulate_failures,
    ssa_failure_counts,
    var_ssa,
    vola,
)
from ehdn.models.config import RunConfig
from ehdn.models.results import HardeningPlan


def test_sample_failures_first_failure():
    """Test each component fails at most once and stays failed"""
    probs = np.full((50, 4), 0.3)
    a = sample_failures(probs, seed=3).a

    assert (a.sum(axis=1) <= 1).all()
    assert set(np.unique(a)) <= {0.0, 1.0}
    np.testing.assert_array_equal(a, sample_failures(probs, seed=3).a)  # same seed, same draw


def test_sample_failures_extremes():
    """Test certain and impossible failures"""
    assert sample_failures(np.zeros((3, 2))).failures == 0
    a = sample_failures(np.ones((3, 2))).a
    assert a[:, 0].tolist() == [1.0, 1.0, 1.0]  # all fail in the first period
    assert a[:, 1].tolist() == [0.0, 0.0, 0.0]


def test_var_ssa():
    """Test the inverted-CDF quantile of SSA failure counts"""
    counts = np.array([0, 0, 0, 0, 0, 0, 0, 0, 1, 2])

    assert var_ssa(counts, 0.8) == 0
    assert var_ssa(counts, 0.85) == 1
    assert var_ssa(counts, 0.95) == 2
    assert var_ssa(np.array([]), 0.95) == 0
    with pytest.raises(ValueError):
        var_ssa(counts, 1.0)


def test_vola():
    """Test the relative value of the lifted set"""
    assert vola(120.0, 100.0) == pytest.approx(0.2)
    assert vola(100.0, 100.0) == 0.0
    assert vola(5.0, 0.0) is None


def test_sample_intensity_support(toy_model):
    """Test sampled paths stay inside the zone supports"""
    amb = toy_model.intensity
    paths = sample_intensity(amb, 200, seed=1)

    assert paths.shape == (200, amb.d_bar.size)
    assert ((paths >= amb.lower - 1e-9) & (paths <= amb.upper + 1e-9)).all()
    np.testing.assert_array_equal(paths, sample_intensity(amb, 200, seed=1))
    with pytest.raises(ValueError):
        sample_intensity(amb, 0)


def test_failure_sampler_hardening(toy3, toy_index, toy_model):
    """Test hardened probabilities never exceed unhardened ones"""
    sampler = FailureSampler(toy3, toy_index)
    path = toy_model.intensity.d_bar

    soft = sampler.probabilities(path, np.zeros(4))
    hard = sampler.probabilities(path, np.ones(4))
    assert soft.shape == (4, 2)
    assert (hard <= soft + 1e-12).all()


def test_linearized_sampler_at_forecast(toy3, toy_index, toy_model):
    """Test the linearized curves reproduce the mean map at the forecast mean"""
    sampler = FailureSampler(toy3, toy_index, toy_model.curves)
    x = np.array([1.0, 0.0, 1.0, 0.0])

    np.testing.assert_allclose(sampler.probabilities(toy_model.intensity.d_bar, x).ravel(),
                               toy_model.mean(x), atol=1e-9)


def test_simulate_and_count(toy3, toy_index, toy_model):
    """Test per-sample seeding and SSA failure counts"""
    sampler = FailureSampler(toy3, toy_index)
    paths = sample_intensity(toy_model.intensity, 20, seed=0)
    failures = simulate_failures(sampler, paths, np.zeros(4), seed=7)

    assert failures.shape == (20, 4, 2)
    np.testing.assert_array_equal(failures, simulate_failures(sampler, paths, np.zeros(4), 7))
    counts = ssa_failure_counts(failures, toy_index)
    np.testing.assert_array_equal(counts, failures[:, 3, :].sum(axis=1))  # P2 only


def test_estimate_welsc_threads(toy3):
    """Test the thread pool gives the same estimate as a serial run"""
    template = build_template(toy3)
    failures = np.zeros((4, 4, 2))
    failures[1, 0, 0] = 1.0  # L1 at t=0
    failures[3, 0, 0] = 1.0

    serial = estimate_welsc(toy3, template, np.array([40.0]), failures, threads=1)
    pooled = estimate_welsc(toy3, template, np.array([40.0]), failures, threads=2)
    assert serial[0] == pytest.approx(70500.0)  # half the samples cost 141000
    assert pooled[0] == pytest.approx(serial[0])
    assert pooled[2].tolist() == pytest.approx(serial[2].tolist())
    assert serial[1] > 0


def test_validate_plan_report(toy3):
    """Test the validation report of the unhardened plan is reproducible"""
    config = RunConfig(samples=30, seed=5, n_l=1)
    plan = HardeningPlan(instance="toy3", level=1, storage={"S1": 40.0}, welsc=0.0)
    report = validate(toy3, 1, config, plan)

    assert report.samples == 30
    assert report.mean_cost >= 0.0
    assert report.var_ssa in (0, 1, 2)
    assert report.vola is None
    assert validate(toy3, 1, config, plan).mean_cost == report.mean_cost


def test_sample_intensity_variance(toy_model):
    """Test wind draws keep the forecast variance of 4"""
    amb = toy_model.intensity
    paths = sample_intensity(amb, 10_000, seed=0)
    wind = paths[:, : amb.d_bar.size // 2]  # wind entries come first

    assert ((wind.var(axis=0) >= 3.4) & (wind.var(axis=0) <= 4.6)).all()


def test_sample_failures_frequency(toy3, toy_index, toy_model):
    """Test first-failure frequencies match the curve hazards"""
    p = FailureSampler(toy3, toy_index).probabilities(toy_model.intensity.d_bar, np.zeros(4))
    repeats = 25_000
    a = sample_failures(np.tile(p, (repeats, 1)), seed=11).a
    freq = a.reshape(repeats, *p.shape).mean(axis=0)

    expected = np.column_stack([p[:, 0], (1.0 - p[:, 0]) * p[:, 1]])
    np.testing.assert_allclose(freq, expected, atol=0.01)


@pytest.mark.parametrize("level", [1, 2, 3, 4])
def test_value_of_lifting_nonnegative(toy3, level):
    """Test the lifted plan is never worse than the first-moment plan under the lifted set"""
    config = RunConfig(n_l=1, hlcc=False)
    value = value_of_lifting(toy3, level, config)

    assert value is None or value >= -2 * config.tol  # within the CCG gaps
