"""Tests for the hydrogen leakage chance constraint"""

import itertools
import math

import numpy as np
import pytest

from ehdn.core.ambiguity import outcome_variance_map
from ehdn.core.components import ComponentIndex
from ehdn.core.fragility import EntryAffineMap, SecondMomentMap
from ehdn.core.hlcc import (
    HlccError,
    HlccInfeasibleError,
    HlccSpec,
    cantelli_inf,
    hlcc_coefficient,
    min_budget,
    reformulate_hlcc,
    ssa_specs,
    worst_case_prob,
)
from ehdn.core.runner import minimum_budget
from ehdn.models.config import RunConfig


def _oracle(mean: float, q: float, gamma1: float, gamma2: float, k_cc: float) -> float:
    """Grid search of the Cantelli bound over admissible mean shifts"""
    shifts = np.linspace(0.0, math.sqrt(gamma1 * q), 20001)
    return min(cantelli_inf(mean + m, math.sqrt(max(gamma2 * q - m * m, 0.0)), k_cc)
               for m in shifts)


def _two_component_maps():
    comp = np.array([0, 0, 1])
    mean = EntryAffineMap(np.array([0.1, 0.2, 0.05]), np.array([0.02, 0.05, 0.01]), comp)
    q = np.array([[4.0, 1.0, 0.5], [1.0, 9.0, 2.0], [0.5, 2.0, 1.0]])
    second = SecondMomentMap(np.array([0.01, 0.02, 0.03]), np.array([0.004, 0.01, 0.01]),
                             comp, q)
    return mean, second


def _single_maps():
    mean = EntryAffineMap(np.array([0.5]), np.array([0.01]), np.array([0]))
    second = SecondMomentMap(np.array([0.1]), np.array([0.01]), np.array([0]),
                             np.array([[1.0]]))
    return mean, second


def test_cantelli_inf():
    """Test the one-sided Chebyshev bound"""
    assert cantelli_inf(0.0, 1.0, 1.0) == pytest.approx(0.5)
    assert cantelli_inf(0.2, 0.6, 1.0) == pytest.approx(0.64)
    assert cantelli_inf(2.0, 0.1, 1.0) == 0.0  # threshold below the mean
    assert cantelli_inf(1.0, 0.0, 1.0) == 1.0
    with pytest.raises(ValueError):
        cantelli_inf(0.0, -1.0, 1.0)


@pytest.mark.parametrize("mean,q,gamma1,gamma2", [
    (0.2, 0.05, 0.1, 1.5),   # optimum at the largest mean shift
    (0.2, 0.05, 1.0, 1.5),   # interior optimum
    (0.0, 0.3, 0.01, 1.0),
    (0.5, 0.01, 0.5, 0.5),
])
def test_worst_case_prob_matches_grid_search(mean, q, gamma1, gamma2):
    """Test the closed form against a brute-force search"""
    assert worst_case_prob(mean, q, gamma1, gamma2, 1.0) == pytest.approx(
        _oracle(mean, q, gamma1, gamma2, 1.0), abs=1e-3)


def test_worst_case_prob_edge_cases():
    """Test deterministic and infeasible inputs"""
    assert worst_case_prob(0.3, 0.05, 0.0, 0.0, 1.0) == 1.0
    assert worst_case_prob(0.9, 1.0, 1.0, 1.0, 1.0) == 0.0  # shift reaches the threshold
    with pytest.raises(HlccInfeasibleError):
        worst_case_prob(1.5, 0.1, 0.1, 1.5, 1.0)


def test_hlcc_coefficient_branches():
    """Test the cone multiplier in both branches and at the boundary"""
    kappa, branch = hlcc_coefficient(0.01, 1.0, 0.05)
    assert kappa == pytest.approx(4.4367, abs=1e-3)
    assert branch == "mean"

    kappa, branch = hlcc_coefficient(0.04, 0.16, 0.05)
    assert kappa == pytest.approx(1.78885, abs=1e-5)
    assert branch == "variance"

    kappa, _ = hlcc_coefficient(0.1, 2.0, 0.05)  # gamma1 = eps * gamma2
    assert kappa == pytest.approx(math.sqrt(2.0 / 0.05))

    with pytest.raises(HlccError):
        hlcc_coefficient(0.1, 1.0, 1.0)


@pytest.mark.parametrize("gamma1,gamma2", [(0.01, 1.0), (0.04, 0.16), (0.1, 1.5)])
def test_cone_agrees_with_worst_case_prob(gamma1, gamma2):
    """Test the cone holds exactly when the worst-case probability reaches 1 - eps"""
    eps, mean, q = 0.05, 0.2, 0.01
    kappa, _ = hlcc_coefficient(gamma1, gamma2, eps)
    boundary = mean + kappa * math.sqrt(q)

    assert worst_case_prob(mean, q, gamma1, gamma2, boundary * (1 + 1e-6)) >= 1 - eps
    assert worst_case_prob(mean, q, gamma1, gamma2, boundary * (1 - 1e-6)) < 1 - eps


def test_cone_agrees_with_worst_case_prob_random():
    """Test cone and worst-case probability agree on 1000 random settings"""
    rng = np.random.default_rng(2024)
    checked = 0
    for _ in range(1000):
        gamma2 = rng.uniform(0.05, 5.0)
        gamma1 = rng.uniform(0.0, gamma2)
        eps = rng.uniform(0.01, 0.5)
        q = rng.uniform(1e-4, 0.5)
        mean = rng.uniform(0.0, 1.0)
        kappa, _ = hlcc_coefficient(gamma1, gamma2, eps)
        margin = 1.0 - (mean + kappa * math.sqrt(q))
        if abs(margin) < 1e-9:
            continue
        assert (margin > 0) == (worst_case_prob(mean, q, gamma1, gamma2, 1.0) >= 1 - eps)
        checked += 1

    assert checked > 990


def test_hlcc_spec_validation():
    """Test selection vector, risk level and threshold checks"""
    with pytest.raises(HlccError):
        HlccSpec(np.zeros(3), 1.0, 0.05, 0.1, 1.5)
    with pytest.raises(HlccError):
        HlccSpec(np.array([1.0, -1.0]), 1.0, 0.05, 0.1, 1.5)
    with pytest.raises(HlccError):
        HlccSpec(np.ones(2), 1.0, 0.0, 0.1, 1.5)
    with pytest.raises(HlccError):
        HlccSpec(np.ones(2), -1.0, 0.05, 0.1, 1.5)
    with pytest.raises(HlccError):
        HlccSpec(np.ones(2), 1.0, 0.05, 2.0, 1.5)


def test_ssa_specs(toy_index):
    """Test one constraint per SSA group over all periods"""
    specs = ssa_specs(toy_index, 1.0, 0.05, 0.1, 1.5)

    assert [s.group for s in specs] == ["ssa"]
    assert specs[0].support.tolist() == [6, 7]  # P2 in both periods


def test_factorized_cone_matches_quadratic():
    """Test the affine cone rows reproduce s'(Q(x) + diag var(x))s"""
    mean, second = _two_component_maps()
    variance = outcome_variance_map(mean)
    spec = HlccSpec(np.ones(3), 1.0, 0.05, 0.1, 1.5)
    cone = reformulate_hlcc(spec, mean, second, variance)

    for bits in itertools.product([0.0, 1.0], repeat=2):
        x = np.array(bits)
        exact = np.ones(3) @ (second(x) + np.diag(variance(x))) @ np.ones(3)
        assert cone.second_moment(x) == pytest.approx(exact, rel=1e-9)
        assert cone.factor_norm(x) ** 2 == pytest.approx(exact, rel=1e-8)
        assert cone.mean(x) == pytest.approx(mean(x).sum())


def test_cone_status():
    """Test the post-hoc check against the closed-form probability"""
    mean, second = _single_maps()
    spec = HlccSpec(np.ones(1), 1.0, 0.05, 0.1, 1.5)
    cone = reformulate_hlcc(spec, mean, second, outcome_variance_map(mean))

    assert cone.kappa == pytest.approx(math.sqrt(30.0))  # variance branch, 0.1 / 1.5 > 0.05
    soft, hard = cone.status(np.zeros(1)), cone.status(np.ones(1))
    assert not soft.satisfied
    assert hard.satisfied
    assert hard.worst_case_prob >= 1 - 0.05
    assert soft.worst_case_prob < 1 - 0.05


def test_min_budget_single_pipeline(single_pipeline):
    """Test the cheapest hardening of a fragile SSA pipeline"""
    index = ComponentIndex(single_pipeline)
    mean, second = _single_maps()
    cone = reformulate_hlcc(HlccSpec(np.ones(1), 1.0, 0.05, 0.1, 1.5), mean, second,
                            outcome_variance_map(mean))
    result = min_budget([cone], index, "single")

    assert result.feasible
    assert result.budget == pytest.approx(37500.0)
    assert result.hardened_pipelines == ["P1"]


def test_min_budget_unreachable(single_pipeline):
    """Test a risk target missed even with every pipeline hardened"""
    index = ComponentIndex(single_pipeline)
    mean, second = _single_maps()
    cone = reformulate_hlcc(HlccSpec(np.ones(1), 0.1, 0.05, 0.1, 1.5), mean, second,
                            outcome_variance_map(mean))
    result = min_budget([cone], index, "single")

    assert not result.feasible
    assert "unreachable" in result.message
    assert result.worst_case_prob["ssa"] < 1 - 0.05


def test_min_budget_toy3_level1(toy3):
    """Test no SSA hardening is needed at the mildest level"""
    result = minimum_budget(toy3, 1, RunConfig())

    assert result.feasible
    assert result.budget == 0.0
    assert result.hardened_pipelines == []
