"""Desk-scale sweeps on the ieee33-like instance"""

import pytest

from ehdn.core.instance import parse_instance
from ehdn.core.runner import harden, minimum_budget, validate
from ehdn.models.config import RunConfig

LEVELS = (1, 2, 3, 4)


@pytest.fixture(scope="module")
def ieee33():
    return parse_instance("ieee33-like")


def _ssa_hardened(net, plan) -> int:
    return sum(p.in_ssa and p.id in plan.hardened_pipelines for p in net.pipelines)


@pytest.mark.slow
def test_min_budget_grows_with_level(ieee33):
    """Test stronger disasters never need a smaller SSA budget"""
    results = [minimum_budget(ieee33, level, RunConfig()) for level in LEVELS]
    feasible = [r.feasible for r in results]

    assert results[0].feasible
    assert results[0].budget == 0.0  # the mildest level needs no SSA hardening
    assert feasible == sorted(feasible, reverse=True)  # once unreachable, always unreachable
    budgets = [r.budget for r in results if r.feasible]
    assert budgets == sorted(budgets)


@pytest.mark.slow
def test_harden_level_one(ieee33):
    """Test a full CCG run stays within budget with ordered bounds"""
    plan, trace = harden(ieee33, 1, RunConfig(n_l=2, tol=1e-3))

    assert trace.converged
    assert plan.hardening_cost <= ieee33.costs.budget + 1e-6
    assert trace.iterations[-1].lower_bound <= plan.welsc + 1e-3 * max(1.0, plan.welsc)


@pytest.mark.slow
def test_welsc_grows_with_level(ieee33):
    """Test stronger disasters never lower the worst expected shedding cost"""
    config = RunConfig(n_l=2, hlcc=False)
    welsc = [harden(ieee33, level, config)[0].welsc for level in LEVELS]

    assert all(b >= a * (1 - 2 * config.tol) for a, b in zip(welsc, welsc[1:]))


@pytest.mark.slow
@pytest.mark.parametrize("level", [2, 3, 4])
def test_hlcc_bounds_ssa_failures(ieee33, level):
    """Test the leakage chance constraint keeps the SSA failure quantile within K_CC"""
    config = RunConfig(n_l=2, samples=10_000, threads=4, seed=1)
    plan, _ = harden(ieee33, level, config)
    report = validate(ieee33, level, config, plan)

    assert report.var_ssa <= config.k_cc
    if level >= 3:
        without, _ = harden(ieee33, level, config.model_copy(update={"hlcc": False}))
        assert validate(ieee33, level, config, without).var_ssa >= 2
        assert _ssa_hardened(ieee33, plan) >= _ssa_hardened(ieee33, without)


@pytest.mark.slow
def test_sampled_cost_within_worst_case(ieee33):
    """Test the Monte-Carlo mean shedding cost does not exceed the worst-case expectation"""
    config = RunConfig(samples=2000, threads=4, seed=2)
    plan, _ = harden(ieee33, 2, config)
    report = validate(ieee33, 2, config, plan)

    assert report.mean_cost <= plan.welsc + report.half_width
