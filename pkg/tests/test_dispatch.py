"""Tests for the post-disaster dispatch LP"""

import numpy as np
import pytest

from ehdn.core.dispatch import (
    DispatchModelError,
    DispatchOptions,
    ScenarioRealization,
    build_dispatch,
    build_template,
    dispatch_cost,
    failure_to_states,
    solve_dispatch,
    solve_dual,
)

STOCK = np.array([40.0])


def _failed(component: int, period: int = 0) -> np.ndarray:
    a = np.zeros((4, 2))
    a[component, period] = 1.0
    return a


def test_failure_to_states():
    """Test destroyed components stay destroyed"""
    assert failure_to_states(np.array([[0.0, 1.0, 0.0]])).tolist() == [[1.0, 0.0, 0.0]]
    assert failure_to_states(np.zeros((2, 3))).tolist() == [[1.0] * 3] * 2
    assert failure_to_states(np.array([[1.0, 0.0]])).tolist() == [[0.0, 0.0]]
    assert failure_to_states(np.array([[0.0, 0.0]]), u0=np.zeros(1)).tolist() == [[0.0, 0.0]]


def test_scenario_realization(toy_index):
    """Test entry layout and labels of a failure matrix"""
    scenario = ScenarioRealization.from_entries(_failed(0).ravel(), 2)

    assert scenario.failures == 1
    assert scenario.labels(toy_index) == ["L1@0"]
    assert scenario.key() != ScenarioRealization.healthy(4, 2).key()


def test_healthy_dispatch_costs_nothing(toy3):
    """Test the intact network serves every load"""
    template = build_template(toy3)
    sol = solve_dispatch(build_dispatch(toy3, STOCK, np.ones(8), template))

    assert sol.objective == pytest.approx(0.0, abs=1e-6)
    assert sol.balance_residual() <= 1e-6


def test_root_line_failure(toy3):
    """Test losing L1 islands B2 and B3; the fuel cell carries part of critical B3"""
    template = build_template(toy3)
    u = failure_to_states(_failed(0))
    sol = solve_dispatch(build_dispatch(toy3, STOCK, u, template))

    # 2 periods x (200 kW at 15 + 90 kW at 15 * 50)
    assert sol.objective == pytest.approx(141000.0, rel=1e-6)
    assert sol["p_shed"][:, 0] == pytest.approx([200.0, 90.0], abs=1e-5)
    assert sol["f_h2p"][0, 0] == pytest.approx(40.0, abs=1e-5)
    assert sol.shed_cost() == pytest.approx((141000.0, 0.0), abs=1e-4)


def test_failure_in_late_period(toy3):
    """Test a failure only counts from its period on"""
    template = build_template(toy3)

    assert dispatch_cost(toy3, template, _failed(0, 1), STOCK) == pytest.approx(70500.0)
    assert dispatch_cost(toy3, template, _failed(1), STOCK) == pytest.approx(135000.0)


def test_conversion_disabled(toy3):
    """Test without the fuel cell all of B3 is shed"""
    template = build_template(toy3, options=DispatchOptions(conversion=False))

    # 2 periods x (200 kW at 15 + 150 kW at 750)
    assert dispatch_cost(toy3, template, _failed(0), STOCK) == pytest.approx(231000.0)


def test_pipeline_failure_served_by_storage(toy3):
    """Test storage covers a cut feed up to discharge losses"""
    template = build_template(toy3, options=DispatchOptions(conversion=False))
    # 40 m3 stored, 38 m3 delivered after 0.95 discharge efficiency, 40 m3 demanded
    assert dispatch_cost(toy3, template, _failed(2), STOCK) == pytest.approx(200.0)

    no_storage = build_template(toy3, options=DispatchOptions(storage=False, conversion=False))
    assert dispatch_cost(toy3, no_storage, _failed(2), np.zeros(1)) == pytest.approx(4000.0)

    # the electrolyzer at B3 refills G2 from the grid
    assert dispatch_cost(toy3, build_template(toy3), _failed(2), STOCK) == pytest.approx(
        0.0, abs=1e-6)


def test_strong_duality(toy3):
    """Test the dual optimum equals the primal cost"""
    template = build_template(toy3)
    for a in (np.zeros((4, 2)), _failed(0), _failed(1, 1)):
        problem = build_dispatch(toy3, STOCK, failure_to_states(a), template)
        assert solve_dual(problem) == pytest.approx(solve_dispatch(problem).objective,
                                                    rel=1e-6, abs=1e-4)


def test_strong_duality_random(toy3):
    """Test strong duality on random failure patterns and storage allocations"""
    template = build_template(toy3)
    rng = np.random.default_rng(7)
    for _ in range(20):
        a = (rng.random((4, 2)) < 0.3).astype(float)
        x_e = rng.uniform(0.0, template.storage_max)
        problem = build_dispatch(toy3, x_e, failure_to_states(a), template)
        primal = solve_dispatch(problem).objective
        assert solve_dual(problem) == pytest.approx(primal, rel=1e-5, abs=1e-4)


def test_cost_grows_with_failures(toy3):
    """Test an extra failure never lowers the shedding cost"""
    template = build_template(toy3)
    rng = np.random.default_rng(3)
    for _ in range(100):
        a = (rng.random((4, 2)) < 0.2).astype(float)
        worse = a.copy()
        worse[rng.integers(4), rng.integers(2)] = 1.0
        base = dispatch_cost(toy3, template, a, STOCK)
        assert dispatch_cost(toy3, template, worse, STOCK) >= base - 1e-6 * max(1.0, base)


def test_scenario_from_labels(toy_index):
    """Test scenario labels read back into the failure matrix"""
    a = _failed(3, 1) + _failed(0)
    scenario = ScenarioRealization(a)

    assert ScenarioRealization.from_labels(scenario.labels(toy_index), toy_index).key() == (
        scenario.key())
    assert ScenarioRealization.from_labels([], toy_index).failures == 0


def test_bad_dispatch_inputs(toy3):
    """Test storage and dimension checks"""
    template = build_template(toy3)

    with pytest.raises(DispatchModelError):
        build_dispatch(toy3, np.array([100.0]), np.ones(8), template)  # above 80 m3
    with pytest.raises(DispatchModelError):
        build_dispatch(toy3, STOCK, np.ones(6), template)
    with pytest.raises(DispatchModelError):
        build_dispatch(toy3, np.array([10.0, 10.0]), np.ones(8), template)


def test_dispatch_frame(toy3):
    """Test the long-form solution table"""
    template = build_template(toy3)
    frame = solve_dispatch(build_dispatch(toy3, STOCK, np.ones(8), template)).to_frame()

    assert list(frame.columns) == ["variable", "element", "period", "value"]
    assert len(frame) == template.n_vars
    assert set(frame["variable"]) >= {"p_line", "g_shed", "storage"}


def test_dispatch_deterministic(toy3):
    """Test repeated solves agree"""
    template = build_template(toy3)
    u = failure_to_states(_failed(1))
    first = solve_dispatch(build_dispatch(toy3, STOCK, u, template)).objective

    assert solve_dispatch(build_dispatch(toy3, STOCK, u, template)).objective == first
