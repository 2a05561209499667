"""Tests for result files and the cross-level report"""

import pytest

from ehdn.core.report import (
    ReportError,
    build_report,
    level_dir,
    load_plan,
    save_min_budget,
    save_plan,
    write_dispatch,
    write_hardening,
    write_trace,
)
from ehdn.core.runner import scenario_dispatch
from ehdn.models.config import RunConfig
from ehdn.models.results import CCGIteration, CCGTrace, HardeningPlan, MinBudgetResult


def _plan(level: int) -> HardeningPlan:
    return HardeningPlan(instance="toy3", level=level, hardened_lines=["L1"],
                         hardened_pipelines=["P2"], storage={"S1": 40.0},
                         hardening_cost=42500.0, welsc=1000.0 * level, converged=True)


def _trace() -> CCGTrace:
    return CCGTrace(iterations=[
        CCGIteration(iteration=1, lower_bound=0.0, upper_bound=2000.0, gap=1.0,
                     scenario=["L1@0"]),
        CCGIteration(iteration=2, lower_bound=1000.0, upper_bound=1000.0, gap=0.0),
    ], converged=True)


def test_plan_round_trip(tmp_path):
    """Test plans load from a file or its directory"""
    plan = _plan(1)
    path = save_plan(tmp_path, plan)

    assert load_plan(path) == plan
    assert load_plan(tmp_path).hardened == {"L1", "P2"}
    with pytest.raises(ReportError):
        load_plan(tmp_path / "elsewhere")


def test_build_report(tmp_path, toy3):
    """Test per-level tables collected from a level sweep"""
    for level in (1, 2):
        out = level_dir(tmp_path, level)
        plan = _plan(level)
        save_plan(out, plan)
        write_trace(out, _trace())
        write_hardening(out, toy3, plan)
        write_dispatch(out, scenario_dispatch(toy3, RunConfig(), plan, ["L1@0"]), ["L1@0"])
        save_min_budget(out, MinBudgetResult(instance="toy3", level=level, feasible=True,
                                             budget=22500.0 * (level - 1)))
    tables = build_report(tmp_path)

    welsc = tables["welsc_by_level"]
    assert welsc["level"].tolist() == [1, 2]
    assert welsc["welsc"].tolist() == [1000.0, 2000.0]
    assert welsc["hardened_ssa"].tolist() == [1, 1]  # P2
    assert list(tables["convergence"].columns) == ["level", "iteration", "lower_bound",
                                                   "upper_bound", "gap"]
    assert len(tables["convergence"]) == 4
    assert tables["min_budget_by_level"]["budget"].tolist() == [0.0, 22500.0]
    assert sorted(tables["hardening_edges"]["component"].unique()) == ["L1", "P2"]
    assert tables["var_by_level"].empty
    flows = tables["worst_case_dispatch"]
    assert set(flows["scenario"]) == {"L1@0"}
    shed = flows.loc[flows["variable"] == "p_shed"]
    assert shed.groupby("level")["value"].sum().tolist() == pytest.approx([580.0, 580.0], abs=1e-4)
    assert (tmp_path / "welsc_by_level.csv").exists()


def test_build_report_single_run(tmp_path):
    """Test a single-level output directory without level subdirectories"""
    save_plan(tmp_path, _plan(3))
    tables = build_report(tmp_path)

    assert tables["welsc_by_level"]["level"].tolist() == [3]


def test_build_report_errors(tmp_path):
    """Test missing and empty result directories"""
    with pytest.raises(ReportError, match="not found"):
        build_report(tmp_path / "missing")
    with pytest.raises(ReportError, match="no run results"):
        build_report(tmp_path)
