"""Result files - run manifests, plans, traces and the cross-level report tables"""

import platform
from datetime import datetime
from importlib import metadata
from pathlib import Path
from typing import Any, Optional

import pandas as pd
import yaml
from pydantic import BaseModel, ValidationError

from ehdn import __version__
from ehdn.core.dispatch import DispatchSolution
from ehdn.models.config import RunConfig
from ehdn.models.network import Network
from ehdn.models.results import CCGTrace, HardeningPlan, MinBudgetResult, ValidationReport

DEPENDENCIES = ("numpy", "scipy", "networkx", "pandas", "pydantic", "pyyaml", "typer", "rich")


class ReportError(Exception):
    """Raised when result files are missing or unreadable"""

    pass


def level_dir(out: Path, level: int) -> Path:
    return out / f"level_{level}"


def _dump(path: Path, data: Any) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        yaml.dump(data, f, default_flow_style=False, sort_keys=False)
    return path


def _load(path: Path, model: type[BaseModel]):
    if not path.exists():
        raise ReportError(f"missing result file {path}")
    try:
        with open(path, "r") as f:
            return model.model_validate(yaml.safe_load(f))
    except (yaml.YAMLError, ValidationError) as e:
        raise ReportError(f"invalid result file {path}: {e}")


def _versions() -> dict[str, str]:
    out = {"ehdn": __version__, "python": platform.python_version()}
    for name in DEPENDENCIES:
        try:
            out[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            out[name] = "missing"
    return out


def write_manifest(out: Path, config: RunConfig) -> Path:
    """Config, seed and versions needed to repeat the run"""
    return _dump(out / "manifest.yaml", {
        "created_at": datetime.now().isoformat(),
        "seed": config.seed,
        "versions": _versions(),
        "config": config.model_dump(mode="json"),
    })


def write_summary(out: Path, data: dict[str, Any]) -> Path:
    return _dump(out / "summary.yaml", data)


def save_plan(out: Path, plan: HardeningPlan) -> Path:
    return _dump(out / "plan.yaml", plan.model_dump(mode="json"))


def load_plan(path: Path) -> HardeningPlan:
    """Load a plan file, or the plan.yaml inside a result directory"""
    if path.is_dir():
        path = path / "plan.yaml"
    return _load(path, HardeningPlan)


def save_validation(out: Path, report: ValidationReport) -> Path:
    return _dump(out / "validation.yaml", report.model_dump(mode="json"))


def save_min_budget(out: Path, result: MinBudgetResult) -> Path:
    return _dump(out / "min_budget.yaml", result.model_dump(mode="json"))


def write_trace(out: Path, trace: CCGTrace) -> Path:
    rows = [
        {**it.model_dump(exclude={"scenario"}), "scenario": ";".join(it.scenario)}
        for it in trace.iterations
    ]
    path = out / "trace.csv"
    out.mkdir(parents=True, exist_ok=True)
    columns = ["iteration", "lower_bound", "upper_bound", "gap", "master_seconds",
               "sub_seconds", "scenario"]
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False)
    return path


def hardening_table(net: Network, plan: HardeningPlan) -> pd.DataFrame:
    """One row per hardenable component with its decision"""
    rows = []
    for line in net.grid_lines:
        rows.append({"component": line.id, "kind": "line", "zone": net.zone_of(line),
                     "from_node": line.from_node, "to_node": line.to_node,
                     "cost": net.line_cost(line), "ssa": False,
                     "hardened": line.id in plan.hardened_lines})
    for pipe in net.pipelines:
        rows.append({"component": pipe.id, "kind": "pipeline", "zone": net.zone_of(pipe),
                     "from_node": pipe.from_node, "to_node": pipe.to_node,
                     "cost": net.pipeline_cost(pipe), "ssa": pipe.in_ssa,
                     "hardened": pipe.id in plan.hardened_pipelines})
    return pd.DataFrame(rows)


def write_hardening(out: Path, net: Network, plan: HardeningPlan) -> Path:
    path = out / "hardening.csv"
    out.mkdir(parents=True, exist_ok=True)
    hardening_table(net, plan).to_csv(path, index=False)
    return path


def write_dispatch(out: Path, solution: DispatchSolution, scenario: list[str]) -> Path:
    """Per-period dispatch values under one failure scenario"""
    path = out / "dispatch.csv"
    out.mkdir(parents=True, exist_ok=True)
    frame = solution.to_frame()
    frame.insert(0, "scenario", ";".join(scenario))
    frame.to_csv(path, index=False)
    return path


def _level_dirs(results: Path) -> list[tuple[Optional[int], Path]]:
    found = []
    for sub in sorted(results.glob("level_*")):
        try:
            found.append((int(sub.name.split("_", 1)[1]), sub))
        except ValueError:
            continue
    if not found and any((results / f).exists() for f in ("plan.yaml", "min_budget.yaml",
                                                           "validation.yaml")):
        found.append((None, results))
    return sorted(found, key=lambda item: (item[0] is None, item[0] or 0))


def build_report(results: Path) -> dict[str, pd.DataFrame]:
    """Collect per-level results into plot-ready tables and write them as CSV

    Raises:
        ReportError: If the directory is missing or holds no run results
    """
    if not results.is_dir():
        raise ReportError(f"results directory not found: {results}")
    dirs = _level_dirs(results)
    if not dirs:
        raise ReportError(f"no run results under {results}")

    welsc, var, budget, edges, conv, dispatch = [], [], [], [], [], []
    for level, d in dirs:
        if (d / "plan.yaml").exists():
            plan = load_plan(d)
            lvl = plan.level if level is None else level
            hard = pd.read_csv(d / "hardening.csv") if (d / "hardening.csv").exists() else None
            ssa = int(hard.loc[hard["hardened"] & hard["ssa"]].shape[0]) if hard is not None else 0
            welsc.append({"level": lvl, "welsc": plan.welsc, "lower_bound": plan.lower_bound,
                          "gap": plan.gap, "converged": plan.converged,
                          "hardening_cost": plan.hardening_cost,
                          "hardened": len(plan.hardened), "hardened_ssa": ssa})
            if hard is not None:
                chosen = hard.loc[hard["hardened"]].copy()
                chosen.insert(0, "level", lvl)
                edges.append(chosen)
            if (d / "trace.csv").exists():
                trace = pd.read_csv(d / "trace.csv")[["iteration", "lower_bound",
                                                      "upper_bound", "gap"]]
                trace.insert(0, "level", lvl)
                conv.append(trace)
            if (d / "dispatch.csv").exists():
                flows = pd.read_csv(d / "dispatch.csv", keep_default_na=False)
                flows.insert(0, "level", lvl)
                dispatch.append(flows)
        if (d / "validation.yaml").exists():
            rep = _load(d / "validation.yaml", ValidationReport)
            var.append({"level": rep.level if level is None else level, "samples": rep.samples,
                        "mean_cost": rep.mean_cost, "half_width": rep.half_width,
                        "quantile": rep.quantile, "var_ssa": rep.var_ssa,
                        "mean_ssa_failures": rep.mean_ssa_failures, "vola": rep.vola})
        if (d / "min_budget.yaml").exists():
            res = _load(d / "min_budget.yaml", MinBudgetResult)
            budget.append({"level": res.level if level is None else level,
                           "feasible": res.feasible, "budget": res.budget,
                           "hardened_pipelines": ";".join(res.hardened_pipelines)})

    tables = {
        "welsc_by_level": pd.DataFrame(welsc, columns=[
            "level", "welsc", "lower_bound", "gap", "converged", "hardening_cost", "hardened",
            "hardened_ssa"]),
        "var_by_level": pd.DataFrame(var, columns=[
            "level", "samples", "mean_cost", "half_width", "quantile", "var_ssa",
            "mean_ssa_failures", "vola"]),
        "min_budget_by_level": pd.DataFrame(budget, columns=[
            "level", "feasible", "budget", "hardened_pipelines"]),
        "hardening_edges": pd.concat(edges, ignore_index=True) if edges else pd.DataFrame(
            columns=["level", "component", "kind", "zone", "from_node", "to_node", "cost",
                     "ssa", "hardened"]),
        "convergence": pd.concat(conv, ignore_index=True) if conv else pd.DataFrame(
            columns=["level", "iteration", "lower_bound", "upper_bound", "gap"]),
        "worst_case_dispatch": pd.concat(dispatch, ignore_index=True) if dispatch else (
            pd.DataFrame(columns=["level", "scenario", "variable", "element", "period",
                                  "value"])),
    }
    for name, frame in tables.items():
        frame.to_csv(results / f"{name}.csv", index=False)
    return tables
