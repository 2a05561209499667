"""CLI interface for ehdn using Typer"""

import logging
from pathlib import Path
from typing import Any, Callable, Optional

import typer
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from ehdn import __version__
from ehdn.core.ambiguity import AmbiguityError
from ehdn.core.config import (
    ConfigInvalidError,
    ConfigNotFoundError,
    config_exists,
    load_config,
    merge_config,
)
from ehdn.core.dispatch import DispatchModelError
from ehdn.core.fragility import FragilityModelError
from ehdn.core.hlcc import HlccError, HlccInfeasibleError
from ehdn.core.instance import InstanceError, parse_instance
from ehdn.core.report import (
    ReportError,
    build_report,
    level_dir,
    load_plan,
    save_min_budget,
    save_plan,
    save_validation,
    write_dispatch,
    write_hardening,
    write_manifest,
    write_summary,
    write_trace,
)
from ehdn.core.runner import evaluate, harden, minimum_budget, scenario_dispatch, validate
from ehdn.core.solver import InfeasibleModelError, SolverError
from ehdn.instances import BUILTIN_INSTANCES
from ehdn.models.config import AmbiguityKind, Command, RunConfig
from ehdn.models.network import Network
from ehdn.models.results import HardeningPlan

app = typer.Typer(
    name="ehdn",
    help="Hardening and hydrogen-storage planning for electricity-hydrogen distribution networks",
    no_args_is_help=True,
)
console = Console()
logger = logging.getLogger("ehdn")

# (exception types, exit code); first match wins
EXIT_CODES: list[tuple[tuple[type[Exception], ...], int]] = [
    ((HlccInfeasibleError, InfeasibleModelError), 3),
    ((SolverError,), 4),
    ((InstanceError, AmbiguityError, FragilityModelError, DispatchModelError, HlccError,
      ReportError, ConfigNotFoundError, ConfigInvalidError, KeyError), 1),
]

LevelBody = Callable[[Network, int, RunConfig, Path], dict[str, Any]]

# report tables too long for the console
CSV_ONLY = {"worst_case_dispatch"}


class MinBudgetInfeasible(Exception):
    """Raised when even hardening every SSA pipeline violates a chance constraint"""

    pass


def version_callback(value: bool):
    if value:
        console.print(f"ehdn version {__version__}")
        raise typer.Exit()


@app.callback()
def main_callback(
    version: bool = typer.Option(
        False, "--version", "-V", callback=version_callback, is_eager=True, help="Show version"
    ),
):
    """ehdn - distributionally robust hardening of coupled electricity-hydrogen networks"""


def parse_levels(value: Optional[str]) -> Optional[list[int]]:
    """'2' or '1,2,3,4' into a list of levels"""
    if value is None:
        return None
    try:
        levels = [int(part) for part in value.split(",") if part.strip()]
    except ValueError:
        raise typer.BadParameter(f"expected a level or a comma list of levels, got '{value}'")
    if not levels:
        raise typer.BadParameter("at least one level is required")
    return levels


def _setup_logging(verbose: bool) -> None:
    logger.setLevel(logging.DEBUG if verbose else logging.INFO)
    if not any(isinstance(h, RichHandler) for h in logger.handlers):
        logger.addHandler(RichHandler(console=console, show_path=False))


def _exit_code(error: Exception) -> Optional[int]:
    if isinstance(error, MinBudgetInfeasible):
        return 3
    for kinds, code in EXIT_CODES:
        if isinstance(error, kinds):
            return code
    return None


def _fail(message: Any, code: int) -> None:
    console.print(f"[red]Error:[/red] {message}")
    raise typer.Exit(code)


def _settings(command: Command, config_file: Optional[Path],
              overrides: dict[str, Any]) -> RunConfig:
    """Defaults file (explicit, or ehdn.yaml when present) overridden by the given flags"""
    try:
        if config_file is not None:
            base = load_config(config_file)
        elif config_exists():
            base = load_config()
        else:
            base = RunConfig()
        return merge_config(base, {**overrides, "command": command})
    except (ConfigNotFoundError, ConfigInvalidError) as e:
        out = Path(overrides.get("output_dir") or RunConfig().output_dir)
        write_summary(out, {"command": command.value, "instance": overrides.get("instance"),
                            "status": "error", "error": str(e), "levels": {}})
        _fail(e, 1)


def _run(config: RunConfig, body: LevelBody) -> dict[str, Any]:
    """Run `body` per level, always leaving a manifest and a summary behind"""
    out = config.output_path
    write_manifest(out, config)
    summary: dict[str, Any] = {"command": config.command.value, "instance": config.instance,
                               "status": "ok", "levels": {}}
    try:
        net = parse_instance(config.instance)
        for level in config.levels:
            target = level_dir(out, level) if len(config.levels) > 1 else out
            summary["levels"][level] = body(net, level, config, target)
    except Exception as e:
        summary.update(status="error", error=str(e))
        write_summary(out, summary)
        code = _exit_code(e)
        if code is None:
            raise
        _fail(e, code)
    write_summary(out, summary)
    return summary


def _plan_for(config: RunConfig, level: int) -> Optional[HardeningPlan]:
    if config.plan is None:
        return None
    path = Path(config.plan)
    if level_dir(path, level).is_dir():
        path = level_dir(path, level)
    plan = load_plan(path)
    if plan.level is not None and plan.level != level:
        logger.warning("plan %s was computed for level %d, used at level %d",
                       path, plan.level, level)
    return plan


def _plan_summary(plan: HardeningPlan) -> dict[str, Any]:
    data = plan.model_dump(mode="json")
    keys = ("welsc", "lower_bound", "gap", "converged", "hardening_cost", "hardened_lines",
            "hardened_pipelines", "storage")
    return {**{k: data[k] for k in keys},
            "hlcc": {s["group"]: s["worst_case_prob"] for s in data["hlcc"]}}


def _harden_level(net: Network, level: int, config: RunConfig, out: Path) -> dict[str, Any]:
    plan, trace = harden(net, level, config)
    save_plan(out, plan)
    write_trace(out, trace)
    write_hardening(out, net, plan)
    worst = trace.iterations[-1].scenario
    write_dispatch(out, scenario_dispatch(net, config, plan, worst), worst)
    return {**_plan_summary(plan), "iterations": len(trace.iterations),
            "worst_case_scenario": worst}


def _min_budget_level(net: Network, level: int, config: RunConfig,
                      out: Path) -> dict[str, Any]:
    result = minimum_budget(net, level, config)
    save_min_budget(out, result)
    if not result.feasible:
        raise MinBudgetInfeasible(f"level {level}: {result.message}")
    return result.model_dump(mode="json", exclude={"instance", "level"})


def _evaluate_level(net: Network, level: int, config: RunConfig, out: Path) -> dict[str, Any]:
    plan = _plan_for(config, level)
    welsc, trace = evaluate(net, level, config, plan)
    write_trace(out, trace)
    return {"ambiguity": config.ambiguity.value, "welsc": float(welsc),
            "converged": trace.converged, "iterations": len(trace.iterations)}


def _validate_level(net: Network, level: int, config: RunConfig, out: Path,
                    with_vola: bool = False) -> dict[str, Any]:
    plan = _plan_for(config, level)
    if plan is None:
        logger.info("no --plan given; hardening level %d first", level)
        plan, trace = harden(net, level, config)
        save_plan(out, plan)
        write_trace(out, trace)
        write_hardening(out, net, plan)
    report = validate(net, level, config, plan, with_vola)
    save_validation(out, report)
    return report.model_dump(mode="json", exclude={"instance", "level"})


def _levels_table(title: str, summary: dict[str, Any], columns: list[str]) -> Table:
    table = Table(title=title)
    table.add_column("Level", style="cyan")
    for column in columns:
        table.add_column(column)
    for level, row in summary["levels"].items():
        cells = []
        for column in columns:
            value = row.get(column)
            if isinstance(value, float):
                cells.append(f"{value:.6g}")
            elif isinstance(value, list):
                cells.append(", ".join(value) or "-")
            else:
                cells.append("-" if value is None else str(value))
        table.add_row(str(level), *cells)
    return table


def _common(instance, levels, eps, kcc, gamma1, gamma2, calibrate, n_l,
            no_outcome_variance, no_hlcc, ambiguity, no_storage, no_conversion, time_limit,
            mip_gap, seed, output) -> dict[str, Any]:
    return {
        "instance": instance, "levels": parse_levels(levels), "eps": eps, "k_cc": kcc,
        "gamma1": gamma1, "gamma2": gamma2, "calibrate": True if calibrate else None,
        "n_l": n_l, "outcome_variance": False if no_outcome_variance else None,
        "hlcc": False if no_hlcc else None, "ambiguity": ambiguity,
        "storage": False if no_storage else None,
        "conversion": False if no_conversion else None,
        "time_limit": time_limit, "mip_rel_gap": mip_gap, "seed": seed,
        "output_dir": str(output) if output is not None else None,
    }


# Options shared by the solving commands
INSTANCE = typer.Option(None, "--instance", "-i", help="Instance file or bundled instance name")
LEVEL = typer.Option(None, "--level", "-l", help="Disaster level, or a comma list for a sweep")
EPS = typer.Option(None, "--eps", help="Chance-constraint risk level epsilon")
KCC = typer.Option(None, "--kcc", help="Allowed SSA pipeline failures K_CC")
GAMMA1 = typer.Option(None, "--gamma1", help="Mean error ratio (default: from the forecast)")
GAMMA2 = typer.Option(None, "--gamma2", help="Covariance error ratio (default: from the forecast)")
CALIBRATE = typer.Option(False, "--calibrate", help="Calibrate gamma1/gamma2 by sampling")
N_L = typer.Option(None, "--n-l", help="Maximum simultaneous failures N^L")
NO_VARIANCE = typer.Option(False, "--no-outcome-variance",
                           help="Drop the Bernoulli variance from the second moments")
NO_HLCC = typer.Option(False, "--no-hlcc", help="Drop the hydrogen leakage chance constraint")
AMBIGUITY = typer.Option(None, "--ambiguity", help="Failure ambiguity set")
NO_STORAGE = typer.Option(False, "--no-storage", help="No hydrogen storage allocation")
NO_CONVERSION = typer.Option(False, "--no-conversion", help="No fuel cells or electrolyzers")
TIME_LIMIT = typer.Option(None, "--time-limit", help="Seconds per solver call")
MIP_GAP = typer.Option(None, "--mip-gap", help="Relative MIP gap")
SEED = typer.Option(None, "--seed", help="Seed for every random draw")
OUTPUT = typer.Option(None, "--output", "-o", help="Output directory")
CONFIG = typer.Option(None, "--config", "-c", help="Run defaults file (default: ./ehdn.yaml)")
VERBOSE = typer.Option(False, "--verbose", help="Debug logging")
TOL = typer.Option(None, "--tol", help="Relative CCG gap tolerance")
MAX_ITER = typer.Option(None, "--max-iter", help="CCG iteration limit")
PLAN = typer.Option(None, "--plan", help="plan.yaml, or a result directory holding it")


@app.command("harden")
def harden_cmd(
    instance: Optional[str] = INSTANCE, level: Optional[str] = LEVEL,
    eps: Optional[float] = EPS, kcc: Optional[float] = KCC,
    tol: Optional[float] = TOL, max_iter: Optional[int] = MAX_ITER,
    gamma1: Optional[float] = GAMMA1, gamma2: Optional[float] = GAMMA2,
    calibrate: bool = CALIBRATE, n_l: Optional[int] = N_L,
    no_outcome_variance: bool = NO_VARIANCE, no_hlcc: bool = NO_HLCC,
    ambiguity: Optional[AmbiguityKind] = AMBIGUITY,
    no_storage: bool = NO_STORAGE, no_conversion: bool = NO_CONVERSION,
    time_limit: Optional[float] = TIME_LIMIT, mip_gap: Optional[float] = MIP_GAP,
    seed: Optional[int] = SEED, output: Optional[Path] = OUTPUT,
    config: Optional[Path] = CONFIG, verbose: bool = VERBOSE,
):
    """Optimal hardening and storage plan by column-and-constraint generation"""
    _setup_logging(verbose)
    settings = _settings(Command.HARDEN, config, {
        **_common(instance, level, eps, kcc, gamma1, gamma2, calibrate, n_l,
                  no_outcome_variance, no_hlcc, ambiguity, no_storage, no_conversion,
                  time_limit, mip_gap, seed, output),
        "tol": tol, "max_iter": max_iter,
    })
    summary = _run(settings, _harden_level)
    console.print(_levels_table("Hardening plans", summary, [
        "welsc", "gap", "converged", "hardening_cost", "hardened_lines", "hardened_pipelines"]))
    console.print(f"[green]Results written to[/green] {settings.output_path}")


@app.command("min-budget")
def min_budget_cmd(
    instance: Optional[str] = INSTANCE, level: Optional[str] = LEVEL,
    eps: Optional[float] = EPS, kcc: Optional[float] = KCC,
    gamma1: Optional[float] = GAMMA1, gamma2: Optional[float] = GAMMA2,
    calibrate: bool = CALIBRATE, no_outcome_variance: bool = NO_VARIANCE,
    time_limit: Optional[float] = TIME_LIMIT, mip_gap: Optional[float] = MIP_GAP,
    seed: Optional[int] = SEED, output: Optional[Path] = OUTPUT,
    config: Optional[Path] = CONFIG, verbose: bool = VERBOSE,
):
    """Cheapest SSA pipeline hardening that satisfies the leakage chance constraint"""
    _setup_logging(verbose)
    settings = _settings(Command.MIN_BUDGET, config, _common(
        instance, level, eps, kcc, gamma1, gamma2, calibrate, None, no_outcome_variance,
        False, None, False, False, time_limit, mip_gap, seed, output))
    summary = _run(settings, _min_budget_level)
    console.print(_levels_table("Minimum budgets", summary,
                                ["feasible", "budget", "hardened_pipelines"]))


@app.command("evaluate")
def evaluate_cmd(
    plan: Path = typer.Option(..., "--plan", help="plan.yaml, or a result directory holding it"),
    instance: Optional[str] = INSTANCE, level: Optional[str] = LEVEL,
    tol: Optional[float] = TOL, max_iter: Optional[int] = MAX_ITER,
    gamma1: Optional[float] = GAMMA1, gamma2: Optional[float] = GAMMA2,
    calibrate: bool = CALIBRATE, n_l: Optional[int] = N_L,
    no_outcome_variance: bool = NO_VARIANCE,
    ambiguity: Optional[AmbiguityKind] = AMBIGUITY,
    no_storage: bool = NO_STORAGE, no_conversion: bool = NO_CONVERSION,
    time_limit: Optional[float] = TIME_LIMIT, mip_gap: Optional[float] = MIP_GAP,
    seed: Optional[int] = SEED, output: Optional[Path] = OUTPUT,
    config: Optional[Path] = CONFIG, verbose: bool = VERBOSE,
):
    """Worst-case expected shedding cost of a fixed plan"""
    _setup_logging(verbose)
    settings = _settings(Command.EVALUATE, config, {
        **_common(instance, level, None, None, gamma1, gamma2, calibrate, n_l,
                  no_outcome_variance, True, ambiguity, no_storage, no_conversion,
                  time_limit, mip_gap, seed, output),
        "tol": tol, "max_iter": max_iter, "plan": str(plan),
    })
    summary = _run(settings, _evaluate_level)
    console.print(_levels_table("Plan evaluation", summary,
                                ["ambiguity", "welsc", "converged", "iterations"]))


@app.command("validate")
def validate_cmd(
    plan: Optional[Path] = PLAN,
    instance: Optional[str] = INSTANCE, level: Optional[str] = LEVEL,
    samples: Optional[int] = typer.Option(None, "--samples", "-n", help="Monte-Carlo samples"),
    quantile: Optional[float] = typer.Option(None, "--quantile", "-q",
                                             help="Quantile of the SSA failure count"),
    threads: Optional[int] = typer.Option(None, "--threads", help="Parallel dispatch workers"),
    linearized: bool = typer.Option(False, "--linearized",
                                    help="Draw failures from the linearized curves"),
    with_vola: bool = typer.Option(False, "--vola", help="Also compute the value of lifting"),
    eps: Optional[float] = EPS, kcc: Optional[float] = KCC,
    tol: Optional[float] = TOL, max_iter: Optional[int] = MAX_ITER,
    gamma1: Optional[float] = GAMMA1, gamma2: Optional[float] = GAMMA2,
    calibrate: bool = CALIBRATE, n_l: Optional[int] = N_L,
    no_outcome_variance: bool = NO_VARIANCE, no_hlcc: bool = NO_HLCC,
    ambiguity: Optional[AmbiguityKind] = AMBIGUITY,
    no_storage: bool = NO_STORAGE, no_conversion: bool = NO_CONVERSION,
    time_limit: Optional[float] = TIME_LIMIT, mip_gap: Optional[float] = MIP_GAP,
    seed: Optional[int] = SEED, output: Optional[Path] = OUTPUT,
    config: Optional[Path] = CONFIG, verbose: bool = VERBOSE,
):
    """Monte-Carlo shedding cost and SSA failure quantile of a plan (hardens first if none)"""
    _setup_logging(verbose)
    settings = _settings(Command.VALIDATE, config, {
        **_common(instance, level, eps, kcc, gamma1, gamma2, calibrate, n_l,
                  no_outcome_variance, no_hlcc, ambiguity, no_storage, no_conversion,
                  time_limit, mip_gap, seed, output),
        "tol": tol, "max_iter": max_iter, "samples": samples, "quantile": quantile,
        "threads": threads, "linearized_validation": True if linearized else None,
        "plan": str(plan) if plan is not None else None,
    })

    def body(net: Network, lvl: int, cfg: RunConfig, out: Path) -> dict[str, Any]:
        return _validate_level(net, lvl, cfg, out, with_vola)

    summary = _run(settings, body)
    console.print(_levels_table("Validation", summary,
                                ["mean_cost", "half_width", "var_ssa", "mean_ssa_failures",
                                 "vola"]))


@app.command("report")
def report_cmd(
    results: Path = typer.Argument(Path("results"), help="Directory of earlier run outputs"),
    verbose: bool = VERBOSE,
):
    """Collect per-level results into plot-ready CSV tables"""
    _setup_logging(verbose)
    try:
        tables = build_report(results)
    except ReportError as e:
        _fail(e, 1)

    for name, frame in tables.items():
        if frame.empty or name in CSV_ONLY:
            continue
        table = Table(title=name)
        for column in frame.columns:
            table.add_column(str(column))
        for row in frame.itertuples(index=False):
            table.add_row(*[f"{v:.6g}" if isinstance(v, float) else str(v) for v in row])
        console.print(table)
    console.print(f"[green]Tables written to[/green] {results}")


@app.command("instances")
def instances_cmd():
    """List bundled instances"""
    table = Table(title="Bundled instances")
    table.add_column("Name", style="cyan")
    table.add_column("Description")
    for name, description in BUILTIN_INSTANCES.items():
        table.add_row(name, description)
    console.print(table)


def main():
    """Entry point for CLI"""
    app()


if __name__ == "__main__":
    main()
