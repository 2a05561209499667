"""Run orchestration - from an instance and run settings to plans and reports"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ehdn.core.ambiguity import (
    IntensityAmbiguity,
    build_intensity_set,
    build_lpcas,
    calibrate_gammas,
    default_failure_cap,
    forecast_for_level,
    outcome_variance_map,
    quantile_bounds,
    select_projection_vectors,
)
from ehdn.core.ccg import HardeningProblem, evaluate_plan, run_ccg
from ehdn.core.components import ComponentIndex
from ehdn.core.dispatch import (
    DispatchOptions,
    DispatchSolution,
    ScenarioRealization,
    build_dispatch,
    build_template,
    failure_to_states,
    solve_dispatch,
)
from ehdn.core.fragility import (
    EntryAffineMap,
    LinearizedCurves,
    SecondMomentMap,
    linearize_network,
    mean_map,
    second_moment_map,
)
from ehdn.core.hlcc import HlccCone, min_budget, reformulate_hlcc, ssa_specs
from ehdn.core.validation import (
    FailureSampler,
    estimate_welsc,
    sample_intensity,
    simulate_failures,
    ssa_failure_counts,
    var_ssa,
    vola,
)
from ehdn.models.config import AmbiguityKind, RunConfig
from ehdn.models.network import Network
from ehdn.models.results import CCGTrace, HardeningPlan, MinBudgetResult, ValidationReport

logger = logging.getLogger(__name__)

GAMMA1_GRID = [0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0]
GAMMA2_GRID = [0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 3.0, 5.0, 10.0, 20.0]
CALIBRATION_SAMPLES = 500


@dataclass
class LevelModel:
    """Moment maps and optimization data of one instance at one disaster level"""
    net: Network
    level: int
    index: ComponentIndex
    intensity: IntensityAmbiguity
    curves: LinearizedCurves
    mean: EntryAffineMap
    second: SecondMomentMap
    variance: Optional[EntryAffineMap]
    gamma1: float
    gamma2: float
    n_l: int

    def cones(self, config: RunConfig) -> list[HlccCone]:
        specs = ssa_specs(self.index, config.k_cc, config.eps, self.gamma1, self.gamma2)
        return [reformulate_hlcc(s, self.mean, self.second, self.variance) for s in specs]

    def problem(self, config: RunConfig, ambiguity: Optional[AmbiguityKind] = None,
                hlcc: Optional[bool] = None) -> HardeningProblem:
        ambiguity = ambiguity or config.ambiguity
        hlcc = config.hlcc if hlcc is None else hlcc
        lpcas = build_lpcas(self.net, self.mean, self.second, self.gamma1, self.gamma2,
                            self.n_l, self.index, self.variance)
        if ambiguity == AmbiguityKind.FMAS:
            lpcas = lpcas.first_moment_only()
        options = DispatchOptions(storage=config.storage, conversion=config.conversion)
        template = build_template(self.net, self.index, options)
        stock = self.net.costs.hydrogen_stock_m3 if config.storage else 0.0
        return HardeningProblem(
            self.net, self.index, template, lpcas, self.cones(config) if hlcc else [],
            self.net.costs.budget, stock, config.solver, self.level, ambiguity.value,
        )


def calibrate_level(net: Network, index: ComponentIndex, intensity: IntensityAmbiguity,
                    mean: EntryAffineMap, second: SecondMomentMap,
                    seed: int = 0) -> tuple[float, float]:
    """Error ratios from exact fragility evaluations at forecast samples, unhardened state"""
    x0 = np.zeros(index.n_components)
    paths = sample_intensity(intensity, CALIBRATION_SAMPLES, seed)
    sampler = FailureSampler(net, index)
    probs = np.array([sampler.probabilities(p, x0).ravel() for p in paths])
    return calibrate_gammas(probs, mean(x0), second(x0), select_projection_vectors(net, index),
                            GAMMA1_GRID, GAMMA2_GRID)


def build_level_model(net: Network, level: int, config: RunConfig) -> LevelModel:
    """Linearize the fragility curves at the level's forecast and build the moment maps

    Error ratios default to the forecast's own (they carry over through the linear map from
    intensities to failure probabilities) unless given or calibrated.
    """
    index = ComponentIndex(net)
    intensity = build_intensity_set(net, forecast_for_level(net, level))
    d_e, q_e, widths = intensity.entry_moments(net, index)
    curves = linearize_network(net, index, d_e, widths)
    labels = [index.label(i) for i in range(index.n_entries)]
    mean = mean_map(curves, d_e, labels)
    second = second_moment_map(curves, q_e)
    variance = outcome_variance_map(mean) if config.outcome_variance else None

    if config.calibrate:
        gamma1, gamma2 = calibrate_level(net, index, intensity, mean, second, config.seed)
    else:
        gamma1 = intensity.gamma_d1 if config.gamma1 is None else config.gamma1
        gamma2 = intensity.gamma_d2 if config.gamma2 is None else config.gamma2
        gamma2 = max(gamma2, gamma1)
    if config.n_l is not None:
        n_l = config.n_l
    else:
        _, upper = quantile_bounds(mean, second, gamma1)
        n_l = default_failure_cap(upper)
    logger.info("level %d: gamma1=%.4g gamma2=%.4g N^L=%d over %d entries", level, gamma1,
                gamma2, n_l, index.n_entries)
    return LevelModel(net, level, index, intensity, curves, mean, second, variance,
                      gamma1, gamma2, n_l)


def harden(net: Network, level: int, config: RunConfig) -> tuple[HardeningPlan, CCGTrace]:
    model = build_level_model(net, level, config)
    return run_ccg(model.problem(config), config.tol, config.max_iter)


def minimum_budget(net: Network, level: int, config: RunConfig) -> MinBudgetResult:
    model = build_level_model(net, level, config)
    return min_budget(model.cones(config), model.index, net.name, level, config.solver)


def plan_vectors(model: LevelModel, plan: HardeningPlan) -> tuple[np.ndarray, np.ndarray]:
    x = model.index.to_vector(plan.hardened)
    x_e = np.array([plan.storage.get(s.id, 0.0) for s in model.net.stations])
    return x, x_e


def evaluate(net: Network, level: int, config: RunConfig,
             plan: HardeningPlan) -> tuple[float, CCGTrace]:
    """Worst-case expected cost of a given plan under the configured ambiguity set"""
    model = build_level_model(net, level, config)
    x, x_e = plan_vectors(model, plan)
    return evaluate_plan(model.problem(config, hlcc=False), x, x_e, config.tol, config.max_iter)


def scenario_dispatch(net: Network, config: RunConfig, plan: HardeningPlan,
                      labels: list[str]) -> DispatchSolution:
    """Dispatch of a plan's storage allocation under the failures named by `labels`"""
    index = ComponentIndex(net)
    scenario = ScenarioRealization.from_labels(labels, index)
    options = DispatchOptions(storage=config.storage, conversion=config.conversion)
    template = build_template(net, index, options)
    x_e = np.array([plan.storage.get(s.id, 0.0) for s in net.stations])
    problem = build_dispatch(net, x_e, failure_to_states(scenario.a), template)
    return solve_dispatch(problem, config.solver)


def value_of_lifting(net: Network, level: int, config: RunConfig) -> Optional[float]:
    """Plans under both ambiguity sets, each evaluated under the lifted set"""
    model = build_level_model(net, level, config)
    plan_f, _ = run_ccg(model.problem(config, AmbiguityKind.FMAS), config.tol, config.max_iter)
    plan_l, _ = run_ccg(model.problem(config, AmbiguityKind.LPCAS), config.tol, config.max_iter)
    judge = model.problem(config, AmbiguityKind.LPCAS, hlcc=False)
    f_fmas, _ = evaluate_plan(judge, *plan_vectors(model, plan_f), config.tol, config.max_iter)
    f_lpcas, _ = evaluate_plan(judge, *plan_vectors(model, plan_l), config.tol, config.max_iter)
    logger.info("worst-case cost: first-moment plan %.6g, lifted plan %.6g", f_fmas, f_lpcas)
    return vola(f_fmas, f_lpcas)


def validate(net: Network, level: int, config: RunConfig, plan: HardeningPlan,
             with_vola: bool = False) -> ValidationReport:
    """Monte-Carlo shedding cost and SSA failure quantile of a plan"""
    model = build_level_model(net, level, config)
    x, x_e = plan_vectors(model, plan)
    paths = sample_intensity(model.intensity, config.samples, config.seed)
    sampler = FailureSampler(net, model.index,
                             model.curves if config.linearized_validation else None)
    failures = simulate_failures(sampler, paths, x, config.seed)
    template = build_template(net, model.index,
                              DispatchOptions(storage=config.storage, conversion=config.conversion))
    mean_cost, half, _ = estimate_welsc(net, template, x_e, failures, config.threads, config.solver)
    counts = ssa_failure_counts(failures, model.index)
    return ValidationReport(
        instance=net.name, level=level, samples=config.samples, seed=config.seed,
        mean_cost=mean_cost, half_width=half, quantile=config.quantile,
        var_ssa=var_ssa(counts, config.quantile), mean_ssa_failures=float(counts.mean()),
        linearized=config.linearized_validation,
        vola=value_of_lifting(net, level, config) if with_vola else None,
    )
