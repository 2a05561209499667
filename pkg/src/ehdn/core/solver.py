"""Mixed-binary LP/SOCP solving through HiGHS with polyhedral cone refinement"""

import logging
import time
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, milp

from ehdn.core.model_ir import LinExpr, ModelIR, Solution
from ehdn.models.config import SolverOptions

logger = logging.getLogger(__name__)


class SolverError(Exception):
    """Raised when the solver fails for a reason other than infeasibility"""

    pass


class InfeasibleModelError(SolverError):
    """Raised when a model has no feasible point"""

    pass


class UnboundedModelError(SolverError):
    """Raised when a model's objective is unbounded"""

    pass


class SolverTimeLimitError(SolverError):
    """Raised when the time limit expires before any feasible point is found"""

    pass


def _initial_cuts(model: ModelIR) -> list[tuple[LinExpr, float]]:
    """Box outer approximation of every cone: |row_i| <= bound and bound >= 0"""
    cuts: list[tuple[LinExpr, float]] = []
    for cone in model.cones:
        cuts.append((-cone.bound, 0.0))
        for row in cone.rows:
            cuts.append((row - cone.bound, 0.0))
            cuts.append((-row - cone.bound, 0.0))
    return cuts


def _tangent_cut(cone, z: np.ndarray) -> Optional[tuple[LinExpr, float]]:
    r, _ = cone.residual(z)
    norm = np.linalg.norm(r)
    if norm <= 0:
        return None
    g = r / norm
    expr = LinExpr()
    for gi, row in zip(g, cone.rows):
        if gi != 0.0:
            expr = expr + row * gi
    return expr - cone.bound, 0.0


def _cut_rows(cuts: list[tuple[LinExpr, float]], n: int):
    rows, cols, vals, hi = [], [], [], []
    for k, (expr, rhs) in enumerate(cuts):
        for j, v in expr.terms.items():
            rows.append(k)
            cols.append(j)
            vals.append(v)
        hi.append(rhs - expr.const)
    a = sp.csr_matrix((vals, (rows, cols)), shape=(len(cuts), n))
    return a, np.full(len(cuts), -np.inf), np.array(hi)


def _run_highs(c, a, lo, hi, lb, ub, integrality, options: SolverOptions,
               time_limit: Optional[float]):
    constraints = [LinearConstraint(a, lo, hi)] if a.shape[0] else []
    opts = {"disp": False, "presolve": True}
    if integrality.any():
        opts["mip_rel_gap"] = options.mip_rel_gap
    if time_limit is not None:
        opts["time_limit"] = time_limit
    return milp(c, constraints=constraints, integrality=integrality,
                bounds=Bounds(lb, ub), options=opts)


def _model_error(res) -> bool:
    """scipy reports HiGHS model errors with the infeasible status code"""
    return "model error" in str(res.message).lower()


def solve_model(model: ModelIR, options: Optional[SolverOptions] = None) -> Solution:
    """Solve to the requested MIP gap; cones are refined with tangent cuts until every
    cone violation is at most options.cone_tol

    options.time_limit bounds the whole call, refinement rounds included; when it runs out
    between rounds the last incumbent is returned with status "time_limit".

    Raises:
        InfeasibleModelError: No feasible point
        UnboundedModelError: Objective unbounded
        SolverTimeLimitError: Time limit hit without a feasible point
        SolverError: Any other HiGHS failure, or cone refinement not converging
    """
    options = options or SolverOptions()
    c, a, lo, hi, lb, ub, integrality = model.to_arrays()
    cuts = _initial_cuts(model)
    started = time.perf_counter()
    rounds, worst = 0, 0.0

    while True:
        if cuts:
            ca, clo, chi = _cut_rows(cuts, model.n_vars)
            a_all = sp.vstack([a, ca], format="csr")
            lo_all, hi_all = np.concatenate([lo, clo]), np.concatenate([hi, chi])
        else:
            a_all, lo_all, hi_all = a, lo, hi
        remaining = None
        if options.time_limit is not None:
            remaining = max(options.time_limit - (time.perf_counter() - started), 1e-3)
        res = _run_highs(c, a_all, lo_all, hi_all, lb, ub, integrality, options, remaining)
        status = "optimal"
        if res.status == 2 and _model_error(res):
            raise SolverError(f"{model.describe()} rejected by HiGHS: {res.message}")
        if res.status == 2:
            raise InfeasibleModelError(f"{model.describe()} is infeasible: {res.message}")
        if res.status == 3:
            raise UnboundedModelError(f"{model.describe()} is unbounded: {res.message}")
        if res.status == 1:
            if res.x is None:
                raise SolverTimeLimitError(
                    f"{model.describe()}: limit reached without a feasible point ({res.message})"
                )
            status = "time_limit"
            logger.warning("%s: %s; returning incumbent", model.name, res.message)
        elif res.status != 0 or res.x is None:
            raise SolverError(f"{model.describe()}: HiGHS status {res.status}: {res.message}")

        z = np.asarray(res.x, dtype=float)
        if not model.cones:
            break
        worst = 0.0
        added = 0
        for cone in model.cones:
            v = cone.violation(z)
            worst = max(worst, v)
            if v > options.cone_tol:
                cut = _tangent_cut(cone, z)
                if cut is not None:
                    cuts.append(cut)
                    added += 1
        rounds += 1
        logger.debug("%s: cone round %d, max violation %.3g", model.name, rounds, worst)
        if worst <= options.cone_tol or added == 0 or status == "time_limit":
            break
        elapsed = time.perf_counter() - started
        if options.time_limit is not None and elapsed >= options.time_limit:
            status = "time_limit"
            logger.warning("%s: time limit reached during cone refinement (violation %.3g)",
                           model.name, worst)
            break
        if rounds >= options.max_cone_rounds:
            raise SolverError(
                f"{model.name}: cone refinement stopped after {rounds} rounds "
                f"with violation {worst:.3g}"
            )

    fun = float(res.fun) if model.sense == "min" else -float(res.fun)
    objective = fun + model.objective.const
    gap = float(getattr(res, "mip_gap", 0.0) or 0.0)
    logger.debug("%s solved in %.3fs: objective %.6g", model.describe(),
                 time.perf_counter() - started, objective)
    return Solution(z, objective, status, gap, rounds, max(worst, 0.0))
