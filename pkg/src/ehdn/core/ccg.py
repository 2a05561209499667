"""Two-stage distributionally robust hardening by column-and-constraint generation"""

import itertools
import logging
import time
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

import numpy as np

from ehdn.core.ambiguity import LPCAS
from ehdn.core.components import ComponentIndex
from ehdn.core.dispatch import (
    DispatchTemplate,
    ScenarioRealization,
    add_dual_rows,
    dispatch_cost,
    failure_to_states,
)
from ehdn.core.hlcc import HlccCone
from ehdn.core.model_ir import LinExpr, ModelIR, Solution
from ehdn.core.solver import solve_model
from ehdn.models.config import SolverOptions
from ehdn.models.network import Network
from ehdn.models.results import CCGIteration, CCGTrace, HardeningPlan

logger = logging.getLogger(__name__)

BINDING_TOL = 1e-6
BOUND_TOL = 1e-6


class CutError(Exception):
    """Raised when a scenario cannot be added to the master problem"""

    pass


@dataclass
class HardeningProblem:
    """Everything the master and subproblems need for one instance and disaster level"""
    net: Network
    index: ComponentIndex
    template: DispatchTemplate
    lpcas: LPCAS
    cones: list[HlccCone] = field(default_factory=list)
    budget: float = 0.0
    stock: float = 0.0
    options: SolverOptions = field(default_factory=SolverOptions)
    level: Optional[int] = None
    ambiguity: str = "lpcas"

    @property
    def storage_max(self) -> np.ndarray:
        return self.template.storage_max


@dataclass
class Cut:
    """A worst-case scenario with the lift values the subproblem returned for it"""
    scenario: ScenarioRealization
    lift: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def a(self) -> np.ndarray:
        return self.scenario.entries


def linearize_products(model: ModelIR, pairs: Iterable[tuple[int, int]],
                       name: str = "xsq") -> dict[tuple[int, int], int]:
    """Exact products of binary variable pairs: z <= x_i, z <= x_j, z >= x_i + x_j - 1"""
    out: dict[tuple[int, int], int] = {}
    for i, j in pairs:
        key = (i, j) if i < j else (j, i)
        if key in out:
            continue
        z = model.add_var(f"{name}[{key[0]},{key[1]}]", 0.0, 1.0)
        model.add_constraint(LinExpr({z: 1.0, i: -1.0}), hi=0.0)
        model.add_constraint(LinExpr({z: 1.0, j: -1.0}), hi=0.0)
        model.add_constraint(LinExpr({z: 1.0, i: -1.0, j: -1.0}), lo=-1.0)
        out[key] = z
    return out


def _bounded_product(model: ModelIR, g: int, g_max: float, x: int, name: str) -> int:
    """p = g * x for 0 <= g <= g_max and binary-valued x"""
    p = model.add_var(name, 0.0, g_max)
    model.add_constraint(LinExpr({p: 1.0, x: -g_max}), hi=0.0)
    model.add_constraint(LinExpr({p: 1.0, g: -1.0}), hi=0.0)
    model.add_constraint(LinExpr({p: 1.0, g: -1.0, x: -g_max}), lo=-g_max)
    return p


class MasterProblem:
    """Master problem over the hardening vector, storage allocation and ambiguity duals"""

    def __init__(self, problem: HardeningProblem, cuts: list[Cut], dual_bound: float,
                 fixed_x: Optional[np.ndarray] = None, fixed_storage: Optional[np.ndarray] = None):
        self.problem = problem
        self.dual_bound = dual_bound
        p = problem
        lp = p.lpcas
        n_c, n_e, k = p.index.n_components, p.index.n_entries, lp.k
        m = ModelIR("master")
        self.model = m
        self.x = m.add_vars("x", n_c, binary=True)
        self.x_e = m.add_vars("x_e", len(p.storage_max), ub=p.storage_max)
        self.alpha = m.add_vars("alpha", n_e, ub=dual_bound)
        self.beta = m.add_vars("beta", n_e, ub=dual_bound)
        self.gamma = m.add_vars("gamma", k, ub=dual_bound)
        self.L = m.add_var("L", -np.inf, np.inf)
        if fixed_x is not None:
            for c in range(n_c):
                m.fix(self.x[c], float(fixed_x[c]))
        if fixed_storage is not None:
            for s, v in enumerate(fixed_storage):
                m.fix(self.x_e[s], float(v))

        self._xsq: dict[tuple[int, int], int] = {}
        self._gx: dict[tuple[int, int], int] = {}
        self._gxx: dict[tuple[int, int, int], int] = {}

        # first-stage feasibility
        m.add_constraint(LinExpr({int(self.x[c]): float(p.index.costs[c]) for c in range(n_c)}),
                         hi=p.budget, name="budget")
        if len(self.x_e):
            m.add_constraint(LinExpr({int(j): 1.0 for j in self.x_e}), p.stock, p.stock,
                             name="stock")
        if fixed_x is None:
            for cone in p.cones:
                cone.add_to(m, self.x)

        # worst-case expectation terms
        terms = LinExpr()
        for i in range(n_e):
            c = int(lp.mean.comp[i])
            for var, mp, sign, tag in ((self.alpha, lp.upper, 1.0, "ax"),
                                       (self.beta, lp.lower, -1.0, "bx")):
                terms.add_term(var[i], sign * mp.v0[i])
                if mp.coef[i] != 0.0:
                    prod = _bounded_product(m, var[i], dual_bound, self.x[c], f"{tag}[{i}]")
                    terms.add_term(prod, sign * mp.coef[i])
        for r in range(k):
            terms = terms + self._gamma_times(r, lp.delta[r])
        self.ambiguity_terms = terms
        m.add_constraint(terms + LinExpr.var(self.L), lo=0.0, name="guard")

        self.recourse: list[np.ndarray] = []
        for n, cut in enumerate(cuts):
            self.add_cut(cut, n)

        objective = terms + LinExpr.var(self.L)
        tie = p.options.tie_break
        if tie > 0 and fixed_x is None:
            for c in range(n_c):
                objective.add_term(self.x[c], tie * (1.0 + (n_c - c) / n_c))
        m.set_objective(objective)

    def _pair(self, c: int, d: int) -> int:
        key = (c, d) if c < d else (d, c)
        if key not in self._xsq:
            made = linearize_products(self.model, [(int(self.x[key[0]]), int(self.x[key[1]]))])
            self._xsq[key] = next(iter(made.values()))
        return self._xsq[key]

    def _gamma_times(self, r: int, poly) -> LinExpr:
        """gamma_r * poly(x) with every monomial product linearized"""
        m = self.model
        out = LinExpr()
        out.add_term(self.gamma[r], poly.const)
        for c, v in poly.linear.items():
            key = (r, c)
            if key not in self._gx:
                self._gx[key] = _bounded_product(m, self.gamma[r], self.dual_bound, self.x[c],
                                                 f"gx[{r},{c}]")
            out.add_term(self._gx[key], v)
        for (c, d), v in poly.pairs.items():
            key3 = (r, c, d)
            if key3 not in self._gxx:
                self._gxx[key3] = _bounded_product(m, self.gamma[r], self.dual_bound,
                                                   self._pair(c, d), f"gxx[{r},{c},{d}]")
            out.add_term(self._gxx[key3], v)
        return out

    def add_cut(self, cut: Cut, n: int) -> None:
        """L >= h'y - (alpha - beta)'a - gamma'w(a, x) with its own recourse block"""
        p = self.problem
        a = cut.a
        if a.size != p.index.n_entries:
            raise CutError(f"scenario has {a.size} entries, expected {p.index.n_entries}")
        if a.sum() > p.lpcas.n_l + 1e-9:
            raise CutError(f"scenario with {int(a.sum())} failures exceeds N^L={p.lpcas.n_l}")
        u = failure_to_states(cut.scenario.a)
        y = p.template.add_recourse(self.model, u, self.x_e, name=f"y{n}")
        self.recourse.append(y)
        row = LinExpr.var(self.L) - p.template.cost(y)
        for i in np.flatnonzero(a > 0.5):
            row.add_term(self.alpha[i], 1.0)
            row.add_term(self.beta[i], -1.0)
        for r in range(p.lpcas.k):
            row = row + self._gamma_times(r, p.lpcas.w_quadratic(r, a))
        self.model.add_constraint(row, lo=0.0, name=f"cut[{n}]")

    def solve(self) -> Solution:
        return solve_model(self.model, self.problem.options)

    def value(self, sol: Solution) -> float:
        """Worst-case expectation bound at a solution, without the tie-break term"""
        return float(self.ambiguity_terms.value(sol.z) + sol.z[self.L])

    def binding(self, sol: Solution) -> bool:
        duals = np.concatenate([sol.z[self.alpha], sol.z[self.beta], sol.z[self.gamma]])
        return bool(duals.size and duals.max() >= self.dual_bound * (1 - BINDING_TOL))


def build_master(problem: HardeningProblem, cuts: list[Cut], dual_bound: float,
                 fixed_x: Optional[np.ndarray] = None,
                 fixed_storage: Optional[np.ndarray] = None) -> MasterProblem:
    return MasterProblem(problem, cuts, dual_bound, fixed_x, fixed_storage)


def solve_master(problem: HardeningProblem, cuts: list[Cut], dual_bound: float,
                 fixed_x: Optional[np.ndarray] = None,
                 fixed_storage: Optional[np.ndarray] = None
                 ) -> tuple[MasterProblem, Solution, float]:
    """Solve the master, doubling the ambiguity-dual bound only while that lowers its value

    Duals at their bound are not enough: while the guard row holds the objective at zero the
    duals sit on the box along a flat face, and the value stays put when the box grows.
    Returns the master, its solution and the dual bound in force.
    """
    master = build_master(problem, cuts, dual_bound, fixed_x, fixed_storage)
    sol = master.solve()
    for _ in range(problem.options.max_bound_doublings):
        if not master.binding(sol):
            break
        wider = build_master(problem, cuts, 2.0 * dual_bound, fixed_x, fixed_storage)
        wider_sol = wider.solve()
        value = master.value(sol)
        if value - wider.value(wider_sol) <= BOUND_TOL * max(1.0, abs(value)):
            logger.debug("ambiguity duals at their bound with no effect on the objective")
            break
        dual_bound *= 2.0
        master, sol = wider, wider_sol
        logger.warning("ambiguity duals at their bound; raised it to %.4g", dual_bound)
    return master, sol, dual_bound


@dataclass
class SubproblemResult:
    scenario: ScenarioRealization
    value: float          # primal re-evaluation at the rounded scenario
    dual_value: float     # objective of the dualized MILP
    recourse: float
    lift: np.ndarray
    doublings: int = 0


def lift_values(lpcas: LPCAS, a: np.ndarray, x: np.ndarray) -> np.ndarray:
    return lpcas.w_values(a, x) if lpcas.k else np.zeros(0)


def build_subproblem(problem: HardeningProblem, x: np.ndarray, x_e: np.ndarray,
                     alpha: np.ndarray, beta: np.ndarray, gamma: np.ndarray,
                     dual_bounds: np.ndarray) -> tuple[ModelIR, np.ndarray, np.ndarray]:
    """Worst scenario for fixed first stage and ambiguity duals as a single-level MILP

    The inner dispatch minimum is replaced by its LP dual; the products of inequality duals
    with component states are linearized with the per-row bounds in `dual_bounds`.
    Returns the model with the scenario and inequality-dual variable indices.
    """
    p = problem
    t = p.template
    lp = p.lpcas
    n_e, T = p.index.n_entries, p.index.periods
    m = ModelIR("subproblem")
    a = m.add_vars("a", n_e, binary=True)
    u = m.add_vars("u", n_e, binary=True)
    m.add_constraint(LinExpr({int(j): 1.0 for j in a}), hi=lp.n_l, name="support")
    for c in range(p.index.n_components):
        for k in range(T):
            i = p.index.entry(c, k)
            if k == 0:
                m.add_constraint(LinExpr({u[i]: 1.0, a[i]: 1.0}), 1.0, 1.0)
                continue
            prev = p.index.entry(c, k - 1)
            m.add_constraint(LinExpr({u[i]: 1.0, u[prev]: -1.0}), hi=0.0)
            m.add_constraint(LinExpr({u[i]: 1.0, a[i]: 1.0}), hi=1.0)
            m.add_constraint(LinExpr({u[i]: 1.0, u[prev]: -1.0, a[i]: 1.0}), lo=0.0)

    lam, nu = add_dual_rows(m, t)
    _, b_eq = t.rhs(np.ones(n_e), x_e)
    objective = LinExpr()
    for j, b in zip(lam, t.b_ub0):
        objective.add_term(j, -b)
    for j, b in zip(nu, b_eq):
        objective.add_term(j, b)
    gated = t.u_ub.tocoo()
    for r, e, coef in zip(gated.row, gated.col, gated.data):
        m.set_bounds(lam[r], 0.0, dual_bounds[r])
        prod = _bounded_product(m, lam[r], dual_bounds[r], u[e], f"lu[{r}]")
        objective.add_term(prod, -coef)

    for i in range(n_e):
        objective.add_term(a[i], beta[i] - alpha[i])
    if lp.k:
        mu = lp.mean(x)
        pairs: dict[tuple[int, int], int] = {}
        for r in range(lp.k):
            if gamma[r] <= 0.0:
                continue
            idx, w = lp.rows[r]
            centre = float(w @ mu[idx])
            objective.const -= gamma[r] * centre ** 2
            for i, wi in zip(idx, w):
                objective.add_term(a[i], -gamma[r] * (wi * wi - 2.0 * centre * wi))
            for (i, wi), (j, wj) in itertools.combinations(zip(idx, w), 2):
                key = tuple(sorted((int(a[i]), int(a[j]))))
                if key not in pairs:
                    pairs.update(linearize_products(m, [key], name="aa"))
                objective.add_term(pairs[key], -gamma[r] * 2.0 * wi * wj)
    m.set_objective(objective, "max")
    return m, a, lam


def solve_subproblem(problem: HardeningProblem, x: np.ndarray, x_e: np.ndarray,
                     alpha: np.ndarray, beta: np.ndarray, gamma: np.ndarray,
                     dual_bounds: Optional[np.ndarray] = None) -> SubproblemResult:
    """Solve the dualized subproblem, doubling dual bounds that bind, and re-evaluate the
    chosen scenario with the primal dispatch"""
    p = problem
    t = p.template
    if dual_bounds is None:
        dual_bounds = np.full(t.n_ub, p.options.dual_bound_factor * t.dual_scale())
    gated_rows = np.unique(t.u_ub.tocoo().row)
    doublings = 0
    while True:
        model, a_vars, lam_vars = build_subproblem(p, x, x_e, alpha, beta, gamma, dual_bounds)
        sol = solve_model(model, p.options)
        lam = sol.z[lam_vars]
        hit = gated_rows[lam[gated_rows] >= dual_bounds[gated_rows] * (1 - BINDING_TOL)]
        if hit.size == 0 or doublings >= p.options.max_bound_doublings:
            if hit.size:
                logger.warning("%d dispatch dual bounds still binding after %d doublings",
                               hit.size, doublings)
            break
        dual_bounds[hit] *= 2.0
        doublings += 1
        logger.debug("doubling %d binding dispatch dual bounds", hit.size)

    a = np.rint(sol.z[a_vars])
    scenario = ScenarioRealization.from_entries(a, p.index.periods)
    recourse = dispatch_cost(p.net, t, scenario.a, x_e, p.options)
    lift = lift_values(p.lpcas, a, x)
    value = float((beta - alpha) @ a - gamma @ lift + recourse)
    gap = abs(sol.objective - value)
    if gap > 1e-5 * max(1.0, abs(value)):
        logger.warning("subproblem dual value %.8g vs primal %.8g", sol.objective, value)
    return SubproblemResult(scenario, value, sol.objective, recourse, lift, doublings)


def _iterate(problem: HardeningProblem, tol: float, max_iter: int,
             fixed_x: Optional[np.ndarray] = None, fixed_storage: Optional[np.ndarray] = None,
             initial: Optional[list[Cut]] = None):
    p = problem
    t = p.template
    dual_bound = p.options.dual_bound_factor * max(t.max_cost, 1.0)
    sub_bounds = np.full(t.n_ub, p.options.dual_bound_factor * t.dual_scale())
    cuts: list[Cut] = list(initial or [])
    seen = {c.scenario.key() for c in cuts}
    trace = CCGTrace()
    lb, ub = -np.inf, np.inf
    best = None

    for it in range(1, max_iter + 1):
        started = time.perf_counter()
        master, msol, dual_bound = solve_master(p, cuts, dual_bound, fixed_x, fixed_storage)
        master_seconds = time.perf_counter() - started

        x = np.rint(msol.z[master.x])
        x_e = msol.z[master.x_e]
        alpha, beta = msol.z[master.alpha], msol.z[master.beta]
        gamma = msol.z[master.gamma]
        first = master.ambiguity_terms.value(msol.z)
        lb = max(lb, master.value(msol))

        started = time.perf_counter()
        sub = solve_subproblem(p, x, x_e, alpha, beta, gamma, sub_bounds)
        sub_seconds = time.perf_counter() - started

        candidate = first + sub.value
        if candidate < ub:
            ub = candidate
            best = (x.copy(), x_e.copy())
        gap = (ub - lb) / max(abs(ub), 1e-6)
        trace.iterations.append(CCGIteration(
            iteration=it, lower_bound=lb, upper_bound=ub, gap=max(gap, 0.0),
            scenario=sub.scenario.labels(p.index), master_seconds=master_seconds,
            sub_seconds=sub_seconds,
        ))
        logger.info("iteration %d: LB=%.6g UB=%.6g gap=%.3g (%d failures)", it, lb, ub, gap,
                    sub.scenario.failures)
        if gap <= tol:
            trace.converged = True
            break
        key = sub.scenario.key()
        if key in seen:
            logger.info("scenario repeated; stopping with gap %.3g", gap)
            trace.converged = gap <= max(tol, 1e-6)
            break
        seen.add(key)
        cuts.append(Cut(sub.scenario, sub.lift))
    if not trace.converged:
        logger.warning("CCG stopped after %d iterations with gap %.3g",
                       len(trace.iterations), trace.iterations[-1].gap)
    return best, trace, cuts


def run_ccg(problem: HardeningProblem, tol: float = 1e-3, max_iter: int = 50
            ) -> tuple[HardeningPlan, CCGTrace]:
    """Optimal hardening and storage plan with its worst expected load-shedding cost"""
    (x, x_e), trace, _ = _iterate(problem, tol, max_iter)
    return _plan(problem, x, x_e, trace), trace


def evaluate_plan(problem: HardeningProblem, x: np.ndarray, x_e: np.ndarray,
                  tol: float = 1e-4, max_iter: int = 50) -> tuple[float, CCGTrace]:
    """Worst-case expected shedding cost of a fixed plan under the problem's ambiguity set"""
    _, trace, _ = _iterate(problem, tol, max_iter, np.asarray(x, float), np.asarray(x_e, float))
    return trace.upper_bound, trace


def _plan(problem: HardeningProblem, x: np.ndarray, x_e: np.ndarray,
          trace: CCGTrace) -> HardeningPlan:
    p = problem
    lines, pipes = p.index.from_vector(x)
    last = trace.iterations[-1]
    return HardeningPlan(
        instance=p.net.name, level=p.level, ambiguity=p.ambiguity,
        hardened_lines=lines, hardened_pipelines=pipes,
        storage={s.id: float(v) for s, v in zip(p.net.stations, x_e)},
        hardening_cost=float(p.index.costs @ x), welsc=last.upper_bound,
        lower_bound=last.lower_bound, gap=last.gap, converged=trace.converged,
        gamma1=p.lpcas.gamma1, gamma2=p.lpcas.gamma2, n_l=p.lpcas.n_l,
        hlcc=[cone.status(x) for cone in p.cones],
    )


def support_scenarios(index: ComponentIndex, n_l: int) -> Iterator[ScenarioRealization]:
    """Every binary scenario with at most n_l failed entries"""
    n, T = index.n_entries, index.periods
    for count in range(0, min(n_l, n) + 1):
        for chosen in itertools.combinations(range(n), count):
            a = np.zeros(n)
            a[list(chosen)] = 1.0
            yield ScenarioRealization.from_entries(a, T)


def solve_with_scenarios(problem: HardeningProblem,
                         scenarios: Iterable[ScenarioRealization],
                         fixed_x: Optional[np.ndarray] = None) -> tuple[float, np.ndarray]:
    """Master problem with every given scenario as a cut; exact when the list is the whole
    support"""
    cuts = [Cut(s) for s in scenarios]
    dual_bound = problem.options.dual_bound_factor * max(problem.template.max_cost, 1.0)
    master, sol, _ = solve_master(problem, cuts, dual_bound, fixed_x)
    return master.value(sol), np.rint(sol.z[master.x])
