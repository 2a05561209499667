"""Hydrogen-leakage chance constraint - worst-case probability and its cone form"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ehdn.core.components import ComponentIndex
from ehdn.core.fragility import EntryAffineMap, SecondMomentMap
from ehdn.core.model_ir import LinExpr, ModelIR
from ehdn.core.polynomial import BinaryQuadratic
from ehdn.core.solver import InfeasibleModelError, solve_model
from ehdn.models.config import SolverOptions
from ehdn.models.results import HlccStatus, MinBudgetResult

logger = logging.getLogger(__name__)


class HlccError(Exception):
    """Raised when a chance constraint is malformed"""

    pass


class HlccInfeasibleError(HlccError):
    """Raised when the failure threshold cannot be met"""

    pass


@dataclass
class HlccSpec:
    """P(s'a <= k_cc) >= 1 - eps for every distribution in the moment set"""
    s: np.ndarray
    k_cc: float
    eps: float
    gamma1: float
    gamma2: float
    group: str = "ssa"

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float)
        if (self.s < 0).any() or not self.s.any():
            raise HlccError(f"selection vector of '{self.group}' must be nonnegative and nonzero")
        if not 0 < self.eps < 1:
            raise HlccError(f"risk level must be in (0, 1), got {self.eps}")
        if self.k_cc < 0:
            raise HlccError(f"failure threshold must be >= 0, got {self.k_cc}")
        if self.gamma1 < 0 or self.gamma2 < self.gamma1:
            raise HlccError("error ratios must satisfy gamma2 >= gamma1 >= 0")

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.s)


def ssa_specs(index: ComponentIndex, k_cc: float, eps: float, gamma1: float,
              gamma2: float) -> list[HlccSpec]:
    """One constraint per SSA group, counting failures over every period"""
    specs = []
    for group, entries in index.ssa_groups().items():
        s = np.zeros(index.n_entries)
        s[entries] = 1.0
        specs.append(HlccSpec(s, k_cc, eps, gamma1, gamma2, group))
    return specs


def cantelli_inf(mu: float, sigma: float, k: float) -> float:
    """Lower bound on P(xi <= k) for any xi with mean mu and standard deviation sigma"""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if k < mu:
        return 0.0
    gap = (k - mu) ** 2
    if gap == 0.0 and sigma == 0.0:
        return 1.0
    return gap / (sigma ** 2 + gap)


def worst_case_prob(mean: float, q: float, gamma1: float, gamma2: float, k_cc: float) -> float:
    """Infimum of the one-sided Chebyshev bound over all (mean shift, variance) pairs with
    shift^2 <= gamma1 q and shift^2 + variance <= gamma2 q

    Raises:
        HlccInfeasibleError: The expected failure count already exceeds k_cc
    """
    if q < 0:
        raise ValueError("second-moment term must be >= 0")
    slack = k_cc - mean
    if slack < 0:
        raise HlccInfeasibleError(
            f"expected failures {mean:.4g} exceed the threshold {k_cc:.4g}"
        )
    shift = math.sqrt(gamma1 * q)
    spread = gamma2 * q
    if spread == 0.0:
        return 1.0
    if shift >= slack:
        return 0.0
    stationary = spread / slack
    if stationary <= shift:
        return (slack ** 2 - spread) / slack ** 2
    d = (slack - shift) ** 2
    return d / (d + spread - shift ** 2)


def hlcc_coefficient(gamma1: float, gamma2: float, eps: float) -> tuple[float, str]:
    """Multiplier of sqrt(s'Qs) in the cone, with the branch that produced it"""
    if not 0 < eps < 1:
        raise HlccError(f"risk level must be in (0, 1), got {eps}")
    ratio = gamma1 / gamma2 if gamma2 > 0 else 0.0
    if ratio <= eps:
        return math.sqrt(gamma1) + math.sqrt((1 - eps) / eps * (gamma2 - gamma1)), "mean"
    return math.sqrt(gamma2 / eps), "variance"


@dataclass
class HlccCone:
    """kappa * ||v0 + V x|| <= k_cc - (m0 + m'x) over the component vector x"""
    spec: HlccSpec
    kappa: float
    branch: str
    mean_const: float
    mean_coef: dict[int, float]
    rows_const: np.ndarray
    rows_coef: list[dict[int, float]]
    quadratic: BinaryQuadratic

    def mean(self, x: np.ndarray) -> float:
        return self.mean_const + sum(v * x[c] for c, v in self.mean_coef.items())

    def second_moment(self, x: np.ndarray) -> float:
        """s'(Q(x) + diag variance(x))s from the monomial expansion"""
        return max(self.quadratic.evaluate(x), 0.0)

    def factor_norm(self, x: np.ndarray) -> float:
        v = self.rows_const.copy()
        for r, coefs in enumerate(self.rows_coef):
            v[r] += sum(g * x[c] for c, g in coefs.items())
        return float(np.linalg.norm(v))

    def lhs(self, x: np.ndarray) -> float:
        return self.mean(x) + self.kappa * math.sqrt(self.second_moment(x))

    def satisfied(self, x: np.ndarray, tol: float = 1e-7) -> bool:
        return self.lhs(x) <= self.spec.k_cc + tol

    def status(self, x: np.ndarray) -> HlccStatus:
        mean, q = self.mean(x), self.second_moment(x)
        try:
            prob = worst_case_prob(mean, q, self.spec.gamma1, self.spec.gamma2, self.spec.k_cc)
        except HlccInfeasibleError:
            prob = 0.0
        return HlccStatus(group=self.spec.group, mean=mean, spread=math.sqrt(q),
                          lhs=self.lhs(x), k_cc=self.spec.k_cc, worst_case_prob=prob,
                          satisfied=self.satisfied(x))

    def add_to(self, model: ModelIR, x_vars: np.ndarray) -> None:
        rows = []
        for const, coefs in zip(self.rows_const, self.rows_coef):
            e = LinExpr(const=self.kappa * const)
            for c, g in coefs.items():
                e.add_term(x_vars[c], self.kappa * g)
            rows.append(e)
        bound = LinExpr(const=self.spec.k_cc - self.mean_const)
        for c, v in self.mean_coef.items():
            bound.add_term(x_vars[c], -v)
        if rows:
            model.add_cone(rows, bound, name=f"hlcc[{self.spec.group}]")
        else:
            model.add_constraint(bound, lo=0.0, name=f"hlcc[{self.spec.group}]")


def reformulate_hlcc(spec: HlccSpec, mean: EntryAffineMap, second: SecondMomentMap,
                     variance: Optional[EntryAffineMap] = None) -> HlccCone:
    """Cone form of the chance constraint with an affine factorization of s'Q(x)s

    Q restricted to the selected entries is factored as L L'; since the slopes k(x) are
    affine in x, L'(s * k(x)) is an affine vector. Variance rows sqrt(variance_i(x)) are
    exact for binary x.
    """
    kappa, branch = hlcc_coefficient(spec.gamma1, spec.gamma2, spec.eps)
    idx = spec.support
    s = spec.s[idx]
    comp = mean.comp[idx]

    mean_coef: dict[int, float] = {}
    for c, g in zip(comp, s * mean.coef[idx]):
        if g != 0.0:
            mean_coef[int(c)] = mean_coef.get(int(c), 0.0) + float(g)
    mean_const = float(s @ mean.v0[idx])

    q = second.q[np.ix_(idx, idx)]
    eig, vec = np.linalg.eigh(0.5 * (q + q.T))
    keep = eig > 1e-12 * max(1.0, float(eig.max(initial=0.0)))
    factor = vec[:, keep] * np.sqrt(eig[keep])
    k0 = s * second.k0[idx]
    dk = s * (second.k1[idx] - second.k0[idx])
    rows_const = list(factor.T @ k0)
    rows_coef: list[dict[int, float]] = []
    for r in range(factor.shape[1]):
        coefs: dict[int, float] = {}
        for c, g in zip(comp, factor[:, r] * dk):
            if g != 0.0:
                coefs[int(c)] = coefs.get(int(c), 0.0) + float(g)
        rows_coef.append(coefs)
    if variance is not None:
        r0 = s * np.sqrt(np.maximum(variance.v0[idx], 0.0))
        r1 = s * np.sqrt(np.maximum(variance.v1[idx], 0.0))
        for c, a, b in zip(comp, r0, r1):
            if a == 0.0 and b == 0.0:
                continue
            rows_const.append(float(a))
            rows_coef.append({int(c): float(b - a)} if b != a else {})

    quadratic = second.quadratic_form(idx, s, variance)
    logger.debug("chance constraint '%s': kappa=%.4g (%s branch), %d cone rows",
                 spec.group, kappa, branch, len(rows_coef))
    return HlccCone(spec, kappa, branch, mean_const, mean_coef, np.array(rows_const),
                    rows_coef, quadratic)


def min_budget(cones: Sequence[HlccCone], index: ComponentIndex, instance: str = "",
               level: Optional[int] = None,
               options: Optional[SolverOptions] = None) -> MinBudgetResult:
    """Cheapest hardening set satisfying every chance constraint"""
    full = np.ones(index.n_components)
    short = [c for c in cones if not c.satisfied(full)]
    if short:
        probs = {c.spec.group: c.status(full).worst_case_prob for c in cones}
        groups = ", ".join(c.spec.group for c in short)
        return MinBudgetResult(
            instance=instance, level=level, feasible=False, worst_case_prob=probs,
            message=f"risk target unreachable with every pipeline hardened ({groups})",
        )

    model = ModelIR("min_budget")
    x = model.add_vars("x", index.n_components, binary=True)
    involved = set()
    for cone in cones:
        involved.update(cone.mean_coef)
        for coefs in cone.rows_coef:
            involved.update(coefs)
    for c in range(index.n_components):
        if c not in involved:
            model.fix(x[c], 0.0)
    for cone in cones:
        cone.add_to(model, x)
    model.set_objective(LinExpr({int(x[c]): float(index.costs[c])
                                 for c in range(index.n_components)}))
    try:
        sol = solve_model(model, options)
    except InfeasibleModelError as e:
        return MinBudgetResult(instance=instance, level=level, feasible=False, message=str(e))

    chosen = np.rint(sol.z[x])
    _, pipes = index.from_vector(chosen)
    probs = {c.spec.group: c.status(chosen).worst_case_prob for c in cones}
    budget = float(index.costs @ chosen)
    logger.info("minimum budget %.6g with %d hardened pipelines", budget, len(pipes))
    return MinBudgetResult(instance=instance, level=level, feasible=True, budget=budget,
                           hardened_pipelines=pipes, worst_case_prob=probs)
