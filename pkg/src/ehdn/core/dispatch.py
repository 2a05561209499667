"""Post-disaster dispatch - LinDistFlow grid, hydrogen flows, storage and conversion

The dispatch LP is kept in a fixed standard form so the same matrices serve the primal
recourse blocks of the master problem and the dualized subproblem:

    min h'y  s.t.  A_ub y <= b_ub0 + U u,   A_eq y = b_eq0 + E x_E,   y_N >= 0,  y_F free

where u are the component states per (component, period) entry and x_E the initial storage.
"""

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
import pandas as pd
import scipy.sparse as sp

from ehdn.core.components import ComponentIndex
from ehdn.core.model_ir import LinExpr, ModelIR
from ehdn.core.solver import InfeasibleModelError, solve_model
from ehdn.models.config import SolverOptions
from ehdn.models.network import Network

logger = logging.getLogger(__name__)

BALANCE_TOL = 1e-6


class DispatchModelError(Exception):
    """Raised when the dispatch model is malformed or structurally infeasible"""

    pass


@dataclass(frozen=True)
class ScenarioRealization:
    """Binary failure matrix (component x period); 1 = destroyed in that period"""
    a: np.ndarray

    @classmethod
    def from_entries(cls, entries: np.ndarray, periods: int) -> "ScenarioRealization":
        return cls(np.rint(np.asarray(entries, dtype=float)).reshape(-1, periods))

    @classmethod
    def healthy(cls, components: int, periods: int) -> "ScenarioRealization":
        return cls(np.zeros((components, periods)))

    @property
    def entries(self) -> np.ndarray:
        return self.a.ravel()

    @property
    def failures(self) -> int:
        return int(self.a.sum())

    def key(self) -> bytes:
        return np.packbits(self.a.astype(bool)).tobytes() + bytes([self.a.shape[1]])

    def labels(self, index: ComponentIndex) -> list[str]:
        return [index.label(int(i)) for i in np.flatnonzero(self.entries > 0.5)]

    @classmethod
    def from_labels(cls, labels: Iterable[str], index: ComponentIndex) -> "ScenarioRealization":
        """Inverse of labels(): 'L1@0' fails component L1 in period 0"""
        a = np.zeros((index.n_components, index.periods))
        for label in labels:
            component, _, period = label.rpartition("@")
            a[index.position(component), int(period)] = 1.0
        return cls(a)


def failure_to_states(a: np.ndarray, u0: Optional[np.ndarray] = None) -> np.ndarray:
    """u_t = u_{t-1} * (1 - a_t): a destroyed component stays destroyed"""
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    u_prev = np.ones(a.shape[0]) if u0 is None else np.asarray(u0, dtype=float)
    u = np.empty_like(a)
    for t in range(a.shape[1]):
        u_prev = u_prev * (1.0 - a[:, t])
        u[:, t] = u_prev
    return u


@dataclass(frozen=True)
class DispatchOptions:
    storage: bool = True
    conversion: bool = True


class _Rows:
    """COO accumulator for one constraint family"""

    def __init__(self):
        self.rows: list[int] = []
        self.cols: list[int] = []
        self.vals: list[float] = []
        self.rhs: list[float] = []
        self.ext: list[tuple[int, int, float]] = []
        self.names: list[str] = []

    def add(self, terms: list[tuple[int, float]], rhs: float, name: str,
            ext: Optional[tuple[int, float]] = None) -> int:
        r = len(self.rhs)
        for j, v in terms:
            if v != 0.0:
                self.rows.append(r)
                self.cols.append(j)
                self.vals.append(v)
        self.rhs.append(rhs)
        self.names.append(name)
        if ext is not None and ext[1] != 0.0:
            self.ext.append((r, ext[0], ext[1]))
        return r

    def matrix(self, n: int) -> sp.csr_matrix:
        return sp.csr_matrix((self.vals, (self.rows, self.cols)), shape=(len(self.rhs), n))

    def ext_matrix(self, n: int) -> sp.csr_matrix:
        if not self.ext:
            return sp.csr_matrix((len(self.rhs), n))
        r, c, v = zip(*self.ext)
        return sp.csr_matrix((v, (r, c)), shape=(len(self.rhs), n))


@dataclass
class DispatchTemplate:
    """Dispatch LP in standard form for one network; u and x_E enter only the right-hand side"""
    h: np.ndarray
    free: np.ndarray
    a_ub: sp.csr_matrix
    b_ub0: np.ndarray
    u_ub: sp.csr_matrix
    a_eq: sp.csr_matrix
    b_eq0: np.ndarray
    e_eq: sp.csr_matrix
    names: list[str]
    blocks: dict[str, np.ndarray]
    labels: dict[str, list[str]]
    ub_names: list[str] = field(default_factory=list)
    eq_names: list[str] = field(default_factory=list)
    storage_max: np.ndarray = field(default_factory=lambda: np.zeros(0))
    periods: int = 1
    max_cost: float = 0.0
    price_ratio: float = 1.0

    @property
    def n_vars(self) -> int:
        return len(self.h)

    @property
    def n_ub(self) -> int:
        return self.a_ub.shape[0]

    @property
    def n_eq(self) -> int:
        return self.a_eq.shape[0]

    @property
    def n_entries(self) -> int:
        return self.u_ub.shape[1]

    @property
    def n_stations(self) -> int:
        return self.e_eq.shape[1]

    def rhs(self, u: np.ndarray, x_e: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        u = np.asarray(u, dtype=float).ravel()
        x_e = np.asarray(x_e, dtype=float).ravel()
        if u.size != self.n_entries:
            raise DispatchModelError(f"expected {self.n_entries} state entries, got {u.size}")
        if x_e.size != self.n_stations:
            raise DispatchModelError(f"expected {self.n_stations} storage values, got {x_e.size}")
        return self.b_ub0 + self.u_ub @ u, self.b_eq0 + self.e_eq @ x_e

    def add_recourse(self, model: ModelIR, u: np.ndarray, x_e_vars: np.ndarray,
                     name: str = "y") -> np.ndarray:
        """Add one copy of the dispatch variables and rows at fixed states u; storage
        allocation stays a model variable"""
        y = model.add_vars(name, self.n_vars, lb=np.where(self.free, -np.inf, 0.0))
        b_ub, _ = self.rhs(u, np.zeros(self.n_stations))
        model.add_rows([(self.a_ub, y)], -np.inf, b_ub, name=f"{name}.ub")
        model.add_rows([(self.a_eq, y), (-self.e_eq, x_e_vars)], self.b_eq0, self.b_eq0,
                       name=f"{name}.eq")
        return y

    def cost(self, y_vars: np.ndarray) -> LinExpr:
        return LinExpr({int(j): float(v) for j, v in zip(y_vars, self.h) if v != 0.0})

    def dual_scale(self) -> float:
        """Rough bound on the marginal value of any row, used to seed dual big-M bounds"""
        top = float(np.abs(self.h).max()) if self.h.size else 0.0
        return max(top, 1.0) * self.price_ratio


def build_template(net: Network, index: Optional[ComponentIndex] = None,
                   options: DispatchOptions = DispatchOptions()) -> DispatchTemplate:
    """Standard-form dispatch LP for every period of the horizon"""
    index = index or ComponentIndex(net)
    T = net.periods
    dt = net.horizon.period_hours
    vs = net.voltage
    names: list[str] = []
    free: list[bool] = []
    h: list[float] = []
    blocks: dict[str, np.ndarray] = {}
    labels: dict[str, list[str]] = {}

    def block(key: str, ids: list[str], is_free: bool = False,
              cost: Optional[np.ndarray] = None) -> np.ndarray:
        start = len(names)
        for k, i in enumerate(ids):
            for t in range(T):
                names.append(f"{key}[{i},{t}]")
                free.append(is_free)
                h.append(0.0 if cost is None else float(cost[k, t]))
        blocks[key] = np.arange(start, len(names)).reshape(len(ids), T)
        labels[key] = list(ids)
        return blocks[key]

    grid_pos = {n.id: k for k, n in enumerate(net.grid_nodes)}
    h2_pos = {n.id: k for k, n in enumerate(net.h2_nodes)}
    p_load = np.array([net.active_load(n) for n in net.grid_nodes]).reshape(-1, T)
    q_load = np.array([net.reactive_load(n) for n in net.grid_nodes]).reshape(-1, T)
    g_load = np.array([net.hydrogen_load(n) for n in net.h2_nodes]).reshape(-1, T)

    shed_nodes = [k for k, n in enumerate(net.grid_nodes) if p_load[k].any()]
    dg_nodes = [k for k, n in enumerate(net.grid_nodes) if n.has_dg]
    subs = [k for k, n in enumerate(net.grid_nodes) if n.is_substation]
    h2_shed = [k for k, n in enumerate(net.h2_nodes) if g_load[k].any()]
    feeds = [k for k, n in enumerate(net.h2_nodes) if n.has_transmission_feed]
    st_ids = [s.id for s in net.stations]

    e_cost = np.array([[dt * net.costs.shed_cost_kwh * net.grid_nodes[k].shed_weight] * T
                       for k in shed_nodes]).reshape(-1, T)
    h_cost = np.array([[dt * net.costs.shed_cost_m3 * net.h2_nodes[k].shed_weight] * T
                       for k in h2_shed]).reshape(-1, T)

    line_ids = [ln.id for ln in net.grid_lines]
    pl = block("p_line", line_ids, True)
    ql = block("q_line", line_ids, True)
    v = block("v_sqr", [n.id for n in net.grid_nodes])
    pls = block("p_shed", [net.grid_nodes[k].id for k in shed_nodes], cost=e_cost)
    pg = block("p_dg", [net.grid_nodes[k].id for k in dg_nodes])
    qg = block("q_dg", [net.grid_nodes[k].id for k in dg_nodes])
    psub = block("p_sub", [net.grid_nodes[k].id for k in subs])
    qsub = block("q_sub", [net.grid_nodes[k].id for k in subs])
    fl = block("f_pipe", [p.id for p in net.pipelines], True)
    gls = block("g_shed", [net.h2_nodes[k].id for k in h2_shed], cost=h_cost)
    fut = block("f_feed", [net.h2_nodes[k].id for k in feeds])
    fch = block("f_charge", st_ids)
    fdis = block("f_discharge", st_ids)
    fh2p = block("f_h2p", st_ids)
    fp2h = block("f_p2h", st_ids)
    lev = block("storage", st_ids)
    qfc = block("q_fc", st_ids)
    n = len(names)

    ub, eq = _Rows(), _Rows()

    def cap(var: int, value: float, name: str) -> None:
        ub.add([(var, 1.0)], value, name)

    n_lines = len(net.grid_lines)
    vmax2, vmin2 = vs.vmax ** 2, vs.vmin ** 2
    s_base = vs.base_kva * vs.v0
    for l, line in enumerate(net.grid_lines):
        i, j = grid_pos[line.from_node], grid_pos[line.to_node]
        drop_max = (line.r_pu * line.p_max_kw + line.x_pu * line.q_max_kvar) / s_base
        big_m = (vmax2 - vmin2) + drop_max
        scale = s_base / max(line.r_pu, line.x_pu, 1e-9)
        for t in range(T):
            e = index.entry(l, t)
            for sign in (1.0, -1.0):
                ub.add([(pl[l, t], sign)], 0.0, f"p_cap[{line.id},{t}]", (e, line.p_max_kw))
                ub.add([(ql[l, t], sign)], 0.0, f"q_cap[{line.id},{t}]", (e, line.q_max_kvar))
                terms = [(v[i, t], sign * scale), (v[j, t], -sign * scale),
                         (pl[l, t], -sign * scale * line.r_pu / s_base),
                         (ql[l, t], -sign * scale * line.x_pu / s_base)]
                ub.add(terms, scale * big_m, f"v_drop[{line.id},{t}]", (e, -scale * big_m))

    for k, node in enumerate(net.grid_nodes):
        for t in range(T):
            cap(v[k, t], vmax2, f"v_max[{node.id},{t}]")
            ub.add([(v[k, t], -1.0)], -vmin2, f"v_min[{node.id},{t}]")
    for a, k in enumerate(shed_nodes):
        for t in range(T):
            cap(pls[a, t], p_load[k, t], f"p_shed_max[{net.grid_nodes[k].id},{t}]")
    for a, k in enumerate(dg_nodes):
        node = net.grid_nodes[k]
        for t in range(T):
            cap(pg[a, t], node.dg_p_max_kw, f"p_dg_max[{node.id},{t}]")
            cap(qg[a, t], node.dg_q_max_kvar, f"q_dg_max[{node.id},{t}]")
    for a, k in enumerate(subs):
        node = net.grid_nodes[k]
        for t in range(T):
            cap(psub[a, t], node.sub_p_max_kw, f"p_sub_max[{node.id},{t}]")
            cap(qsub[a, t], node.sub_q_max_kvar, f"q_sub_max[{node.id},{t}]")
    for p, pipe in enumerate(net.pipelines):
        for t in range(T):
            e = index.entry(n_lines + p, t)
            for sign in (1.0, -1.0):
                ub.add([(fl[p, t], sign)], 0.0, f"f_cap[{pipe.id},{t}]", (e, pipe.f_max_m3h))
    for a, k in enumerate(h2_shed):
        for t in range(T):
            cap(gls[a, t], g_load[k, t], f"g_shed_max[{net.h2_nodes[k].id},{t}]")
    for a, k in enumerate(feeds):
        node = net.h2_nodes[k]
        for t in range(T):
            cap(fut[a, t], node.feed_max_m3h, f"f_feed_max[{node.id},{t}]")

    storage_max = np.array([s.storage_max_m3 if options.storage else 0.0 for s in net.stations])
    for s, st in enumerate(net.stations):
        conv = options.conversion
        for t in range(T):
            cap(fch[s, t], st.charge_max_m3h if options.storage else 0.0,
                f"charge_max[{st.id},{t}]")
            cap(fdis[s, t], st.discharge_max_m3h if options.storage else 0.0,
                f"discharge_max[{st.id},{t}]")
            cap(fh2p[s, t], st.fuel_cell_max_kw / st.beta_h2p if conv else 0.0,
                f"h2p_max[{st.id},{t}]")
            cap(fp2h[s, t], st.electrolyzer_max_kw / st.beta_p2h if conv else 0.0,
                f"p2h_max[{st.id},{t}]")
            cap(lev[s, t], storage_max[s], f"storage_max[{st.id},{t}]")
            cap(qfc[s, t], st.q_max_kvar if conv else 0.0, f"q_fc_max[{st.id},{t}]")

    stations_at_grid: dict[int, list[int]] = {}
    stations_at_h2: dict[int, list[int]] = {}
    for s, st in enumerate(net.stations):
        stations_at_grid.setdefault(grid_pos[st.grid_node], []).append(s)
        stations_at_h2.setdefault(h2_pos[st.hydrogen_node], []).append(s)
    shed_of = {k: a for a, k in enumerate(shed_nodes)}
    dg_of = {k: a for a, k in enumerate(dg_nodes)}
    sub_of = {k: a for a, k in enumerate(subs)}

    for k, node in enumerate(net.grid_nodes):
        ratio = node.q_load_kvar / node.p_load_kw if node.p_load_kw > 0 else 0.0
        for t in range(T):
            pt: list[tuple[int, float]] = []
            qt: list[tuple[int, float]] = []
            for l, line in enumerate(net.grid_lines):
                if grid_pos[line.to_node] == k:
                    pt.append((pl[l, t], 1.0))
                    qt.append((ql[l, t], 1.0))
                if grid_pos[line.from_node] == k:
                    pt.append((pl[l, t], -1.0))
                    qt.append((ql[l, t], -1.0))
            if k in dg_of:
                pt.append((pg[dg_of[k], t], 1.0))
                qt.append((qg[dg_of[k], t], 1.0))
            if k in sub_of:
                pt.append((psub[sub_of[k], t], 1.0))
                qt.append((qsub[sub_of[k], t], 1.0))
            for s in stations_at_grid.get(k, []):
                st = net.stations[s]
                pt += [(fh2p[s, t], st.beta_h2p), (fp2h[s, t], -st.beta_p2h)]
                qt.append((qfc[s, t], 1.0))
            if k in shed_of:
                pt.append((pls[shed_of[k], t], 1.0))
                qt.append((pls[shed_of[k], t], ratio))
            eq.add(pt, p_load[k, t], f"p_balance[{node.id},{t}]")
            eq.add(qt, q_load[k, t], f"q_balance[{node.id},{t}]")
            if node.is_substation:
                eq.add([(v[k, t], 1.0)], vs.v0 ** 2, f"v_root[{node.id},{t}]")

    h2_shed_of = {k: a for a, k in enumerate(h2_shed)}
    feed_of = {k: a for a, k in enumerate(feeds)}
    for k, node in enumerate(net.h2_nodes):
        for t in range(T):
            terms: list[tuple[int, float]] = []
            for p, pipe in enumerate(net.pipelines):
                if h2_pos[pipe.to_node] == k:
                    terms.append((fl[p, t], 1.0))
                if h2_pos[pipe.from_node] == k:
                    terms.append((fl[p, t], -1.0))
            if k in feed_of:
                terms.append((fut[feed_of[k], t], 1.0))
            if k in h2_shed_of:
                terms.append((gls[h2_shed_of[k], t], 1.0))
            for s in stations_at_h2.get(k, []):
                terms += [(fch[s, t], -1.0), (fdis[s, t], 1.0), (fh2p[s, t], -1.0),
                          (fp2h[s, t], 1.0)]
            eq.add(terms, g_load[k, t], f"h2_balance[{node.id},{t}]")

    for s, st in enumerate(net.stations):
        for t in range(T):
            terms = [(lev[s, t], 1.0), (fch[s, t], -st.eta_charge * dt),
                     (fdis[s, t], dt / st.eta_discharge)]
            if t > 0:
                terms.append((lev[s, t - 1], -1.0))
            eq.add(terms, 0.0, f"storage_dyn[{st.id},{t}]", (s, 1.0) if t == 0 else None)

    template = DispatchTemplate(
        h=np.array(h), free=np.array(free, dtype=bool),
        a_ub=ub.matrix(n), b_ub0=np.array(ub.rhs), u_ub=ub.ext_matrix(index.n_entries),
        a_eq=eq.matrix(n), b_eq0=np.array(eq.rhs), e_eq=eq.ext_matrix(len(net.stations)),
        names=names, blocks=blocks, labels=labels, ub_names=ub.names, eq_names=eq.names,
        storage_max=storage_max, periods=T,
        max_cost=float((e_cost * p_load[shed_nodes]).sum() + (h_cost * g_load[h2_shed]).sum()),
        price_ratio=max([1.0] + [max(s.beta_h2p, 1.0 / s.beta_p2h) for s in net.stations]),
    )
    logger.debug("dispatch template: %d variables, %d inequality and %d equality rows",
                 template.n_vars, template.n_ub, template.n_eq)
    return template


@dataclass
class DispatchProblem:
    """Dispatch LP with states and storage allocation fixed"""
    template: DispatchTemplate
    u: np.ndarray
    x_e: np.ndarray
    b_ub: np.ndarray
    b_eq: np.ndarray


def build_dispatch(net: Network, x_e: np.ndarray, u: np.ndarray,
                   template: Optional[DispatchTemplate] = None,
                   options: DispatchOptions = DispatchOptions()) -> DispatchProblem:
    """Fix the storage allocation and component states of the dispatch LP

    Raises:
        DispatchModelError: Allocation outside station capacities, or wrong dimensions
    """
    template = template or build_template(net, options=options)
    x_e = np.asarray(x_e, dtype=float).ravel()
    if x_e.size and ((x_e < -1e-9).any() or (x_e > template.storage_max + 1e-6).any()):
        raise DispatchModelError("storage allocation outside [0, storage_max]")
    u = np.asarray(u, dtype=float)
    b_ub, b_eq = template.rhs(u, x_e)
    return DispatchProblem(template, u.ravel(), x_e, b_ub, b_eq)


@dataclass
class DispatchSolution:
    objective: float
    y: np.ndarray
    problem: DispatchProblem

    def __getitem__(self, key: str) -> np.ndarray:
        """Values of one variable family shaped (element, period)"""
        return self.y[self.problem.template.blocks[key]]

    def balance_residual(self) -> float:
        t = self.problem.template
        return float(np.abs(t.a_eq @ self.y - self.problem.b_eq).max(initial=0.0))

    def shed_cost(self) -> tuple[float, float]:
        """(electric, hydrogen) parts of the objective"""
        t = self.problem.template
        e = float(t.h[t.blocks["p_shed"]].ravel() @ self["p_shed"].ravel())
        g = float(t.h[t.blocks["g_shed"]].ravel() @ self["g_shed"].ravel())
        return e, g

    def to_frame(self) -> pd.DataFrame:
        """Long table of (variable, element, period, value)"""
        t = self.problem.template
        records = []
        for key, idx in t.blocks.items():
            for k, elem in enumerate(t.labels[key]):
                for p in range(t.periods):
                    records.append((key, elem, p, float(self.y[idx[k, p]])))
        columns = ["variable", "element", "period", "value"]
        return pd.DataFrame.from_records(records, columns=columns)


def solve_dispatch(problem: DispatchProblem,
                   options: Optional[SolverOptions] = None) -> DispatchSolution:
    """Solve the fixed dispatch LP

    Raises:
        DispatchModelError: The LP is infeasible, which shedding rules out for a sound model
    """
    t = problem.template
    model = ModelIR("dispatch")
    y = model.add_vars("y", t.n_vars, lb=np.where(t.free, -np.inf, 0.0))
    model.add_rows([(t.a_ub, y)], -np.inf, problem.b_ub, name="ub")
    model.add_rows([(t.a_eq, y)], problem.b_eq, problem.b_eq, name="eq")
    model.set_objective(t.cost(y))
    try:
        sol = solve_model(model, options)
    except InfeasibleModelError as e:
        raise DispatchModelError(f"dispatch LP infeasible despite load shedding: {e}")
    out = DispatchSolution(sol.objective, sol.z[y], problem)
    residual = out.balance_residual()
    if residual > BALANCE_TOL * max(1.0, float(np.abs(problem.b_eq).max(initial=0.0))):
        logger.warning("dispatch balance residual %.3g", residual)
    return out


def dispatch_cost(net: Network, template: DispatchTemplate, a: np.ndarray, x_e: np.ndarray,
                  options: Optional[SolverOptions] = None) -> float:
    """Optimal shedding cost for a failure matrix a (component x period)"""
    u = failure_to_states(np.asarray(a, dtype=float).reshape(-1, template.periods))
    return solve_dispatch(build_dispatch(net, x_e, u, template), options).objective


def add_dual_rows(model: ModelIR, template: DispatchTemplate, name: str = "dual"):
    """Dual feasibility rows of the dispatch LP: lambda >= 0 on inequality rows, nu free on
    equality rows, with h + A_ub'lambda - A_eq'nu >= 0 on sign-constrained columns and = 0
    on free columns"""
    lam = model.add_vars(f"{name}.lambda", template.n_ub)
    nu = model.add_vars(f"{name}.nu", template.n_eq, lb=-np.inf)
    hi = np.where(template.free, -template.h, np.inf)
    model.add_rows([(template.a_ub.T.tocsr(), lam), (-template.a_eq.T.tocsr(), nu)],
                   -template.h, hi, name=f"{name}.feas")
    return lam, nu


def solve_dual(problem: DispatchProblem, options: Optional[SolverOptions] = None) -> float:
    """Optimal value of the dispatch dual at fixed states, for strong-duality checks"""
    t = problem.template
    model = ModelIR("dispatch_dual")
    lam, nu = add_dual_rows(model, t)
    obj = LinExpr()
    for j, b in zip(lam, problem.b_ub):
        obj.add_term(j, -b)
    for j, b in zip(nu, problem.b_eq):
        obj.add_term(j, b)
    model.set_objective(obj, "max")
    return solve_model(model, options).objective
