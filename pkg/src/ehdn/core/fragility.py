"""Fragility curves, their linearization and the decision-dependent failure moments"""

import logging
from dataclasses import dataclass
from typing import Optional, Protocol, Union

import numpy as np
import scipy.sparse as sp
from scipy.stats import norm

from ehdn.core.components import ComponentIndex
from ehdn.core.polynomial import BinaryQuadratic
from ehdn.models.fragility import LineFragility, PipelineFragility
from ehdn.models.network import GridLine, Network, Pipeline

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

PROB_TOL = 1e-9


class FragilityModelError(Exception):
    """Raised when fragility data yields probabilities outside [0, 1]"""

    pass


def _table(table: list[tuple[float, float]], v: ArrayLike) -> np.ndarray:
    xs, ys = zip(*table)
    return np.interp(v, xs, ys)


def pole_fragility(v: ArrayLike, hardened: bool, p: LineFragility) -> ArrayLike:
    """min(a * exp(b * v), 1) for one pole"""
    return p.state(hardened).pole.sample(np.asarray(v, dtype=float))


def wire_fragility(v: ArrayLike, hardened: bool, p: LineFragility) -> ArrayLike:
    """max(direct(v), chi * indirect(v)) for one wire segment"""
    state = p.state(hardened)
    direct = _table(p.direct, v)
    indirect = state.chi * _table(state.indirect, v)
    return np.clip(np.maximum(direct, indirect), 0.0, 1.0)


def line_failure_prob(v: ArrayLike, hardened: bool, line: GridLine, p: LineFragility) -> ArrayLike:
    """Line fails if any pole or wire segment fails"""
    survive = (1.0 - pole_fragility(v, hardened, p)) ** line.poles
    survive = survive * (1.0 - wire_fragility(v, hardened, p)) ** line.segments
    return np.clip(1.0 - survive, 0.0, 1.0)


def segment_fragility(accumulated: ArrayLike, hardened: bool, p: PipelineFragility) -> ArrayLike:
    """Lognormal curve of accumulated rainfall; zero rainfall gives zero"""
    curve = p.state(hardened)
    r = np.asarray(accumulated, dtype=float)
    safe = np.where(r > 0, r, 1.0)
    prob = norm.cdf(np.log(curve.z * safe) / curve.sigma)
    return np.where(r > 0, prob, 0.0)


def pipeline_failure_prob(rain_history: ArrayLike, hardened: bool, pipe: Pipeline,
                          p: PipelineFragility) -> float:
    """Failure probability after the given rainfall history (mm/h per period up to t)"""
    history = np.asarray(rain_history, dtype=float)
    if (history < 0).any():
        raise ValueError("rainfall must be >= 0")
    seg = segment_fragility(history.sum(), hardened, p)
    return float(np.clip(1.0 - (1.0 - seg) ** pipe.segments, 0.0, 1.0))


class FragilityCurve(Protocol):
    """Component failure probability as a function of one intensity"""

    def value(self, d: ArrayLike, hardened: bool) -> ArrayLike: ...

    def slope(self, d: float, hardened: bool) -> Optional[float]: ...


@dataclass(frozen=True)
class PoleCurveFunction:
    params: LineFragility

    def value(self, d, hardened):
        return pole_fragility(d, hardened, self.params)

    def slope(self, d, hardened):
        pole = self.params.state(hardened).pole
        f = pole.a * np.exp(pole.b * d)
        return 0.0 if f >= 1.0 else float(pole.b * f)


@dataclass(frozen=True)
class LineCurveFunction:
    line: GridLine
    params: LineFragility

    def value(self, d, hardened):
        return line_failure_prob(d, hardened, self.line, self.params)

    def slope(self, d, hardened):
        # wire tables are piecewise linear
        return None


@dataclass(frozen=True)
class PipelineCurveFunction:
    """Pipeline curve in terms of accumulated rainfall"""
    pipe: Pipeline
    params: PipelineFragility

    def value(self, d, hardened):
        seg = segment_fragility(d, hardened, self.params)
        return np.clip(1.0 - (1.0 - seg) ** self.pipe.segments, 0.0, 1.0)

    def slope(self, d, hardened):
        if d <= 0:
            return 0.0
        curve = self.params.state(hardened)
        u = np.log(curve.z * d) / curve.sigma
        seg = norm.cdf(u)
        n = self.pipe.segments
        return float(n * (1.0 - seg) ** (n - 1) * norm.pdf(u) / (curve.sigma * d))


@dataclass(frozen=True)
class LinearizedCurve:
    """Tangent lines of one curve at the expansion point, per hardening state"""
    k0: float
    b0: float
    k1: float
    b1: float
    expansion: float
    degenerate: bool = False

    def value(self, hardened: bool, d: Optional[float] = None) -> float:
        d = self.expansion if d is None else d
        return (self.k1 * d + self.b1) if hardened else (self.k0 * d + self.b0)


def _tangent(curve: FragilityCurve, d: float, hardened: bool,
             step: float) -> tuple[float, float, bool]:
    f = float(curve.value(d, hardened))
    if f >= 1.0 - 1e-12:
        return 0.0, 1.0, True
    k = curve.slope(d, hardened)
    if k is None:
        lo = min(step, d)
        ahead = float(curve.value(d + step, hardened))
        k = (ahead - float(curve.value(d - lo, hardened))) / (step + lo)
    k = max(float(k), 0.0)
    return k, f - k * d, False


def linearize(curve: FragilityCurve, expansion_intensity: float,
              support_width: float = 100.0) -> LinearizedCurve:
    """Tangent of the curve at the expected intensity for both hardening states

    Slopes come from the curve's analytic derivative when it has one, otherwise from a
    central difference with step 1% of the support width. A state clamped at probability 1
    gives slope 0 and intercept 1. The hardened slope is capped at the unhardened one.
    """
    d = float(expansion_intensity)
    step = max(0.01 * support_width, 1e-6)
    k0, b0, deg0 = _tangent(curve, d, False, step)
    k1, b1, deg1 = _tangent(curve, d, True, step)
    if k1 > k0:
        logger.debug("hardened slope %.3g above unhardened %.3g at %.3g; capped", k1, k0, d)
        b1 = b1 + (k1 - k0) * d
        k1 = k0
    return LinearizedCurve(k0, b0, k1, b1, d, deg0 or deg1)


def entry_intensity_map(net: Network, index: ComponentIndex) -> sp.csr_matrix:
    """Sparse map from zone intensities [wind(z, t); rain(z, t)] to entry intensities

    Lines see their zone's wind in the same period; pipelines see their zone's rainfall
    accumulated up to the period.
    """
    T, Z = net.periods, len(index.zones)
    rows, cols = [], []
    for c, comp in enumerate(index.components):
        z = index.zone_of_component[c]
        for t in range(T):
            i = index.entry(c, t)
            if comp.kind == "line":
                rows.append(i)
                cols.append(z * T + t)
            else:
                for tau in range(t + 1):
                    rows.append(i)
                    cols.append(Z * T + z * T + tau)
    data = np.ones(len(rows))
    return sp.csr_matrix((data, (rows, cols)), shape=(index.n_entries, 2 * Z * T))


def component_curves(net: Network, index: ComponentIndex) -> list[FragilityCurve]:
    curves: list[FragilityCurve] = []
    for comp in index.components:
        if comp.kind == "line":
            line = net.grid_lines[comp.position]
            curves.append(LineCurveFunction(line, net.fragility.for_line(line.id)))
        else:
            pipe = net.pipelines[comp.position]
            curves.append(PipelineCurveFunction(pipe, net.fragility.for_pipeline(pipe.id)))
    return curves


@dataclass
class LinearizedCurves:
    """Tangent coefficients for every (component, period) entry"""
    k0: np.ndarray
    b0: np.ndarray
    k1: np.ndarray
    b1: np.ndarray
    expansion: np.ndarray
    comp: np.ndarray
    degenerate: np.ndarray

    def k_tilde(self, x: np.ndarray) -> np.ndarray:
        xe = np.asarray(x, dtype=float)[self.comp]
        return self.k0 * (1.0 - xe) + self.k1 * xe

    @property
    def n(self) -> int:
        return len(self.k0)


def linearize_network(net: Network, index: ComponentIndex, d_entries: np.ndarray,
                      widths: np.ndarray) -> LinearizedCurves:
    """Linearize every component curve at each period's expected entry intensity"""
    curves = component_curves(net, index)
    n = index.n_entries
    k0, b0, k1, b1, deg = (np.zeros(n) for _ in range(5))
    for i in range(n):
        lin = linearize(curves[index.comp_of[i]], d_entries[i], widths[i])
        k0[i], b0[i], k1[i], b1[i], deg[i] = lin.k0, lin.b0, lin.k1, lin.b1, lin.degenerate
    if deg.any():
        logger.info("%d entries clamped at probability 1 at the expected intensity", int(deg.sum()))
    return LinearizedCurves(k0, b0, k1, b1, np.asarray(d_entries, float), index.comp_of.copy(),
                            deg.astype(bool))


@dataclass
class EntryAffineMap:
    """Per-entry map x -> v0 + (v1 - v0) * x_comp, exact for binary x"""
    v0: np.ndarray
    v1: np.ndarray
    comp: np.ndarray

    @property
    def coef(self) -> np.ndarray:
        return self.v1 - self.v0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        xe = np.asarray(x, dtype=float)[self.comp]
        return self.v0 + self.coef * xe


def mean_map(lin: LinearizedCurves, d_entries: np.ndarray,
             labels: Optional[list[str]] = None) -> EntryAffineMap:
    """mu(x) per entry from the tangent lines evaluated at the entry intensities"""
    v0 = lin.k0 * d_entries + lin.b0
    v1 = lin.k1 * d_entries + lin.b1
    for values in (v0, v1):
        bad = np.flatnonzero((values < -PROB_TOL) | (values > 1 + PROB_TOL))
        if bad.size:
            i = int(bad[0])
            name = labels[i] if labels else f"entry {i}"
            raise FragilityModelError(f"failure mean {values[i]:.6g} outside [0, 1] for {name}")
    return EntryAffineMap(np.clip(v0, 0, 1), np.clip(v1, 0, 1), lin.comp.copy())


def failure_mean_map(net: Network, lin: LinearizedCurves, d_bar: np.ndarray,
                     index: Optional[ComponentIndex] = None) -> EntryAffineMap:
    """Affine map x -> mu(x) from the zone-level expected intensities"""
    index = index or ComponentIndex(net)
    d_entries = entry_intensity_map(net, index) @ np.asarray(d_bar, dtype=float)
    labels = [index.label(i) for i in range(index.n_entries)]
    return mean_map(lin, d_entries, labels)


def check_psd(q: np.ndarray, name: str = "covariance") -> None:
    if q.size == 0:
        return
    if not np.allclose(q, q.T, atol=1e-10):
        raise FragilityModelError(f"{name} is not symmetric")
    eig = np.linalg.eigvalsh(q)
    if eig[0] < -1e-9 * max(1.0, abs(eig[-1])):
        raise FragilityModelError(
            f"{name} is not positive semidefinite: smallest eigenvalue {eig[0]:.4g}"
        )


@dataclass
class SecondMomentMap:
    """x -> (k(x) k(x)^T) * Q elementwise, with k(x) the hardening-dependent slopes"""
    k0: np.ndarray
    k1: np.ndarray
    comp: np.ndarray
    q: np.ndarray

    def k_tilde(self, x: np.ndarray) -> np.ndarray:
        xe = np.asarray(x, dtype=float)[self.comp]
        return self.k0 * (1.0 - xe) + self.k1 * xe

    def __call__(self, x: np.ndarray) -> np.ndarray:
        k = self.k_tilde(x)
        return np.outer(k, k) * self.q

    def diagonal(self) -> EntryAffineMap:
        d = np.diag(self.q)
        return EntryAffineMap(self.k0 ** 2 * d, self.k1 ** 2 * d, self.comp.copy())

    def pair_coefficients(self, i: int, j: int) -> tuple[float, float, float, float]:
        """Coefficients of {1, x_i, x_j, x_i x_j} in entry (i, j)"""
        qij = self.q[i, j]
        d_i, d_j = self.k1[i] - self.k0[i], self.k1[j] - self.k0[j]
        return (self.k0[i] * self.k0[j] * qij, d_i * self.k0[j] * qij,
                self.k0[i] * d_j * qij, d_i * d_j * qij)

    def quadratic_form(self, idx: np.ndarray, weights: np.ndarray,
                       variance: Optional[EntryAffineMap] = None) -> BinaryQuadratic:
        """w^T (Q(x) + diag(variance(x))) w over the entries idx, as a binary polynomial"""
        idx = np.asarray(idx, dtype=int)
        w = np.asarray(weights, dtype=float)
        k0 = self.k0[idx] * w
        dk = (self.k1[idx] - self.k0[idx]) * w
        q = self.q[np.ix_(idx, idx)]
        comps = self.comp[idx]
        out = BinaryQuadratic(float(k0 @ q @ k0))

        uniq, inv = np.unique(comps, return_inverse=True)
        lin = np.zeros(len(uniq))
        np.add.at(lin, inv, 2.0 * dk * (q @ k0))
        quad = np.zeros((len(uniq), len(uniq)))
        np.add.at(quad, (inv[:, None], inv[None, :]), np.outer(dk, dk) * q)
        if variance is not None:
            out.const += float(w ** 2 @ variance.v0[idx])
            np.add.at(lin, inv, w ** 2 * variance.coef[idx])
        for a, c in enumerate(uniq):
            out.add_linear(int(c), float(lin[a] + quad[a, a]))
            for b in range(a + 1, len(uniq)):
                out.add_pair(int(c), int(uniq[b]), float(quad[a, b] + quad[b, a]))
        return out


def second_moment_map(lin: LinearizedCurves, q_entries: np.ndarray) -> SecondMomentMap:
    """Moment map from an entry-level intensity covariance"""
    q_entries = np.asarray(q_entries, dtype=float)
    check_psd(q_entries, "intensity covariance")
    return SecondMomentMap(lin.k0.copy(), lin.k1.copy(), lin.comp.copy(), q_entries)


def failure_second_moment_map(net: Network, lin: LinearizedCurves, q_d: np.ndarray,
                              index: Optional[ComponentIndex] = None) -> SecondMomentMap:
    """Moment map x -> Q(x) from the zone-level intensity covariance"""
    check_psd(np.asarray(q_d, dtype=float), "intensity covariance")
    index = index or ComponentIndex(net)
    g = entry_intensity_map(net, index)
    q_entries = np.asarray((g @ sp.csr_matrix(q_d) @ g.T).todense())
    q_entries = 0.5 * (q_entries + q_entries.T)
    return SecondMomentMap(lin.k0.copy(), lin.k1.copy(), lin.comp.copy(), q_entries)
