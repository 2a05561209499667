"""Ambiguity sets - intensity moments and the lifted failure moment set"""

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from ehdn.core.components import ComponentIndex
from ehdn.core.fragility import (
    EntryAffineMap,
    FragilityModelError,
    SecondMomentMap,
    check_psd,
    entry_intensity_map,
)
from ehdn.core.polynomial import BinaryQuadratic
from ehdn.models.network import Network

logger = logging.getLogger(__name__)


class AmbiguityError(Exception):
    """Raised when an ambiguity set cannot be built from the given data"""

    pass


@dataclass
class IntensityForecast:
    """Forecast moments of zone intensities over the horizon"""
    wind_mean: np.ndarray      # (zones, periods), m/s
    rain_mean: np.ndarray      # (zones, periods), mm/h
    covariance: np.ndarray     # over [wind(z, t); rain(z, t)]
    gamma_d1: float = 0.1
    gamma_d2: float = 1.5


@dataclass
class IntensityAmbiguity:
    """Moment set of zone intensities, layout [wind(z, t); rain(z, t)]"""
    d_bar: np.ndarray
    q_d: np.ndarray
    gamma_d1: float
    gamma_d2: float
    lower: np.ndarray
    upper: np.ndarray
    zones: int
    periods: int

    @property
    def wind(self) -> np.ndarray:
        return self.d_bar[: self.zones * self.periods].reshape(self.zones, self.periods)

    @property
    def rain(self) -> np.ndarray:
        return self.d_bar[self.zones * self.periods:].reshape(self.zones, self.periods)

    def entry_moments(self, net: Network, index: ComponentIndex):
        """Expected intensity, covariance and support width per (component, period) entry"""
        g = entry_intensity_map(net, index)
        d_entries = g @ self.d_bar
        q_entries = np.asarray((g @ sp.csr_matrix(self.q_d) @ g.T).todense())
        widths = g @ (self.upper - self.lower)
        return d_entries, 0.5 * (q_entries + q_entries.T), widths


def forecast_for_level(net: Network, level: int) -> IntensityForecast:
    """Forecast for one disaster level of the instance's weather section

    Each level's band is spread across zones, the first zone at the band floor and the last
    at the ceiling; the ramp scales the peak per period. The covariance is the Kronecker
    product of the wind/rain block, an exchangeable zone correlation and an AR(1) time
    correlation.
    """
    if net.weather is None:
        raise AmbiguityError(f"instance '{net.name}' has no weather section")
    w = net.weather
    band = w.level(level)
    Z, T = len(net.zones), net.periods
    spread = np.linspace(0.0, 1.0, Z) if Z > 1 else np.ones(1)
    ramp = np.asarray(w.ramp, dtype=float)
    peak_wind = band.wind[0] + spread * (band.wind[1] - band.wind[0])
    peak_rain = band.rain[0] + spread * (band.rain[1] - band.rain[0])

    kind = np.array([
        [w.wind_variance, w.wind_rain_correlation * np.sqrt(w.wind_variance * w.rain_variance)],
        [w.wind_rain_correlation * np.sqrt(w.wind_variance * w.rain_variance), w.rain_variance],
    ])
    zone_corr = (1.0 - w.zone_correlation) * np.eye(Z) + w.zone_correlation * np.ones((Z, Z))
    lags = np.abs(np.subtract.outer(np.arange(T), np.arange(T)))
    time_corr = w.time_correlation ** lags
    cov = np.kron(kind, np.kron(zone_corr, time_corr))
    return IntensityForecast(
        np.outer(peak_wind, ramp), np.outer(peak_rain, ramp), cov, w.gamma_d1, w.gamma_d2
    )


def build_intensity_set(net: Network, forecast: IntensityForecast) -> IntensityAmbiguity:
    """Validate a forecast against the zone supports

    Raises:
        AmbiguityError: Wrong dimensions, non-PSD covariance, means outside support, or
            inconsistent error ratios
    """
    Z, T = len(net.zones), net.periods
    wind = np.asarray(forecast.wind_mean, dtype=float)
    rain = np.asarray(forecast.rain_mean, dtype=float)
    if wind.shape != (Z, T) or rain.shape != (Z, T):
        raise AmbiguityError(f"forecast means must have shape ({Z}, {T})")
    q = np.asarray(forecast.covariance, dtype=float)
    if q.shape != (2 * Z * T, 2 * Z * T):
        raise AmbiguityError(f"forecast covariance must be {2 * Z * T} x {2 * Z * T}")
    try:
        check_psd(q, "intensity covariance")
    except FragilityModelError as e:
        raise AmbiguityError(str(e))
    if forecast.gamma_d1 < 0 or forecast.gamma_d2 < max(1.0, forecast.gamma_d1):
        raise AmbiguityError("error ratios must satisfy gamma_d2 >= max(1, gamma_d1) >= 0")

    lower, upper = [], []
    for bounds in ("wind_bounds", "rain_bounds"):
        for zone in net.zones:
            lo, hi = getattr(zone, bounds)(T)
            lower.append(lo)
            upper.append(hi)
    lower_v, upper_v = np.concatenate(lower), np.concatenate(upper)
    d_bar = np.concatenate([wind.ravel(), rain.ravel()])
    outside = np.flatnonzero((d_bar < lower_v - 1e-9) | (d_bar > upper_v + 1e-9))
    if outside.size:
        i = int(outside[0])
        kind = "wind" if i < Z * T else "rain"
        z, t = divmod(i % (Z * T), T)
        raise AmbiguityError(
            f"expected {kind} {d_bar[i]:.4g} in zone '{net.zones[z].id}' period {t} "
            f"outside support [{lower_v[i]:.4g}, {upper_v[i]:.4g}]"
        )
    return IntensityAmbiguity(d_bar, q, forecast.gamma_d1, forecast.gamma_d2,
                              lower_v, upper_v, Z, T)


def quantile_bounds(mean: EntryAffineMap, second: SecondMomentMap,
                    gamma1: float) -> tuple[EntryAffineMap, EntryAffineMap]:
    """Per-entry lower and upper mean bounds mu -/+ sqrt(gamma1 * Q_ii), clamped to [0, 1]"""
    diag = second.diagonal()
    r0 = np.sqrt(gamma1 * np.maximum(diag.v0, 0.0))
    r1 = np.sqrt(gamma1 * np.maximum(diag.v1, 0.0))
    lower = EntryAffineMap(np.clip(mean.v0 - r0, 0, 1), np.clip(mean.v1 - r1, 0, 1), mean.comp)
    upper = EntryAffineMap(np.clip(mean.v0 + r0, 0, 1), np.clip(mean.v1 + r1, 0, 1), mean.comp)
    return lower, upper


def outcome_variance_map(mean: EntryAffineMap) -> EntryAffineMap:
    """Bernoulli variance mu(1 - mu) of each binary failure, exact for binary x"""
    return EntryAffineMap(mean.v0 * (1 - mean.v0), mean.v1 * (1 - mean.v1), mean.comp)


def select_projection_vectors(net: Network,
                              index: Optional[ComponentIndex] = None) -> sp.csr_matrix:
    """Basis vectors for every entry plus one indicator per (zone, period)"""
    index = index or ComponentIndex(net)
    n, T = index.n_entries, net.periods
    rows, cols = list(range(n)), list(range(n))
    k = n
    for z in range(len(index.zones)):
        for t in range(T):
            members = index.zone_period_entries(z, t)
            if members.size == 0:
                continue
            rows += [k] * members.size
            cols += members.tolist()
            k += 1
    return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(k, n))


@dataclass
class LPCAS:
    """Lifted partial cross-moment failure set in decision-affine coefficient form"""
    f: sp.csr_matrix
    mean: EntryAffineMap
    lower: EntryAffineMap
    upper: EntryAffineMap
    delta: list[BinaryQuadratic]
    n_l: int
    gamma1: float
    gamma2: float
    lifted: bool = True
    outcome_variance: bool = False
    rows: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.mean.v0)

    @property
    def k(self) -> int:
        return len(self.delta) if self.lifted else 0

    def pairs(self) -> set[tuple[int, int]]:
        """Component pairs whose products appear in any lifted row"""
        out: set[tuple[int, int]] = set()
        for idx, _ in self.rows[: self.k]:
            comps = np.unique(self.mean.comp[idx])
            out.update((int(a), int(b)) for i, a in enumerate(comps) for b in comps[i + 1:])
        return out

    def delta_values(self, x: np.ndarray) -> np.ndarray:
        return np.array([d.evaluate(x) for d in self.delta[: self.k]])

    def w_quadratic(self, row: int, a: np.ndarray) -> BinaryQuadratic:
        """(f^T (a - mu(x)))^2 for a fixed scenario, as a polynomial in x"""
        idx, w = self.rows[row]
        offset = float(w @ (np.asarray(a, float)[idx] - self.mean.v0[idx]))
        coefs: dict[int, float] = {}
        for c, g in zip(self.mean.comp[idx], -w * self.mean.coef[idx]):
            coefs[int(c)] = coefs.get(int(c), 0.0) + float(g)
        return BinaryQuadratic.square(offset, coefs)

    def w_values(self, a: np.ndarray, x: np.ndarray) -> np.ndarray:
        centered = np.asarray(a, float) - self.mean(x)
        return np.array([float(w @ centered[idx]) ** 2 for idx, w in self.rows[: self.k]])

    def first_moment_only(self) -> "LPCAS":
        """Same set with the lifted second-moment rows dropped"""
        return replace(self, lifted=False)

    def contains(self, x: np.ndarray, distribution: Sequence[tuple[float, np.ndarray]],
                 tol: float = 1e-9) -> bool:
        """Membership of a finite distribution [(prob, a), ...] at decision x"""
        probs = np.array([p for p, _ in distribution])
        scen = np.array([np.asarray(a, float) for _, a in distribution])
        if abs(probs.sum() - 1.0) > 1e-9 or (probs < 0).any():
            return False
        if (scen.sum(axis=1) > self.n_l + tol).any():
            return False
        m = probs @ scen
        if (m < self.lower(x) - tol).any() or (m > self.upper(x) + tol).any():
            return False
        if self.k:
            w = np.array([self.w_values(a, x) for a in scen])
            if (probs @ w > self.delta_values(x) + tol).any():
                return False
        return True


def build_lpcas(net: Network, mean: EntryAffineMap, second: SecondMomentMap, gamma1: float,
                gamma2: float, n_l: int, index: Optional[ComponentIndex] = None,
                variance: Optional[EntryAffineMap] = None,
                f: Optional[sp.csr_matrix] = None) -> LPCAS:
    """Lifted moment set with every delta_k(x) expanded over binary monomials

    Raises:
        AmbiguityError: No projection vectors or a failure cap below 1
    """
    if n_l < 1:
        raise AmbiguityError(f"failure cap N^L must be >= 1, got {n_l}")
    if f is None:
        f = select_projection_vectors(net, index)
    f = sp.csr_matrix(f)
    if f.shape[0] == 0:
        raise AmbiguityError("at least one projection vector is required")
    lower, upper = quantile_bounds(mean, second, gamma1)
    rows, delta = [], []
    for k in range(f.shape[0]):
        start, end = f.indptr[k], f.indptr[k + 1]
        idx, w = f.indices[start:end].copy(), f.data[start:end].copy()
        if idx.size == 0:
            raise AmbiguityError(f"projection vector {k} is zero")
        rows.append((idx, w))
        delta.append(second.quadratic_form(idx, w, variance).scaled(gamma2))
    logger.debug("lifted set: %d entries, %d projection rows, N^L=%d", mean.v0.size, len(rows), n_l)
    return LPCAS(f, mean, lower, upper, delta, n_l, gamma1, gamma2, True,
                 variance is not None, rows)


def default_failure_cap(upper: EntryAffineMap, tail: float = 1e-3) -> int:
    """Smallest N with P(more than N failures) < tail under independent unhardened draws"""
    dist = np.ones(1)
    for p in upper.v0:
        dist = np.convolve(dist, [1.0 - p, p])
    exceed = 1.0 - np.cumsum(dist)
    n = int(np.argmax(exceed < tail))
    return max(n, 1)


def moment_set_contains(mean: np.ndarray, q: np.ndarray, gamma1: float, gamma2: float,
                        distribution: Sequence[tuple[float, np.ndarray]],
                        tol: float = 1e-9) -> bool:
    """Exact second-order moment set membership at one decision (small instances only)"""
    probs = np.array([p for p, _ in distribution])
    scen = np.array([np.asarray(a, float) for _, a in distribution])
    centered = scen - mean
    m = probs @ centered
    pinv = np.linalg.pinv(q)
    if np.linalg.norm(q @ pinv @ m - m) > 1e-7:
        return False
    if m @ pinv @ m > gamma1 + tol:
        return False
    second = (centered * probs[:, None]).T @ centered
    eig = np.linalg.eigvalsh(gamma2 * q - second)
    return bool(eig[0] >= -tol)


def calibrate_gammas(samples: np.ndarray, mean: np.ndarray, second: np.ndarray,
                     f: sp.csr_matrix, grid1: Sequence[float], grid2: Sequence[float],
                     folds: int = 5, pass_rate: float = 0.95) -> tuple[float, float]:
    """Cross-validated error ratios from exact fragility samples

    Args:
        samples: (S, n) exact failure probabilities per sampled intensity scenario
        mean: (n,) linearized means at the decision being calibrated
        second: (n, n) linearized second-moment matrix at that decision
        f: projection vectors
        grid1, grid2: candidate values, searched in increasing order

    Returns:
        The smallest (gamma1, gamma2) with gamma2 >= gamma1 such that the held-out fold
        moments satisfy the set constraints in at least `pass_rate` of the folds
    """
    if len(grid1) == 0 or len(grid2) == 0:
        raise AmbiguityError("candidate grid is empty")
    samples = np.asarray(samples, dtype=float)
    if samples.shape[0] < folds:
        raise AmbiguityError(f"need at least {folds} samples, got {samples.shape[0]}")
    grid1, grid2 = sorted(grid1), sorted(grid2)
    f = sp.csr_matrix(f)
    diag = np.diag(second)
    proj_q = np.asarray((f @ sp.csr_matrix(second)).multiply(f).sum(axis=1)).ravel()

    need1, need2 = [], []
    for part in np.array_split(np.arange(samples.shape[0]), folds):
        held = samples[part] - mean
        err = held.mean(axis=0)
        ok = diag > 1e-15
        r1 = np.max(err[ok] ** 2 / diag[ok]) if ok.any() else 0.0
        if (~ok).any() and np.max(np.abs(err[~ok])) > 1e-9:
            r1 = np.inf
        proj = np.asarray(f @ held.T)
        emp = (proj ** 2).mean(axis=1)
        ok2 = proj_q > 1e-15
        r2 = np.max(emp[ok2] / proj_q[ok2]) if ok2.any() else 0.0
        if (~ok2).any() and np.max(emp[~ok2]) > 1e-12:
            r2 = np.inf
        need1.append(r1)
        need2.append(r2)

    def pick(grid: list[float], need: list[float], floor: float, name: str) -> float:
        for g in grid:
            if g >= floor and np.mean([n <= g for n in need]) >= pass_rate:
                return g
        logger.warning("no %s candidate passes cross-validation; using %.4g", name, grid[-1])
        return grid[-1]

    g1 = pick(grid1, need1, 0.0, "gamma1")
    g2 = pick(grid2, need2, g1, "gamma2")
    logger.info("calibrated gamma1=%.4g gamma2=%.4g over %d folds", g1, g2, folds)
    return g1, g2
