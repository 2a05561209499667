"""Monte-Carlo validation of hardening plans under the nominal intensity distribution"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from ehdn.core.ambiguity import IntensityAmbiguity
from ehdn.core.components import ComponentIndex
from ehdn.core.dispatch import DispatchTemplate, ScenarioRealization, dispatch_cost
from ehdn.core.fragility import LinearizedCurves, component_curves, entry_intensity_map
from ehdn.models.config import SolverOptions
from ehdn.models.network import Network

logger = logging.getLogger(__name__)

MAX_REJECTION_ROUNDS = 50
Z_95 = 1.959963984540054

Seed = Union[int, Sequence[int], np.random.Generator]


def sample_intensity(amb: IntensityAmbiguity, n: int, seed: Seed = 0) -> np.ndarray:
    """n intensity paths from the normal forecast truncated to the zone supports

    Rejection sampling is used while it keeps accepting; any paths still missing after
    MAX_REJECTION_ROUNDS are drawn and clipped to the support.
    """
    if n < 1:
        raise ValueError("sample count must be >= 1")
    rng = np.random.default_rng(seed)
    lower, upper = amb.lower, amb.upper
    if not amb.q_d.any():
        return np.tile(np.clip(amb.d_bar, lower, upper), (n, 1))
    accepted: list[np.ndarray] = []
    have = 0
    for _ in range(MAX_REJECTION_ROUNDS):
        draw = rng.multivariate_normal(amb.d_bar, amb.q_d, size=n, method="eigh")
        ok = draw[((draw >= lower) & (draw <= upper)).all(axis=1)]
        accepted.append(ok)
        have += len(ok)
        if have >= n:
            break
    out = np.concatenate(accepted)[:n] if accepted else np.empty((0, amb.d_bar.size))
    if len(out) < n:
        logger.warning("rejection sampling accepted %d of %d paths; clipping the rest",
                       len(out), n)
        extra = rng.multivariate_normal(amb.d_bar, amb.q_d, size=n - len(out), method="eigh")
        out = np.vstack([out, np.clip(extra, lower, upper)])

    shift = out.mean(axis=0) - amb.d_bar
    radius = float(shift @ np.linalg.pinv(amb.q_d) @ shift)
    if radius > amb.gamma_d1:
        logger.warning("sample mean outside the forecast mean ball (%.3g > %.3g)",
                       radius, amb.gamma_d1)
    return out


@dataclass
class FailureSampler:
    """Exact (or linearized) failure probabilities of every entry for given intensity paths"""
    net: Network
    index: ComponentIndex
    linearized: Optional[LinearizedCurves] = None

    def __post_init__(self):
        self._g = entry_intensity_map(self.net, self.index)
        self._curves = component_curves(self.net, self.index)

    def probabilities(self, path: np.ndarray, x: np.ndarray) -> np.ndarray:
        """(component, period) failure probabilities along one intensity path"""
        d = self._g @ np.asarray(path, dtype=float)
        T = self.index.periods
        probs = np.empty(self.index.n_entries)
        for c, curve in enumerate(self._curves):
            sl = slice(c * T, (c + 1) * T)
            hardened = bool(x[c] > 0.5)
            if self.linearized is not None:
                lin = self.linearized
                k = lin.k1[sl] if hardened else lin.k0[sl]
                b = lin.b1[sl] if hardened else lin.b0[sl]
                probs[sl] = k * d[sl] + b
            else:
                probs[sl] = curve.value(d[sl], hardened)
        return np.clip(probs, 0.0, 1.0).reshape(self.index.n_components, T)


def sample_failures(probabilities: np.ndarray, seed: Seed = 0) -> ScenarioRealization:
    """Draw the failure period of each component from per-period hazards

    A component fails in period t with the given probability if it survived every earlier
    period; a destroyed component stays destroyed, so each row has at most one 1.
    """
    rng = np.random.default_rng(seed)
    p = np.asarray(probabilities, dtype=float)
    hit = rng.random(p.shape) < p
    first = np.where(hit.any(axis=1), hit.argmax(axis=1), -1)
    a = np.zeros_like(p)
    rows = np.flatnonzero(first >= 0)
    a[rows, first[rows]] = 1.0
    return ScenarioRealization(a)


def simulate_failures(sampler: FailureSampler, paths: np.ndarray, x: np.ndarray,
                      seed: int = 0) -> np.ndarray:
    """(sample, component, period) failure matrices; sample s draws from rng([seed, s])"""
    out = np.empty((len(paths), sampler.index.n_components, sampler.index.periods))
    for s, path in enumerate(paths):
        out[s] = sample_failures(sampler.probabilities(path, x), [seed, s]).a
    return out


def estimate_welsc(net: Network, template: DispatchTemplate, x_e: np.ndarray,
                   failures: np.ndarray, threads: int = 1,
                   options: Optional[SolverOptions] = None) -> tuple[float, float, np.ndarray]:
    """Mean shedding cost over sampled failure matrices with a normal 95% half-width

    Dispatch is solved once per distinct failure pattern; patterns are spread over a thread
    pool and costs are gathered back in sample order.
    """
    keys = [ScenarioRealization(a).key() for a in failures]
    unique: dict[bytes, np.ndarray] = {}
    for k, a in zip(keys, failures):
        unique.setdefault(k, a)
    order = list(unique)
    logger.info("%d samples, %d distinct failure patterns", len(keys), len(order))

    def solve(key: bytes) -> float:
        return dispatch_cost(net, template, unique[key], x_e, options)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(solve, order))
    else:
        values = [solve(k) for k in order]
    cost_of = dict(zip(order, values))
    costs = np.array([cost_of[k] for k in keys])
    half = Z_95 * costs.std(ddof=1) / np.sqrt(len(costs)) if len(costs) > 1 else 0.0
    return float(costs.mean()), float(half), costs


def ssa_failure_counts(failures: np.ndarray, index: ComponentIndex) -> np.ndarray:
    mask = index.ssa_components()
    return failures[:, mask, :].sum(axis=(1, 2))


def var_ssa(counts: np.ndarray, q: float = 0.95) -> int:
    """q-quantile of the per-sample SSA failure count"""
    if not 0 < q < 1:
        raise ValueError(f"quantile must be in (0, 1), got {q}")
    counts = np.asarray(counts, dtype=float)
    if counts.size == 0:
        return 0
    return int(np.quantile(counts, q, method="inverted_cdf"))


def vola(f_fmas: float, f_lpcas: float) -> Optional[float]:
    """Relative worst-case cost increase of the first-moment plan over the lifted one"""
    if abs(f_lpcas) < 1e-12:
        logger.warning("worst-case cost of the lifted plan is zero; VoLA undefined")
        return None
    return (f_fmas - f_lpcas) / f_lpcas
