"""Component index - ordering of hardenable components and (component, period) entries"""

from dataclasses import dataclass
from typing import Iterable, Literal, Optional

import numpy as np

from ehdn.models.network import Network


@dataclass(frozen=True)
class Component:
    id: str
    kind: Literal["line", "pipeline"]
    zone: str
    position: int
    cost: float
    ssa: Optional[str] = None


class ComponentIndex:
    """Lines first, then pipelines; entry i = c * T + t"""

    def __init__(self, net: Network):
        self.periods = net.periods
        comps = [
            Component(line.id, "line", net.zone_of(line), k, net.line_cost(line))
            for k, line in enumerate(net.grid_lines)
        ]
        comps += [
            Component(p.id, "pipeline", net.zone_of(p), k, net.pipeline_cost(p), p.ssa_key)
            for k, p in enumerate(net.pipelines)
        ]
        self.components = comps
        self.zones = [z.id for z in net.zones]
        zone_pos = {z: k for k, z in enumerate(self.zones)}
        self.zone_of_component = np.array([zone_pos[c.zone] for c in comps], dtype=int)
        self.costs = np.array([c.cost for c in comps], dtype=float)
        self._pos = {c.id: k for k, c in enumerate(comps)}

        T = self.periods
        self.comp_of = np.repeat(np.arange(len(comps)), T)
        self.period_of = np.tile(np.arange(T), len(comps))

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def n_entries(self) -> int:
        return len(self.components) * self.periods

    def position(self, component_id: str) -> int:
        return self._pos[component_id]

    def entry(self, c: int, t: int) -> int:
        return c * self.periods + t

    def entries_of(self, c: int) -> np.ndarray:
        return np.arange(c * self.periods, (c + 1) * self.periods)

    def label(self, i: int) -> str:
        return f"{self.components[self.comp_of[i]].id}@{self.period_of[i]}"

    def kind_mask(self, kind: str) -> np.ndarray:
        """Boolean mask over components"""
        return np.array([c.kind == kind for c in self.components])

    def zone_period_entries(self, zone: int, t: int) -> np.ndarray:
        comps = np.flatnonzero(self.zone_of_component == zone)
        return comps * self.periods + t

    def ssa_groups(self) -> dict[str, np.ndarray]:
        """Entries of each SSA group, over all periods"""
        groups: dict[str, list[int]] = {}
        for c, comp in enumerate(self.components):
            if comp.ssa is not None:
                groups.setdefault(comp.ssa, []).extend(self.entries_of(c).tolist())
        return {k: np.array(v, dtype=int) for k, v in groups.items()}

    def ssa_components(self) -> np.ndarray:
        return np.array([c.ssa is not None for c in self.components])

    def to_vector(self, hardened: Iterable[str]) -> np.ndarray:
        x = np.zeros(self.n_components)
        for cid in hardened:
            x[self._pos[cid]] = 1.0
        return x

    def from_vector(self, x: np.ndarray) -> tuple[list[str], list[str]]:
        """(hardened lines, hardened pipelines)"""
        on = [c for c, v in zip(self.components, x) if v > 0.5]
        return [c.id for c in on if c.kind == "line"], [c.id for c in on if c.kind == "pipeline"]

    def matrix(self, a: np.ndarray) -> np.ndarray:
        """Reshape an entry vector to (component, period)"""
        return np.asarray(a).reshape(self.n_components, self.periods)
