"""Polynomials over binary hardening variables"""

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np


@dataclass
class BinaryQuadratic:
    """const + sum_c linear[c] x_c + sum_{c<d} pairs[(c, d)] x_c x_d, for binary x"""

    const: float = 0.0
    linear: dict[int, float] = field(default_factory=dict)
    pairs: dict[tuple[int, int], float] = field(default_factory=dict)

    def add_linear(self, c: int, value: float) -> None:
        if value != 0.0:
            self.linear[c] = self.linear.get(c, 0.0) + value

    def add_pair(self, c: int, d: int, value: float) -> None:
        """Add value * x_c * x_d; x_c * x_c collapses to x_c"""
        if value == 0.0:
            return
        if c == d:
            self.add_linear(c, value)
            return
        key = (c, d) if c < d else (d, c)
        self.pairs[key] = self.pairs.get(key, 0.0) + value

    def evaluate(self, x: np.ndarray) -> float:
        total = self.const
        for c, v in self.linear.items():
            total += v * x[c]
        for (c, d), v in self.pairs.items():
            total += v * x[c] * x[d]
        return float(total)

    def scaled(self, factor: float) -> "BinaryQuadratic":
        return BinaryQuadratic(
            self.const * factor,
            {c: v * factor for c, v in self.linear.items()},
            {k: v * factor for k, v in self.pairs.items()},
        )

    def __add__(self, other: "BinaryQuadratic") -> "BinaryQuadratic":
        out = BinaryQuadratic(self.const + other.const, dict(self.linear), dict(self.pairs))
        for c, v in other.linear.items():
            out.add_linear(c, v)
        for (c, d), v in other.pairs.items():
            out.add_pair(c, d, v)
        return out

    @property
    def components(self) -> set[int]:
        comps = set(self.linear)
        for c, d in self.pairs:
            comps.update((c, d))
        return comps

    @classmethod
    def square(cls, offset: float, coefs: Mapping[int, float]) -> "BinaryQuadratic":
        """(offset + sum_c coefs[c] x_c)^2 expanded with x_c^2 = x_c"""
        out = cls(offset * offset)
        items = [(c, g) for c, g in coefs.items() if g != 0.0]
        for c, g in items:
            out.add_linear(c, 2.0 * offset * g + g * g)
        for k, (c, g) in enumerate(items):
            for d, h in items[k + 1:]:
                out.add_pair(c, d, 2.0 * g * h)
        return out
