"""Solver-agnostic mixed-binary model with linear and second-order-cone constraints"""

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

Number = Union[int, float]


class LinExpr:
    """Sparse affine expression sum_j terms[j] * z_j + const"""

    __slots__ = ("terms", "const")

    def __init__(self, terms: Optional[Mapping[int, float]] = None, const: float = 0.0):
        self.terms: dict[int, float] = dict(terms or {})
        self.const = float(const)

    @classmethod
    def var(cls, index: int, coef: float = 1.0) -> "LinExpr":
        return cls({int(index): float(coef)})

    def add_term(self, index: int, coef: float) -> "LinExpr":
        if coef != 0.0:
            self.terms[int(index)] = self.terms.get(int(index), 0.0) + float(coef)
        return self

    def copy(self) -> "LinExpr":
        return LinExpr(self.terms, self.const)

    def __add__(self, other: Union["LinExpr", Number]) -> "LinExpr":
        out = self.copy()
        if isinstance(other, LinExpr):
            for j, v in other.terms.items():
                out.add_term(j, v)
            out.const += other.const
        else:
            out.const += float(other)
        return out

    __radd__ = __add__

    def __neg__(self) -> "LinExpr":
        return LinExpr({j: -v for j, v in self.terms.items()}, -self.const)

    def __sub__(self, other: Union["LinExpr", Number]) -> "LinExpr":
        return self + (-other)

    def __rsub__(self, other: Number) -> "LinExpr":
        return (-self) + other

    def __mul__(self, factor: Number) -> "LinExpr":
        f = float(factor)
        return LinExpr({j: v * f for j, v in self.terms.items()}, self.const * f)

    __rmul__ = __mul__

    def value(self, z: np.ndarray) -> float:
        return self.const + sum(v * z[j] for j, v in self.terms.items())

    def __repr__(self) -> str:
        return f"LinExpr({len(self.terms)} terms, const={self.const:g})"


@dataclass
class Cone:
    """||A z + b||_2 <= c^T z + d"""
    rows: list[LinExpr]
    bound: LinExpr
    name: str = ""

    def residual(self, z: np.ndarray) -> tuple[np.ndarray, float]:
        r = np.array([e.value(z) for e in self.rows])
        return r, self.bound.value(z)

    def violation(self, z: np.ndarray) -> float:
        r, rhs = self.residual(z)
        return float(np.linalg.norm(r) - rhs)


@dataclass
class _Block:
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray


class ModelIR:
    """Variables with bounds, ranged linear rows lo <= A z <= hi, cones and a linear objective"""

    def __init__(self, name: str = "model"):
        self.name = name
        self.names: list[str] = []
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._binary: list[bool] = []
        self._blocks: list[_Block] = []
        self._lo: list[float] = []
        self._hi: list[float] = []
        self.row_names: list[str] = []
        self.cones: list[Cone] = []
        self.objective = LinExpr()
        self.sense = "min"

    # variables

    @property
    def n_vars(self) -> int:
        return len(self._lb)

    @property
    def n_rows(self) -> int:
        return len(self._lo)

    def add_var(self, name: str, lb: float = 0.0, ub: float = np.inf, binary: bool = False) -> int:
        if binary:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        if lb > ub:
            raise ValueError(f"variable '{name}' has empty bounds [{lb}, {ub}]")
        self.names.append(name)
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        self._binary.append(binary)
        return self.n_vars - 1

    def add_vars(self, name: str, n: int, lb: Union[Number, np.ndarray] = 0.0,
                 ub: Union[Number, np.ndarray] = np.inf, binary: bool = False) -> np.ndarray:
        lbs = np.broadcast_to(np.asarray(lb, dtype=float), (n,))
        ubs = np.broadcast_to(np.asarray(ub, dtype=float), (n,))
        return np.array([self.add_var(f"{name}[{k}]", lbs[k], ubs[k], binary) for k in range(n)],
                        dtype=int)

    def fix(self, index: int, value: float) -> None:
        self._lb[index] = self._ub[index] = float(value)

    def set_bounds(self, index: int, lb: float, ub: float) -> None:
        self._lb[index], self._ub[index] = float(lb), float(ub)

    def bounds(self, index: int) -> tuple[float, float]:
        return self._lb[index], self._ub[index]

    def is_binary(self, index: int) -> bool:
        return self._binary[index]

    # constraints

    def add_constraint(self, expr: LinExpr, lo: float = -np.inf, hi: float = np.inf,
                       name: str = "") -> int:
        """lo <= expr <= hi; the expression's constant moves to the bounds"""
        r = self.n_rows
        cols = np.fromiter(expr.terms.keys(), dtype=int, count=len(expr.terms))
        vals = np.fromiter(expr.terms.values(), dtype=float, count=len(expr.terms))
        self._blocks.append(_Block(np.full(cols.size, r), cols, vals))
        self._lo.append(lo - expr.const)
        self._hi.append(hi - expr.const)
        self.row_names.append(name)
        return r

    def add_rows(self, blocks: Sequence[tuple[sp.spmatrix, np.ndarray]],
                 lo: Union[Number, np.ndarray], hi: Union[Number, np.ndarray],
                 name: str = "") -> np.ndarray:
        """Stack rows sum_b A_b z[cols_b] in [lo, hi] for several variable blocks at once"""
        m = blocks[0][0].shape[0]
        start = self.n_rows
        for mat, cols in blocks:
            coo = sp.coo_matrix(mat)
            if coo.shape[0] != m or coo.shape[1] != len(cols):
                raise ValueError(f"block shape {coo.shape} does not match ({m}, {len(cols)})")
            cols = np.asarray(cols, dtype=int)
            self._blocks.append(_Block(coo.row + start, cols[coo.col], coo.data.astype(float)))
        self._lo.extend(np.broadcast_to(np.asarray(lo, dtype=float), (m,)).tolist())
        self._hi.extend(np.broadcast_to(np.asarray(hi, dtype=float), (m,)).tolist())
        self.row_names.extend(f"{name}[{k}]" for k in range(m))
        return np.arange(start, start + m)

    def add_cone(self, rows: Sequence[LinExpr], bound: LinExpr, name: str = "") -> Cone:
        """||rows|| <= bound"""
        cone = Cone(list(rows), bound, name)
        self.cones.append(cone)
        return cone

    def set_objective(self, expr: LinExpr, sense: str = "min") -> None:
        if sense not in ("min", "max"):
            raise ValueError(f"unknown objective sense '{sense}'")
        self.objective = expr
        self.sense = sense

    # export

    def constraint_matrix(self) -> sp.csr_matrix:
        if not self._blocks:
            return sp.csr_matrix((self.n_rows, self.n_vars))
        rows = np.concatenate([b.rows for b in self._blocks])
        cols = np.concatenate([b.cols for b in self._blocks])
        vals = np.concatenate([b.vals for b in self._blocks])
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n_rows, self.n_vars))

    def to_arrays(self):
        """(c, A, lo, hi, lb, ub, integrality) for a minimization"""
        c = np.zeros(self.n_vars)
        for j, v in self.objective.terms.items():
            c[j] += v
        if self.sense == "max":
            c = -c
        return (c, self.constraint_matrix(), np.array(self._lo), np.array(self._hi),
                np.array(self._lb), np.array(self._ub), np.array(self._binary, dtype=int))

    def describe(self) -> str:
        return (f"{self.name}: {self.n_vars} variables ({sum(self._binary)} binary), "
                f"{self.n_rows} rows, {len(self.cones)} cones, {self.sense}")


@dataclass
class Solution:
    z: np.ndarray
    objective: float
    status: str = "optimal"
    mip_gap: float = 0.0
    cone_rounds: int = 0
    max_cone_violation: float = 0.0
    extra: dict = field(default_factory=dict)

    def __getitem__(self, index) -> Union[float, np.ndarray]:
        return self.z[index]

    def value(self, expr: LinExpr) -> float:
        return expr.value(self.z)
