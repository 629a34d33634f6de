"""Parametric MILP container.

A model is an immutable bag of variables, rows and an objective vector. Every
variable belongs to exactly one block:

* ``x1``  continuous state variables
* ``x2``  continuous slack variables (nonnegative objective weight)
* ``z1``  binary decisions that a generator proposes
* ``z2``  auxiliary binaries (element indicators, flow directions)

The builder is the only mutable piece; ``ParametricMilp`` instances are frozen
and safe to share between threads.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np


class Block(str, enum.Enum):
    X1 = "x1"
    X2 = "x2"
    Z1 = "z1"
    Z2 = "z2"


class Sense(str, enum.Enum):
    LE = "<="
    EQ = "="
    GE = ">="


class ModelError(ValueError):
    pass


class UnknownVariable(ModelError):
    pass


class PartialAssignment(ModelError):
    pass


@dataclass(frozen=True)
class VariableDef:
    name: str
    lower: float = 0.0
    upper: float = math.inf
    integral: bool = False
    block: Block = Block.X1

    def __post_init__(self):
        if self.lower > self.upper:
            raise ModelError(f"{self.name}: lower {self.lower} > upper {self.upper}")
        if self.block in (Block.Z1, Block.Z2):
            if not self.integral or self.lower < 0 or self.upper > 1:
                raise ModelError(f"{self.name}: binary blocks need integral [0,1] bounds")


@dataclass(frozen=True)
class Row:
    name: str
    index: tuple[int, ...]
    coef: tuple[float, ...]
    sense: Sense
    rhs: float

    def __post_init__(self):
        if not math.isfinite(self.rhs):
            raise ModelError(f"row {self.name}: rhs must be finite")

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.index, self.coef))


@dataclass(frozen=True)
class ParametricMilp:
    variables: tuple[VariableDef, ...]
    rows: tuple[Row, ...]
    objective: np.ndarray
    name: str = "model"
    z1_fixed: bool = False
    _names: Mapping[str, int] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self._names is None:
            object.__setattr__(self, "_names", {v.name: i for i, v in enumerate(self.variables)})
        if len(self._names) != len(self.variables):
            raise ModelError("duplicate variable names")
        if len(self.objective) != len(self.variables):
            raise ModelError("objective length does not match variable count")
        self.objective.setflags(write=False)
        n = len(self.variables)
        for row in self.rows:
            if row.index and (min(row.index) < 0 or max(row.index) >= n):
                raise ModelError(f"row {row.name} references an undeclared variable")
        for j in np.flatnonzero(self.objective < 0):
            if self.variables[j].block is Block.X2:
                raise ModelError(f"slack {self.variables[j].name} has negative cost")

    # -- lookup -----------------------------------------------------------
    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def index_of(self, name: str) -> int:
        try:
            return self._names[name]
        except KeyError:
            raise UnknownVariable(name) from None

    def block_indices(self, block: Block) -> list[int]:
        return [i for i, v in enumerate(self.variables) if v.block is block]

    def block_names(self, block: Block) -> list[str]:
        return [v.name for v in self.variables if v.block is block]

    @cached_property
    def lower(self) -> np.ndarray:
        a = np.array([v.lower for v in self.variables], dtype=float)
        a.setflags(write=False)
        return a

    @cached_property
    def upper(self) -> np.ndarray:
        a = np.array([v.upper for v in self.variables], dtype=float)
        a.setflags(write=False)
        return a

    @cached_property
    def integral(self) -> np.ndarray:
        a = np.array([v.integral for v in self.variables], dtype=bool)
        a.setflags(write=False)
        return a

    @cached_property
    def matrix(self) -> np.ndarray:
        """Dense constraint matrix (rows x variables)."""
        a = np.zeros((self.n_rows, self.n_vars))
        for i, row in enumerate(self.rows):
            if row.index:
                np.add.at(a[i], list(row.index), row.coef)
        a.setflags(write=False)
        return a

    @cached_property
    def rhs(self) -> np.ndarray:
        a = np.array([r.rhs for r in self.rows], dtype=float)
        a.setflags(write=False)
        return a

    @cached_property
    def senses(self) -> tuple[Sense, ...]:
        return tuple(r.sense for r in self.rows)

    # -- derived models ---------------------------------------------------
    def with_bounds(self, bounds: Mapping[int, tuple[float, float]], **changes) -> "ParametricMilp":
        variables = list(self.variables)
        for j, (lo, hi) in bounds.items():
            variables[j] = replace(variables[j], lower=float(lo), upper=float(hi))
        out = replace(self, variables=tuple(variables), **changes)
        # rows are shared, so are their cached dense forms
        for key in ("matrix", "rhs", "senses", "integral"):
            if key in self.__dict__:
                out.__dict__[key] = self.__dict__[key]
        return out

    def objective_value(self, x: np.ndarray) -> float:
        return float(self.objective @ x)

    def point_dict(self, x: np.ndarray) -> dict[str, float]:
        return {v.name: float(x[i]) for i, v in enumerate(self.variables)}

    def point_array(self, point: Mapping[str, float]) -> np.ndarray:
        missing = [v.name for v in self.variables if v.name not in point]
        if missing:
            raise PartialAssignment(f"point misses {len(missing)} variables, e.g. {missing[:3]}")
        return np.array([float(point[v.name]) for v in self.variables])

    def dump(self) -> str:
        """Plain-text LP-style listing for inspection. Not meant to be parsed."""
        lines = [f"\\ model {self.name}", "minimize"]
        terms = [f"{c:+.12g} {self.variables[j].name}" for j, c in enumerate(self.objective) if c != 0]
        lines.append("  obj: " + (" ".join(terms) if terms else "0"))
        lines.append("subject to")
        for row in self.rows:
            lhs = " ".join(f"{c:+.12g} {self.variables[j].name}" for j, c in zip(row.index, row.coef))
            lines.append(f"  {row.name}: {lhs or '0'} {row.sense.value} {row.rhs:.12g}")
        lines.append("bounds")
        for v in self.variables:
            lines.append(f"  {v.lower:.12g} <= {v.name} <= {v.upper:.12g}  [{v.block.value}]")
        ints = [v.name for v in self.variables if v.integral]
        if ints:
            lines.append("binaries")
            lines.extend(f"  {n}" for n in ints)
        lines.append("end")
        return "\n".join(lines) + "\n"


class MilpBuilder:
    """Incrementally collect variables and rows, then freeze into a model."""

    def __init__(self, name: str = "model"):
        self.name = name
        self._vars: list[VariableDef] = []
        self._names: dict[str, int] = {}
        self._rows: list[Row] = []
        self._obj: dict[int, float] = {}

    def add_var(self, name: str, lower: float = 0.0, upper: float = math.inf,
                block: Block = Block.X1, cost: float = 0.0) -> int:
        if name in self._names:
            raise ModelError(f"duplicate variable {name}")
        integral = block in (Block.Z1, Block.Z2)
        if integral:
            lower, upper = max(lower, 0.0), min(upper, 1.0)
        self._vars.append(VariableDef(name, float(lower), float(upper), integral, block))
        j = len(self._vars) - 1
        self._names[name] = j
        if cost:
            self._obj[j] = float(cost)
        return j

    def var(self, name: str) -> int:
        try:
            return self._names[name]
        except KeyError:
            raise UnknownVariable(name) from None

    def has_var(self, name: str) -> bool:
        return name in self._names

    def set_cost(self, j: int, cost: float) -> None:
        self._obj[j] = float(cost)

    def add_row(self, name: str, terms: Mapping[int, float] | Iterable[tuple[int, float]],
                sense: Sense | str, rhs: float = 0.0) -> None:
        items = terms.items() if isinstance(terms, Mapping) else terms
        merged: dict[int, float] = {}
        for j, c in items:
            merged[j] = merged.get(j, 0.0) + float(c)
        index = tuple(j for j, c in merged.items() if c != 0.0)
        coef = tuple(merged[j] for j in index)
        self._rows.append(Row(name, index, coef, Sense(sense), float(rhs)))

    def add_rows(self, rows: Iterable[Row]) -> None:
        self._rows.extend(rows)

    @property
    def n_vars(self) -> int:
        return len(self._vars)

    def build(self) -> ParametricMilp:
        obj = np.zeros(len(self._vars))
        for j, c in self._obj.items():
            obj[j] = c
        return ParametricMilp(tuple(self._vars), tuple(self._rows), obj, name=self.name)


def fix_binaries(model: ParametricMilp, assignment: Mapping[str, int]) -> ParametricMilp:
    """Fix every z1 variable to the given 0/1 value.

    The assignment must cover the z1 block exactly.
    """
    z1 = set(model.block_names(Block.Z1))
    unknown = [k for k in assignment if k not in z1]
    if unknown:
        raise UnknownVariable(f"not z1 variables: {unknown[:5]}")
    missing = z1.difference(assignment)
    if missing:
        raise PartialAssignment(f"{len(missing)} z1 variables unassigned, e.g. {sorted(missing)[:3]}")
    bounds = {}
    for name, value in assignment.items():
        if value not in (0, 1):
            raise ModelError(f"{name}: binary value expected, got {value!r}")
        bounds[model.index_of(name)] = (float(value), float(value))
    return model.with_bounds(bounds, z1_fixed=True)
