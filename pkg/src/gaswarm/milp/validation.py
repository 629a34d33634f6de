from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .model import ParametricMilp, Sense


@dataclass
class RowViolation:
    row: str
    activity: float
    rhs: float
    sense: Sense
    violation: float


@dataclass
class ValidationReport:
    rows: list[RowViolation] = field(default_factory=list)
    bounds: list[tuple[str, float, float, float]] = field(default_factory=list)
    integrality: list[tuple[str, float]] = field(default_factory=list)
    worst_violation: float = 0.0

    @property
    def feasible(self) -> bool:
        return not (self.rows or self.bounds or self.integrality)


def row_violations(model: ParametricMilp, x: np.ndarray) -> np.ndarray:
    """Signed-free violation per row: how far the activity sits outside its sense."""
    act = model.matrix @ x
    b = model.rhs
    out = np.zeros(model.n_rows)
    for i, s in enumerate(model.senses):
        if s is Sense.LE:
            out[i] = max(act[i] - b[i], 0.0)
        elif s is Sense.GE:
            out[i] = max(b[i] - act[i], 0.0)
        else:
            out[i] = abs(act[i] - b[i])
    return out


def validate_solution(model: ParametricMilp, point: Mapping[str, float] | np.ndarray,
                      tol: float = 1e-6) -> ValidationReport:
    x = point if isinstance(point, np.ndarray) else model.point_array(point)
    act = model.matrix @ x
    viol = row_violations(model, x)
    report = ValidationReport()
    for i in np.flatnonzero(viol > tol):
        r = model.rows[i]
        report.rows.append(RowViolation(r.name, float(act[i]), r.rhs, r.sense, float(viol[i])))
    lo_v = np.maximum(model.lower - x, 0.0)
    hi_v = np.maximum(x - model.upper, 0.0)
    bv = np.maximum(lo_v, hi_v)
    for j in np.flatnonzero(bv > tol):
        v = model.variables[j]
        report.bounds.append((v.name, float(x[j]), v.lower, v.upper))
    iv = np.where(model.integral, np.abs(x - np.round(x)), 0.0)
    for j in np.flatnonzero(iv > tol):
        report.integrality.append((model.variables[j].name, float(x[j])))
    report.worst_violation = float(max(viol.max(initial=0.0), bv.max(initial=0.0), iv.max(initial=0.0)))
    return report
