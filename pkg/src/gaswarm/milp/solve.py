"""LP and MILP solve entry points.

``solve_milp`` is a best-first branch-and-bound over the binary variables.
Child relaxations start from the parent's optimal basis; branching picks
the most fractional binary (lowest index on ties) and nodes are ordered by
their parent's LP bound, FIFO on ties.
"""
from __future__ import annotations

import enum
import heapq
import itertools
import logging
import time
import warnings
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .model import ModelError, ParametricMilp
from .simplex import LpRelaxation, LpStatus
from .validation import validate_solution

log = logging.getLogger(__name__)


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    FEASIBLE = "feasible"  # time limit hit with an incumbent
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class IncumbentSource(str, enum.Enum):
    BRANCH_AND_BOUND = "branch_and_bound"
    WARM_START = "warm_start_accepted"


class FreeIntegerPresent(ModelError):
    pass


class HintInfeasible(UserWarning):
    pass


@dataclass(frozen=True)
class SolveParams:
    time_limit_s: float = 3600.0
    feasibility_tol: float = 1e-6
    mip_gap_rel: float = 1e-4
    mip_gap_abs: float = 1e-2

    def __post_init__(self):
        for name in ("time_limit_s", "feasibility_tol", "mip_gap_rel", "mip_gap_abs"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class MilpResult:
    status: Status
    objective: float
    point: dict[str, float] | None
    node_count: int = 0
    wall_time: float = 0.0
    incumbent_source: IncumbentSource = IncumbentSource.BRANCH_AND_BOUND
    bound: float = -np.inf
    lp_iterations: int = 0
    time_limit_hit: bool = False
    hint_accepted: bool | None = None
    x: np.ndarray | None = field(default=None, repr=False)

    @property
    def has_solution(self) -> bool:
        return self.status in (Status.OPTIMAL, Status.FEASIBLE)


def _relaxation(model: ParametricMilp) -> LpRelaxation:
    return LpRelaxation(model.matrix, model.senses, model.rhs, model.objective)


def solve_lp(model: ParametricMilp) -> MilpResult:
    """Solve a model whose integral variables are all fixed."""
    free = model.integral & (model.lower != model.upper)
    if free.any():
        names = [model.variables[j].name for j in np.flatnonzero(free)[:3]]
        raise FreeIntegerPresent(f"unfixed integral variables, e.g. {names}")
    t0 = time.perf_counter()
    sol = _relaxation(model).solve(np.array(model.lower), np.array(model.upper))
    wall = time.perf_counter() - t0
    if sol.status is LpStatus.INFEASIBLE:
        return MilpResult(Status.INFEASIBLE, np.inf, None, 0, wall, bound=np.inf,
                          lp_iterations=sol.iterations)
    if sol.status is LpStatus.UNBOUNDED:
        return MilpResult(Status.UNBOUNDED, -np.inf, None, 0, wall, bound=-np.inf,
                          lp_iterations=sol.iterations)
    return MilpResult(Status.OPTIMAL, sol.objective, model.point_dict(sol.x), 0, wall,
                      bound=sol.dual_bound, lp_iterations=sol.iterations, x=sol.x)


def _gap_allowance(params: SolveParams, incumbent: float) -> float:
    return max(params.mip_gap_abs, params.mip_gap_rel * abs(incumbent))


def solve_milp(model: ParametricMilp, params: SolveParams = SolveParams(),
               incumbent_hint: Mapping[str, float] | None = None) -> MilpResult:
    """Best-first branch-and-bound with an optional warm-start incumbent."""
    t0 = time.perf_counter()
    deadline = t0 + params.time_limit_s
    lp = _relaxation(model)
    int_idx = np.flatnonzero(model.integral & (model.lower != model.upper))
    tol = params.feasibility_tol

    inc_x: np.ndarray | None = None
    inc_obj = np.inf
    source = IncumbentSource.BRANCH_AND_BOUND
    hint_accepted = None
    if incumbent_hint is not None:
        hx = model.point_array(incumbent_hint)
        report = validate_solution(model, hx, tol)
        if report.feasible:
            hx = hx.copy()
            hx[model.integral] = np.round(hx[model.integral])
            inc_x, inc_obj = hx, model.objective_value(hx)
            source = IncumbentSource.WARM_START
            hint_accepted = True
        else:
            hint_accepted = False
            warnings.warn(f"incumbent hint rejected: worst violation {report.worst_violation:.3g}",
                          HintInfeasible, stacklevel=2)

    counter = itertools.count()
    heap: list[tuple] = []
    heapq.heappush(heap, (-np.inf, next(counter), np.array(model.lower), np.array(model.upper), None))
    nodes = 0
    iters = 0
    best_bound = -np.inf
    timed_out = False
    unbounded = False

    while heap:
        bound, _, lo, hi, warm = heap[0]
        if inc_x is not None and bound >= inc_obj - _gap_allowance(params, inc_obj):
            # every open node is within the gap; heap is ordered by bound
            break
        if time.perf_counter() > deadline:
            timed_out = True
            break
        heapq.heappop(heap)
        sol = lp.solve(lo, hi, warm=warm)
        nodes += 1
        iters += sol.iterations
        if sol.status is LpStatus.INFEASIBLE:
            continue
        if sol.status is LpStatus.UNBOUNDED:
            unbounded = True
            break
        node_obj = sol.objective
        if inc_x is not None and node_obj >= inc_obj - _gap_allowance(params, inc_obj):
            continue
        xv = sol.x
        frac = np.abs(xv[int_idx] - np.round(xv[int_idx]))
        if int_idx.size == 0 or frac.max() <= tol:
            cand = xv.copy()
            cand[model.integral] = np.round(cand[model.integral])
            cand_obj = model.objective_value(cand)
            if cand_obj < inc_obj:
                inc_x, inc_obj = cand, cand_obj
                source = IncumbentSource.BRANCH_AND_BOUND
            continue
        # most fractional, lowest index on ties
        dist = np.abs(frac - 0.5)
        j = int(int_idx[np.flatnonzero(dist <= dist.min() + 1e-12)[0]])
        down_hi = hi.copy()
        down_hi[j] = np.floor(xv[j])
        up_lo = lo.copy()
        up_lo[j] = np.ceil(xv[j])
        # children start from this node's optimal basis
        heapq.heappush(heap, (node_obj, next(counter), lo, down_hi, sol.basis))
        heapq.heappush(heap, (node_obj, next(counter), up_lo, hi, sol.basis))

    if heap and not unbounded:
        best_bound = min(heap[0][0], inc_obj)
    else:
        best_bound = inc_obj
    wall = time.perf_counter() - t0
    if unbounded:
        return MilpResult(Status.UNBOUNDED, -np.inf, None, nodes, wall, bound=-np.inf,
                          lp_iterations=iters, hint_accepted=hint_accepted)
    if inc_x is None:
        return MilpResult(Status.INFEASIBLE, np.inf, None, nodes, wall, bound=best_bound,
                          lp_iterations=iters, time_limit_hit=timed_out, hint_accepted=hint_accepted)
    status = Status.FEASIBLE if timed_out else Status.OPTIMAL
    return MilpResult(status, inc_obj, model.point_dict(inc_x), nodes, wall, source,
                      bound=best_bound, lp_iterations=iters, time_limit_hit=timed_out,
                      hint_accepted=hint_accepted, x=inc_x)
