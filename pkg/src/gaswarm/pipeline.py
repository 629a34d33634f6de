"""Primal heuristic, warm-started solves and suite evaluation."""
from __future__ import annotations

import csv
import io
import json
import logging
import time
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .gas import GasNetwork, Instance, ObjectiveWeights, OperationModeSequence, build_instance_milp
from .gas.assembly import dir_, mode_, p_
from .milp import HintInfeasible, MilpResult, ParametricMilp, SolveParams, solve_milp
from .neural import NetworkPair
from .neural.nets import round_to_one_hot, to_sequences

log = logging.getLogger(__name__)

CSV_COLUMNS = ("instance_id", "f_heuristic", "f_cold", "t_infer_s", "t_heuristic_s", "t_warm_s",
               "t_cold_s", "nodes_warm", "nodes_cold", "accepted")


def shifted_geometric_mean(values: Sequence[float], shift: float = 1.0) -> float:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("shifted geometric mean of nothing")
    if np.any(v + shift <= 0):
        raise ValueError("values must exceed -shift")
    return float(np.exp(np.mean(np.log(v + shift))) - shift)


@dataclass
class HeuristicResult:
    z1: OperationModeSequence
    result: MilpResult
    t_infer_s: float
    t_solve_s: float

    @property
    def objective(self) -> float:
        return self.result.objective

    @property
    def point(self):
        return self.result.point


def propose_modes(pair: NetworkPair, instance: Instance) -> tuple[OperationModeSequence, float]:
    t0 = time.perf_counter()
    z, _ = pair.forward(pair.encoder.encode([instance]))
    seq = to_sequences(round_to_one_hot(z.data))[0]
    return seq, time.perf_counter() - t0


def primal_heuristic(network: GasNetwork, instance: Instance, pair: NetworkPair,
                     weights: ObjectiveWeights = ObjectiveWeights(),
                     params: SolveParams = SolveParams()) -> HeuristicResult:
    """Generate modes, fix them and solve the restricted problem."""
    seq, t_infer = propose_modes(pair, instance)
    t0 = time.perf_counter()
    res = solve_milp(build_instance_milp(network, instance, weights, seq), params)
    return HeuristicResult(seq, res, t_infer, time.perf_counter() - t0)


def partial_solution(network: GasNetwork, point: Mapping[str, float], horizon: int) -> dict[str, float]:
    """Modes, flow directions and boundary pressures of every future step."""
    out = {}
    for t in range(1, horizon + 1):
        for o in network.modes:
            out[mode_(o.id, t)] = point[mode_(o.id, t)]
        for g in network.fence_groups:
            out[dir_(g, t)] = point[dir_(g, t)]
        for n in network.boundary_nodes:
            out[p_(n.id, t)] = point[p_(n.id, t)]
    return out


def complete_partial(model: ParametricMilp, partial: Mapping[str, float],
                     params: SolveParams = SolveParams()) -> dict[str, float] | None:
    """Fix the partial values and re-solve for a full point; None if that fails."""
    bounds = {}
    for name, val in partial.items():
        j = model.index_of(name)
        if model.integral[j]:
            val = float(round(val))
        bounds[j] = (val, val)
    res = solve_milp(model.with_bounds(bounds), params)
    return res.point if res.has_solution else None


@dataclass
class EvalRecord:
    instance_id: str
    f_heuristic: float | None
    f_cold: float | None
    f_warm: float | None
    t_infer_s: float
    t_heuristic_s: float
    t_warm_s: float
    t_cold_s: float
    nodes_warm: int
    nodes_cold: int
    accepted: bool
    status_cold: str = ""
    error: str = ""

    def row(self, timings: bool) -> list[str]:
        def num(x):
            return "" if x is None else repr(float(x))

        def tm(x):
            return repr(float(x)) if timings else ""
        return [self.instance_id, num(self.f_heuristic), num(self.f_cold), tm(self.t_infer_s),
                tm(self.t_heuristic_s), tm(self.t_warm_s), tm(self.t_cold_s), str(self.nodes_warm),
                str(self.nodes_cold), str(self.accepted).lower()]


def warm_start_solve(network: GasNetwork, instance: Instance, pair: NetworkPair,
                     weights: ObjectiveWeights = ObjectiveWeights(),
                     params: SolveParams = SolveParams(), instance_id: str = "instance",
                     cold: MilpResult | None = None) -> EvalRecord:
    """Heuristic, partial-solution hint completed by a fixed re-solve, then warm and cold solves."""
    model = build_instance_milp(network, instance, weights)
    heur = primal_heuristic(network, instance, pair, weights, params)
    hint = None
    if heur.result.has_solution:
        hint = complete_partial(model, partial_solution(network, heur.point, instance.horizon), params)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HintInfeasible)
        warm = solve_milp(model, params, incumbent_hint=hint)
    if cold is None:
        cold = solve_milp(model, params)
    return EvalRecord(instance_id, heur.objective if heur.result.has_solution else None,
                      cold.objective if cold.has_solution else None,
                      warm.objective if warm.has_solution else None,
                      heur.t_infer_s, heur.t_solve_s, warm.wall_time, cold.wall_time,
                      warm.node_count, cold.node_count, bool(warm.hint_accepted),
                      cold.status.value)


@dataclass
class SuiteReport:
    records: list[EvalRecord]
    config: dict

    def aggregate(self, timings: bool) -> dict:
        ok = [r for r in self.records if not r.error and r.f_cold is not None]
        agg: dict = {"instances": len(self.records), "failed": len(self.records) - len(ok)}
        if not ok:
            return agg
        agg["acceptance_rate"] = float(np.mean([r.accepted for r in ok]))
        gaps = [r.f_heuristic - r.f_cold for r in ok if r.f_heuristic is not None]
        if gaps:
            agg["heuristic_gap"] = {"min": min(gaps), "median": float(np.median(gaps)), "max": max(gaps),
                                    "optimal_fraction": float(np.mean([g <= 1e-2 for g in gaps]))}
        agg["node_ratio_sgm"] = shifted_geometric_mean([r.nodes_cold / max(r.nodes_warm, 1) for r in ok])
        if timings:
            ratios = [r.t_cold_s / r.t_warm_s for r in ok if r.t_warm_s > 0]
            if ratios:
                agg["speedup"] = shifted_geometric_mean(ratios) - 1.0
            agg["mean_t_infer_s"] = float(np.mean([r.t_infer_s for r in ok]))
        return agg

    def csv_text(self, timings: bool = False) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            w.writerow(r.row(timings))
        return buf.getvalue()

    def json_obj(self, timings: bool = False) -> dict:
        recs = []
        for r in self.records:
            d = asdict(r)
            if not timings:
                for k in ("t_infer_s", "t_heuristic_s", "t_warm_s", "t_cold_s"):
                    d[k] = None
            recs.append(d)
        return {"config": self.config, "aggregate": self.aggregate(timings), "records": recs}

    def write(self, out_dir: str | Path, timings: bool = False) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        c, j = out / "report.csv", out / "report.json"
        c.write_text(self.csv_text(timings))
        j.write_text(json.dumps(self.json_obj(timings), indent=1, sort_keys=True) + "\n")
        return c, j


def evaluate_suite(network: GasNetwork, instances: Sequence[tuple[str, Instance]], pair: NetworkPair,
                   weights: ObjectiveWeights = ObjectiveWeights(), params: SolveParams = SolveParams(),
                   config: dict | None = None) -> SuiteReport:
    if not instances:
        raise ValueError("evaluation needs at least one instance")
    records = []
    for iid, inst in sorted(instances, key=lambda p: p[0]):
        try:
            records.append(warm_start_solve(network, inst, pair, weights, params, iid))
        except Exception as exc:  # one broken instance must not end the suite
            log.warning("instance %s failed: %r", iid, exc)
            records.append(EvalRecord(iid, None, None, None, 0.0, 0.0, 0.0, 0.0, 0, 0, False,
                                      error=repr(exc)))
    return SuiteReport(records, dict(config or {}))
