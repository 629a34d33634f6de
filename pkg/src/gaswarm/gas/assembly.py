"""Row assembly for the time-expanded station model.

Every ``assemble_*`` function returns :class:`RowSpec` objects keyed by
variable *names*, so each block can be inspected without building a model.
Terms that refer to step 0 are constants taken from the initial state and are
moved to the right-hand side.

Variable naming (``t`` is the step index, 1..k):

=================  =============================================
``p[v,t]``         node pressure (bar)
``qin[a,t]``       pipe flow at the source end
``qout[a,t]``      pipe flow at the target end
``q[a,t]``         valve / compressor station flow
``pu[a,s,t]``      convex-hull copy of the inlet pressure, state ``s``
``pv[a,s,t]``      convex-hull copy of the outlet pressure
``qc[a,s,t]``      convex-hull copy of the station flow
``d[v,t]``         boundary inflow (positive into the network)
``open[a,t]``      valve open indicator
``ind[a,s,t]``     compressor station state indicator
``mode[o,t]``      operation mode choice (the z1 block)
``dir[g,t]``       fence group flow direction (1 = inflow)
``spp/spm[v,t]``   pressure slack (+/-)
``sqp/sqm[v,t]``   flow slack (+/-)
``delta[o,t]``     mode change magnitude
``chg[a,c,t]``     configuration flow change magnitude
=================  =============================================
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

from ..milp import Sense
from .network import (PASCAL_PER_BAR, CompressorStation, GasNetwork, Instance, NetworkError,
                      Node, ObjectiveWeights, Pipe, PipeParameters, Valve, pipe_parameters)


class UnboundedBigM(NetworkError):
    pass


class MissingForecast(NetworkError):
    pass


class IncompleteMapping(UserWarning):
    pass


@dataclass(frozen=True)
class RowSpec:
    name: str
    terms: dict[str, float]
    sense: Sense
    rhs: float = 0.0
    constant_terms: dict[str, float] = field(default_factory=dict, compare=False)


def p_(v, t): return f"p[{v},{t}]"
def qin_(a, t): return f"qin[{a},{t}]"
def qout_(a, t): return f"qout[{a},{t}]"
def q_(a, t): return f"q[{a},{t}]"
def pu_(a, s, t): return f"pu[{a},{s},{t}]"
def pv_(a, s, t): return f"pv[{a},{s},{t}]"
def qc_(a, s, t): return f"qc[{a},{s},{t}]"
def d_(v, t): return f"d[{v},{t}]"
def open_(a, t): return f"open[{a},{t}]"
def ind_(a, s, t): return f"ind[{a},{s},{t}]"
def mode_(o, t): return f"mode[{o},{t}]"
def dir_(g, t): return f"dir[{g},{t}]"
def spp_(v, t): return f"spp[{v},{t}]"
def spm_(v, t): return f"spm[{v},{t}]"
def sqp_(v, t): return f"sqp[{v},{t}]"
def sqm_(v, t): return f"sqm[{v},{t}]"
def delta_(o, t): return f"delta[{o},{t}]"
def chg_(a, c, t): return f"chg[{a},{c},{t}]"


# -- pipes ----------------------------------------------------------------

def continuity_coefficient(rtz: float, dt: float, length: float, area: float) -> float:
    """SI flow coefficient of the continuity row: Pa per kg/s."""
    return 2.0 * rtz * dt / (length * area)


def friction_coefficient(friction: float, length: float, diameter: float, area: float) -> float:
    """SI factor multiplying velocity times mass flow in the momentum row."""
    return friction * length / (4.0 * diameter * area)


def gravity_coefficient(gravity: float, slope: float, length: float, rtz: float) -> float:
    return gravity * slope * length / (2.0 * rtz)


def assemble_pipe_rows(pipe: Pipe, t1: int, t2: int, instance: Instance,
                       params: PipeParameters | None = None) -> list[RowSpec]:
    """Continuity and momentum rows of one pipe between steps t1 and t2."""
    if t2 != t1 + 1:
        raise ValueError("pipe rows couple adjacent steps only")
    c = instance.constants
    if params is None:
        params = pipe_parameters(pipe, instance.initial_state)
    rtz = c.specific_gas_constant * c.temperature * params.compressibility
    unit = c.kg_per_s_per_unit / PASCAL_PER_BAR  # flow unit -> kg/s, Pa -> bar
    dt = instance.elapsed(t2) - instance.elapsed(t1)
    cq = continuity_coefficient(rtz, dt, pipe.length, pipe.area) * unit
    u, v = pipe.source, pipe.target

    terms = {p_(u, t2): 1.0, p_(v, t2): 1.0, qout_(pipe.id, t2): cq, qin_(pipe.id, t2): -cq}
    rhs = 0.0
    const = {}
    if t1 == 0:
        for node in (u, v):
            val = instance.initial_state.pressures[node]
            const[p_(node, 0)] = -1.0
            rhs += val
    else:
        terms[p_(u, t1)] = terms.get(p_(u, t1), 0.0) - 1.0
        terms[p_(v, t1)] = terms.get(p_(v, t1), 0.0) - 1.0
    cont = RowSpec(f"continuity[{pipe.id},{t2}]", terms, Sense.EQ, rhs, const)

    g = gravity_coefficient(c.gravity, pipe.slope, pipe.length, rtz)
    f = friction_coefficient(pipe.friction, pipe.length, pipe.diameter, pipe.area) * unit
    mom = RowSpec(f"momentum[{pipe.id},{t2}]", {
        p_(u, t2): -1.0 + g,
        p_(v, t2): 1.0 + g,
        qin_(pipe.id, t2): f * params.v_source,
        qout_(pipe.id, t2): f * params.v_target,
    }, Sense.EQ, 0.0)
    return [cont, mom]


# -- flow conservation ----------------------------------------------------

def assemble_node_balance(network: GasNetwork, node: Node, t: int) -> RowSpec:
    terms: dict[str, float] = {}

    def add(name, c):
        terms[name] = terms.get(name, 0.0) + c

    for a in network.pipes:
        if a.target == node.id:
            add(qout_(a.id, t), 1.0)
        if a.source == node.id:
            add(qin_(a.id, t), -1.0)
    for a in network.valves + network.compressors:
        if a.target == node.id:
            add(q_(a.id, t), 1.0)
        if a.source == node.id:
            add(q_(a.id, t), -1.0)
    if node.boundary:
        add(d_(node.id, t), 1.0)
    return RowSpec(f"balance[{node.id},{t}]", terms, Sense.EQ, 0.0)


# -- valves ---------------------------------------------------------------

def assemble_valve_block(network: GasNetwork, valve: Valve, t: int) -> list[RowSpec]:
    nu, nv = network.node(valve.source), network.node(valve.target)
    bounds = (nu.p_min, nu.p_max, nv.p_min, nv.p_max, valve.q_min, valve.q_max)
    if not all(math.isfinite(b) for b in bounds):
        raise UnboundedBigM(f"valve {valve.id} needs finite pressure and flow bounds")
    a, m = valve.id, open_(valve.id, t)
    pu, pv, q = p_(valve.source, t), p_(valve.target, t), q_(a, t)
    m_hi = nu.p_max - nv.p_min
    m_lo = nu.p_min - nv.p_max
    # p_u - p_v <= (1 - m) M_hi  and  p_u - p_v >= (1 - m) M_lo
    return [
        RowSpec(f"valve_p_hi[{a},{t}]", {pu: 1.0, pv: -1.0, m: m_hi}, Sense.LE, m_hi),
        RowSpec(f"valve_p_lo[{a},{t}]", {pu: 1.0, pv: -1.0, m: m_lo}, Sense.GE, m_lo),
        RowSpec(f"valve_q_hi[{a},{t}]", {q: 1.0, m: -valve.q_max}, Sense.LE, 0.0),
        RowSpec(f"valve_q_lo[{a},{t}]", {q: 1.0, m: -valve.q_min}, Sense.GE, 0.0),
    ]


# -- compressor stations --------------------------------------------------

def assemble_compressor_block(network: GasNetwork, cs: CompressorStation, t: int) -> list[RowSpec]:
    if not cs.configurations:
        raise NetworkError(f"compressor station {cs.id} has no configurations")
    a = cs.id
    nu, nv = network.node(cs.source), network.node(cs.target)
    states = cs.states()
    rows = [RowSpec(f"cs_choice[{a},{t}]", {ind_(a, s, t): 1.0 for s in states}, Sense.EQ, 1.0)]
    for agg, copy in ((p_(cs.source, t), pu_), (p_(cs.target, t), pv_), (q_(a, t), qc_)):
        terms = {agg: 1.0}
        for s in states:
            terms[copy(a, s, t)] = -1.0
        rows.append(RowSpec(f"cs_sum[{agg}]", terms, Sense.EQ, 0.0))
    for s in states:
        m = ind_(a, s, t)
        for copy, lo, hi in ((pu_, nu.p_min, nu.p_max), (pv_, nv.p_min, nv.p_max),
                             (qc_, cs.q_min, cs.q_max)):
            name = copy(a, s, t)
            rows.append(RowSpec(f"cs_hi[{name}]", {name: 1.0, m: -hi}, Sense.LE, 0.0))
            rows.append(RowSpec(f"cs_lo[{name}]", {name: 1.0, m: -lo}, Sense.GE, 0.0))
    rows.append(RowSpec(f"cs_bypass[{a},{t}]", {pu_(a, "by", t): 1.0, pv_(a, "by", t): -1.0},
                        Sense.EQ, 0.0))
    rows.append(RowSpec(f"cs_closed[{a},{t}]", {qc_(a, "cl", t): 1.0}, Sense.EQ, 0.0))
    for cfg in cs.configurations:
        if not cfg.facets:
            raise NetworkError(f"configuration {cfg.id} of {a} has no facets")
        for i, (a0, a1, a2, a3) in enumerate(cfg.facets):
            rows.append(RowSpec(f"cs_facet[{a},{cfg.id},{i},{t}]", {
                pu_(a, cfg.id, t): a0, pv_(a, cfg.id, t): a1,
                qc_(a, cfg.id, t): a2, ind_(a, cfg.id, t): a3}, Sense.LE, 0.0))
    return rows


# -- operation modes ------------------------------------------------------

def assemble_mode_coupling(network: GasNetwork, t: int) -> list[RowSpec]:
    rows = [RowSpec(f"mode_choice[{t}]", {mode_(o.id, t): 1.0 for o in network.modes},
                    Sense.EQ, 1.0)]
    for v in network.valves:
        terms = {open_(v.id, t): 1.0}
        for o in network.modes:
            if o.valve_states[v.id] == "op":
                terms[mode_(o.id, t)] = -1.0
        rows.append(RowSpec(f"mode_valve[{v.id},{t}]", terms, Sense.EQ, 0.0))
    for cs in network.compressors:
        for s in cs.states():
            terms = {ind_(cs.id, s, t): 1.0}
            for o in network.modes:
                if o.compressor_states[cs.id] == s:
                    terms[mode_(o.id, t)] = -1.0
            if len(terms) == 1:
                warnings.warn(f"state {s} of {cs.id} is not used by any operation mode",
                              IncompleteMapping, stacklevel=2)
            rows.append(RowSpec(f"mode_cs[{cs.id},{s},{t}]", terms, Sense.EQ, 0.0))
    return rows


def flow_direction_bound(network: GasNetwork, group: str) -> float:
    return sum(network.node(v).inflow_max for v in network.fence_groups[group])


def assemble_flow_direction(network: GasNetwork, t: int) -> list[RowSpec]:
    """Shared flow sign per fence group: sum of inflows <= M dir, >= -M (1 - dir)."""
    rows = []
    for g, members in network.fence_groups.items():
        big_m = flow_direction_bound(network, g)
        terms = {d_(v, t): 1.0 for v in members}
        rows.append(RowSpec(f"dir_hi[{g},{t}]", {**terms, dir_(g, t): -big_m}, Sense.LE, 0.0))
        rows.append(RowSpec(f"dir_lo[{g},{t}]", {**terms, dir_(g, t): -big_m}, Sense.GE, -big_m))
    return rows


# -- slacks and objective -------------------------------------------------

def initial_copy_flow(network: GasNetwork, instance: Instance, cs: CompressorStation,
                      cfg: str) -> float:
    mode = network.modes[network.mode_index(instance.initial_state.mode)]
    if mode.compressor_states[cs.id] != cfg:
        return 0.0
    return float(instance.initial_state.arc_flows[cs.id])


def assemble_slack_and_objective(network: GasNetwork, instance: Instance,
                                 weights: ObjectiveWeights) -> tuple[list[RowSpec], dict[str, float]]:
    boundary = network.boundary_nodes
    k = instance.horizon
    shape = (len(boundary), k)
    if instance.flow_forecast.shape != shape or instance.pressure_forecast.shape != shape:
        raise MissingForecast(f"forecasts must have shape {shape}")
    rows: list[RowSpec] = []
    cost: dict[str, float] = {}
    init_mode = instance.initial_state.mode
    network.mode_index(init_mode)
    for t in range(1, k + 1):
        for i, node in enumerate(boundary):
            v = node.id
            rows.append(RowSpec(f"slack_p[{v},{t}]", {p_(v, t): 1.0, spp_(v, t): -1.0, spm_(v, t): 1.0},
                                Sense.EQ, float(instance.pressure_forecast[i, t - 1])))
            rows.append(RowSpec(f"slack_q[{v},{t}]", {d_(v, t): 1.0, sqp_(v, t): -1.0, sqm_(v, t): 1.0},
                                Sense.EQ, float(instance.flow_forecast[i, t - 1])))
            for s in (spp_(v, t), spm_(v, t)):
                cost[s] = weights.pressure_slack
            for s in (sqp_(v, t), sqm_(v, t)):
                cost[s] = weights.flow_slack
        for o in network.modes:
            dl, m = delta_(o.id, t), mode_(o.id, t)
            cost[dl] = weights.mode_change
            if t == 1:
                prev = 1.0 if o.id == init_mode else 0.0
                rows.append(RowSpec(f"delta_up[{o.id},{t}]", {dl: 1.0, m: -1.0}, Sense.GE, -prev))
                rows.append(RowSpec(f"delta_dn[{o.id},{t}]", {dl: 1.0, m: 1.0}, Sense.GE, prev))
            else:
                mp = mode_(o.id, t - 1)
                rows.append(RowSpec(f"delta_up[{o.id},{t}]", {dl: 1.0, m: -1.0, mp: 1.0}, Sense.GE, 0.0))
                rows.append(RowSpec(f"delta_dn[{o.id},{t}]", {dl: 1.0, m: 1.0, mp: -1.0}, Sense.GE, 0.0))
        for cs in network.compressors:
            for cfg in cs.configurations:
                e, q = chg_(cs.id, cfg.id, t), qc_(cs.id, cfg.id, t)
                cost[e] = weights.operating_point_change
                if t == 1:
                    prev = initial_copy_flow(network, instance, cs, cfg.id)
                    rows.append(RowSpec(f"chg_up[{cs.id},{cfg.id},{t}]", {e: 1.0, q: -1.0}, Sense.GE, -prev))
                    rows.append(RowSpec(f"chg_dn[{cs.id},{cfg.id},{t}]", {e: 1.0, q: 1.0}, Sense.GE, prev))
                else:
                    qp = qc_(cs.id, cfg.id, t - 1)
                    rows.append(RowSpec(f"chg_up[{cs.id},{cfg.id},{t}]", {e: 1.0, q: -1.0, qp: 1.0},
                                        Sense.GE, 0.0))
                    rows.append(RowSpec(f"chg_dn[{cs.id},{cfg.id},{t}]", {e: 1.0, q: 1.0, qp: -1.0},
                                        Sense.GE, 0.0))
    return rows, cost
