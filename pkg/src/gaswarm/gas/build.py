"""Assemble complete station MILPs and read states back out of solutions."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ..milp import Block, MilpBuilder, ParametricMilp, fix_binaries
from .assembly import (RowSpec, assemble_compressor_block, assemble_flow_direction,
                       assemble_mode_coupling, assemble_node_balance, assemble_pipe_rows,
                       assemble_slack_and_objective, assemble_valve_block, chg_, d_, delta_, dir_,
                       ind_, mode_, open_, p_, pu_, pv_, q_, qc_, qin_, qout_, spm_, spp_, sqm_,
                       sqp_)
from .network import (GasNetwork, Instance, NetworkError, NetworkState, ObjectiveWeights,
                      pipe_parameters)


@dataclass(frozen=True)
class OperationModeSequence:
    """One operation mode index per future step."""
    modes: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(int(m) for m in self.modes))

    def __len__(self) -> int:
        return len(self.modes)

    def one_hot(self, n_modes: int) -> np.ndarray:
        """Array of shape (n_modes, steps)."""
        out = np.zeros((n_modes, len(self.modes)))
        out[list(self.modes), np.arange(len(self.modes))] = 1.0
        return out

    @classmethod
    def from_one_hot(cls, arr) -> "OperationModeSequence":
        a = np.asarray(arr, dtype=float)
        if a.ndim != 2 or not np.all((a == 0) | (a == 1)) or not np.all(a.sum(axis=0) == 1):
            raise NetworkError("expected a one-hot (modes, steps) array")
        return cls(tuple(int(i) for i in a.argmax(axis=0)))

    def assignment(self, network: GasNetwork) -> dict[str, int]:
        out = {}
        for t, m in enumerate(self.modes, start=1):
            if not 0 <= m < len(network.modes):
                raise NetworkError(f"mode index {m} out of range")
            for i, o in enumerate(network.modes):
                out[mode_(o.id, t)] = int(i == m)
        return out


def _emit(builder: MilpBuilder, specs: Sequence[RowSpec]) -> None:
    for s in specs:
        builder.add_row(s.name, ((builder.var(n), c) for n, c in s.terms.items()), s.sense, s.rhs)


def _declare_step(b: MilpBuilder, network: GasNetwork, t: int) -> None:
    for n in network.nodes:
        b.add_var(p_(n.id, t), n.p_min, n.p_max)
    for a in network.pipes:
        b.add_var(qin_(a.id, t), a.q_min, a.q_max)
        b.add_var(qout_(a.id, t), a.q_min, a.q_max)
    for a in network.valves:
        b.add_var(q_(a.id, t), a.q_min, a.q_max)
    for cs in network.compressors:
        b.add_var(q_(cs.id, t), cs.q_min, cs.q_max)
        nu, nv = network.node(cs.source), network.node(cs.target)
        for s in cs.states():
            b.add_var(pu_(cs.id, s, t), min(0.0, nu.p_min), max(0.0, nu.p_max))
            b.add_var(pv_(cs.id, s, t), min(0.0, nv.p_min), max(0.0, nv.p_max))
            b.add_var(qc_(cs.id, s, t), min(0.0, cs.q_min), max(0.0, cs.q_max))
        for cfg in cs.configurations:
            b.add_var(chg_(cs.id, cfg.id, t), 0.0)
    for n in network.boundary_nodes:
        b.add_var(d_(n.id, t), -n.inflow_max, n.inflow_max)
        for name in (spp_(n.id, t), spm_(n.id, t), sqp_(n.id, t), sqm_(n.id, t)):
            b.add_var(name, 0.0, block=Block.X2)
    for o in network.modes:
        b.add_var(delta_(o.id, t), 0.0, 1.0)
    for o in network.modes:
        b.add_var(mode_(o.id, t), block=Block.Z1)
    for v in network.valves:
        b.add_var(open_(v.id, t), block=Block.Z2)
    for cs in network.compressors:
        for s in cs.states():
            b.add_var(ind_(cs.id, s, t), block=Block.Z2)
    for g in network.fence_groups:
        b.add_var(dir_(g, t), block=Block.Z2)


def build_instance_milp(network: GasNetwork, instance: Instance,
                        weights: ObjectiveWeights = ObjectiveWeights(),
                        z1_fix: OperationModeSequence | None = None,
                        name: str = "station") -> ParametricMilp:
    """Time-expanded station MILP for one instance, optionally with fixed modes."""
    k = instance.horizon
    b = MilpBuilder(name)
    for t in range(1, k + 1):
        _declare_step(b, network, t)

    params = {a.id: pipe_parameters(a, instance.initial_state) for a in network.pipes}
    for t in range(1, k + 1):
        for a in network.pipes:
            _emit(b, assemble_pipe_rows(a, t - 1, t, instance, params[a.id]))
        for n in network.nodes:
            _emit(b, [assemble_node_balance(network, n, t)])
        for cs in network.compressors:
            _emit(b, assemble_compressor_block(network, cs, t))
        for v in network.valves:
            _emit(b, assemble_valve_block(network, v, t))
        _emit(b, assemble_mode_coupling(network, t))
        _emit(b, assemble_flow_direction(network, t))
    rows, cost = assemble_slack_and_objective(network, instance, weights)
    _emit(b, rows)
    for n, c in cost.items():
        b.set_cost(b.var(n), c)
    model = b.build()
    if z1_fix is not None:
        if len(z1_fix) != k:
            raise NetworkError(f"mode sequence length {len(z1_fix)} != horizon {k}")
        model = fix_binaries(model, z1_fix.assignment(network))
    return model


# -- reading solutions ----------------------------------------------------

def mode_sequence(network: GasNetwork, point: Mapping[str, float], horizon: int) -> OperationModeSequence:
    seq = []
    for t in range(1, horizon + 1):
        vals = [point[mode_(o.id, t)] for o in network.modes]
        seq.append(int(np.argmax(vals)))
    return OperationModeSequence(tuple(seq))


def extract_state(network: GasNetwork, instance: Instance, point: Mapping[str, float],
                  t: int) -> NetworkState:
    """Network state at step ``t`` of a solved trajectory (t = 0 is the initial state)."""
    if t == 0:
        return instance.initial_state
    if not 1 <= t <= instance.horizon:
        raise ValueError(f"step {t} outside 0..{instance.horizon}")
    seq = mode_sequence(network, point, instance.horizon)
    return NetworkState(
        pressures={n.id: float(point[p_(n.id, t)]) for n in network.nodes},
        pipe_flows={a.id: (float(point[qin_(a.id, t)]), float(point[qout_(a.id, t)]))
                    for a in network.pipes},
        arc_flows={a.id: float(point[q_(a.id, t)]) for a in network.valves + network.compressors},
        inflows={n.id: float(point[d_(n.id, t)]) for n in network.boundary_nodes},
        mode=network.modes[seq.modes[t - 1]].id,
        constants=instance.constants,
    )


def build_state_model(network: GasNetwork, state: NetworkState) -> ParametricMilp:
    """Single-step static model: balance, valve, compressor, mode and direction rows.

    Pipe rows are omitted because they couple two steps.
    """
    b = MilpBuilder("state")
    _declare_step(b, network, 0)
    for n in network.nodes:
        _emit(b, [assemble_node_balance(network, n, 0)])
    for cs in network.compressors:
        _emit(b, assemble_compressor_block(network, cs, 0))
    for v in network.valves:
        _emit(b, assemble_valve_block(network, v, 0))
    _emit(b, assemble_mode_coupling(network, 0))
    _emit(b, assemble_flow_direction(network, 0))
    return b.build()


def state_point(network: GasNetwork, state: NetworkState) -> dict[str, float]:
    """Full assignment of the single-step model variables implied by a state."""
    t = 0
    mode = network.modes[network.mode_index(state.mode)]
    pt: dict[str, float] = {}
    for n in network.nodes:
        pt[p_(n.id, t)] = state.pressures[n.id]
    for a in network.pipes:
        pt[qin_(a.id, t)], pt[qout_(a.id, t)] = state.pipe_flows[a.id]
    for a in network.valves:
        pt[q_(a.id, t)] = state.arc_flows[a.id]
        pt[open_(a.id, t)] = float(mode.valve_states[a.id] == "op")
    for cs in network.compressors:
        active = mode.compressor_states[cs.id]
        pt[q_(cs.id, t)] = state.arc_flows[cs.id]
        for s in cs.states():
            on = s == active
            pt[ind_(cs.id, s, t)] = float(on)
            pt[pu_(cs.id, s, t)] = state.pressures[cs.source] if on else 0.0
            pt[pv_(cs.id, s, t)] = state.pressures[cs.target] if on else 0.0
            pt[qc_(cs.id, s, t)] = state.arc_flows[cs.id] if on else 0.0
        for cfg in cs.configurations:
            pt[chg_(cs.id, cfg.id, t)] = 0.0
    for n in network.boundary_nodes:
        pt[d_(n.id, t)] = state.inflows[n.id]
        for name in (spp_(n.id, t), spm_(n.id, t), sqp_(n.id, t), sqm_(n.id, t)):
            pt[name] = 0.0
    for o in network.modes:
        pt[delta_(o.id, t)] = 0.0
        pt[mode_(o.id, t)] = float(o.id == mode.id)
    for g, members in network.fence_groups.items():
        pt[dir_(g, t)] = float(sum(state.inflows[v] for v in members) > 0)
    return pt

