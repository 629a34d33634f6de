"""Network-station description, boundary instances and network states.

Units are fixed project-wide: pressure in bar, flow in 1000 Nm3/h, lengths in
metres, time in seconds. Physical coefficients are converted to SI inside the
pipe assembly using the gas constants carried by each instance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

UNIVERSAL_GAS_CONSTANT = 8314.462618  # J/(kmol K)
PASCAL_PER_BAR = 1e5
VELOCITY_FLOOR = 0.5  # m/s, used when the initial flow is (near) zero


class NetworkError(ValueError):
    pass


@dataclass(frozen=True)
class Node:
    id: str
    p_min: float
    p_max: float
    boundary: bool = False
    kind: str | None = None  # "entry" or "exit" for boundary nodes
    group: str | None = None  # fence group of a boundary node
    inflow_max: float = 0.0

    @property
    def sign(self) -> int:
        return 1 if self.kind == "entry" else -1


@dataclass(frozen=True)
class Pipe:
    id: str
    source: str
    target: str
    length: float
    diameter: float
    friction: float
    slope: float = 0.0
    q_min: float = -1e4
    q_max: float = 1e4

    @property
    def area(self) -> float:
        return math.pi * self.diameter ** 2 / 4.0


@dataclass(frozen=True)
class Valve:
    id: str
    source: str
    target: str
    q_min: float = -1e4
    q_max: float = 1e4


@dataclass(frozen=True)
class Configuration:
    id: str
    facets: tuple[tuple[float, float, float, float], ...]


@dataclass(frozen=True)
class CompressorStation:
    id: str
    source: str
    target: str
    configurations: tuple[Configuration, ...]
    q_min: float = 0.0
    q_max: float = 1e4

    def states(self) -> list[str]:
        return ["by", "cl"] + [c.id for c in self.configurations]


@dataclass(frozen=True)
class OperationMode:
    id: str
    valve_states: Mapping[str, str]  # valve id -> "op" | "cl"
    compressor_states: Mapping[str, str]  # station id -> "by" | "cl" | config id


@dataclass(frozen=True)
class GasConstants:
    temperature: float = 283.15  # K
    norm_density: float = 0.8  # kg/Nm3
    molar_mass: float = 18.0  # kg/kmol
    pseudo_critical_temperature: float = 200.0  # K
    pseudo_critical_pressure: float = 46.0  # bar
    gravity: float = 9.81

    SAMPLED = ("temperature", "norm_density", "molar_mass",
               "pseudo_critical_temperature", "pseudo_critical_pressure")

    def __post_init__(self):
        for name in self.SAMPLED + ("gravity",):
            if not getattr(self, name) > 0:
                raise NetworkError(f"gas constant {name} must be positive")

    @property
    def specific_gas_constant(self) -> float:
        return UNIVERSAL_GAS_CONSTANT / self.molar_mass

    @property
    def kg_per_s_per_unit(self) -> float:
        """Mass flow of one flow unit (1000 Nm3/h)."""
        return self.norm_density * 1000.0 / 3600.0

    def compressibility(self, pressure_bar: float) -> float:
        # Papay's correlation
        pr = pressure_bar / self.pseudo_critical_pressure
        tr = self.temperature / self.pseudo_critical_temperature
        return 1.0 - 3.52 * pr * math.exp(-2.26 * tr) + 0.274 * pr ** 2 * math.exp(-1.878 * tr)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.SAMPLED + ("gravity",)}


@dataclass(frozen=True)
class SamplingReference:
    """Historical extremes used by the synthetic data generators."""
    max_abs_flow: float
    pressure_min: float
    pressure_max: float
    constant_ranges: Mapping[str, tuple[float, float]] = field(default_factory=dict)


@dataclass(frozen=True)
class GasNetwork:
    name: str
    nodes: tuple[Node, ...]
    pipes: tuple[Pipe, ...]
    valves: tuple[Valve, ...]
    compressors: tuple[CompressorStation, ...]
    modes: tuple[OperationMode, ...]
    constants: GasConstants = GasConstants()
    reference: SamplingReference | None = None

    def __post_init__(self):
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise NetworkError("duplicate node ids")
        known = set(ids)
        arc_ids = [a.id for a in self.arcs]
        if len(set(arc_ids)) != len(arc_ids):
            raise NetworkError("duplicate arc ids")
        for a in self.arcs:
            if a.source not in known or a.target not in known:
                raise NetworkError(f"arc {a.id} references an unknown node")
        for n in self.nodes:
            if n.p_min > n.p_max:
                raise NetworkError(f"node {n.id}: empty pressure range")
            if n.boundary and (n.kind not in ("entry", "exit") or n.group is None):
                raise NetworkError(f"boundary node {n.id} needs kind and fence group")
        if not self.modes:
            raise NetworkError("at least one operation mode is required")
        for o in self.modes:
            for v in self.valves:
                if o.valve_states.get(v.id) not in ("op", "cl"):
                    raise NetworkError(f"mode {o.id} has no state for valve {v.id}")
            for cs in self.compressors:
                if o.compressor_states.get(cs.id) not in cs.states():
                    raise NetworkError(f"mode {o.id} has no valid state for station {cs.id}")

    @property
    def arcs(self) -> tuple:
        return self.pipes + self.valves + self.compressors

    @property
    def boundary_nodes(self) -> tuple[Node, ...]:
        return tuple(n for n in self.nodes if n.boundary)

    @property
    def inner_nodes(self) -> tuple[Node, ...]:
        return tuple(n for n in self.nodes if not n.boundary)

    @property
    def fence_groups(self) -> dict[str, list[str]]:
        groups: dict[str, list[str]] = {}
        for n in self.boundary_nodes:
            groups.setdefault(n.group, []).append(n.id)
        return groups

    def node(self, node_id: str) -> Node:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise NetworkError(f"unknown node {node_id}")

    def mode_index(self, mode_id: str) -> int:
        for i, o in enumerate(self.modes):
            if o.id == mode_id:
                return i
        raise NetworkError(f"unknown operation mode {mode_id}")

    def stats(self) -> dict[str, object]:
        return {
            "nodes": len(self.nodes),
            "arcs": len(self.arcs),
            "modes": len(self.modes),
            "boundary_nodes": len(self.boundary_nodes),
            "valves": len(self.valves),
            "configurations": [len(cs.configurations) for cs in self.compressors],
            "mean_pipe_length_km": (sum(p.length for p in self.pipes) / len(self.pipes) / 1000.0
                                    if self.pipes else 0.0),
        }


@dataclass(frozen=True)
class NetworkState:
    """Complete continuous and discrete state of a network at one time step."""
    pressures: Mapping[str, float]
    pipe_flows: Mapping[str, tuple[float, float]]  # (flow in at source, flow out at target)
    arc_flows: Mapping[str, float]  # valves and compressor stations
    inflows: Mapping[str, float]  # boundary nodes
    mode: str
    constants: GasConstants = GasConstants()

    def to_dict(self) -> dict:
        return {
            "pressures": dict(self.pressures),
            "pipe_flows": {k: list(v) for k, v in self.pipe_flows.items()},
            "arc_flows": dict(self.arc_flows),
            "inflows": dict(self.inflows),
            "mode": self.mode,
            "constants": self.constants.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "NetworkState":
        return cls(
            pressures={k: float(v) for k, v in d["pressures"].items()},
            pipe_flows={k: (float(v[0]), float(v[1])) for k, v in d["pipe_flows"].items()},
            arc_flows={k: float(v) for k, v in d["arc_flows"].items()},
            inflows={k: float(v) for k, v in d["inflows"].items()},
            mode=d["mode"],
            constants=GasConstants(**d.get("constants", {})),
        )


@dataclass(frozen=True)
class Instance:
    """Boundary forecast plus initial state (the parameter tuple of one MILP)."""
    flow_forecast: np.ndarray  # (boundary nodes, horizon), network boundary order
    pressure_forecast: np.ndarray  # (boundary nodes, horizon)
    initial_state: NetworkState
    granularity_s: float = 1800.0
    horizon: int = 2

    def __post_init__(self):
        for name in ("flow_forecast", "pressure_forecast"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.ndim != 2 or a.shape[1] != self.horizon:
                raise NetworkError(f"{name} must be (boundary nodes, {self.horizon})")
            if not np.all(np.isfinite(a)):
                raise NetworkError(f"{name} must be finite")
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if self.granularity_s <= 0 or self.horizon < 1:
            raise NetworkError("granularity and horizon must be positive")

    @property
    def constants(self) -> GasConstants:
        return self.initial_state.constants

    def elapsed(self, t: int) -> float:
        """Seconds between step 0 and step t."""
        return t * self.granularity_s

    def to_dict(self) -> dict:
        return {
            "flow_forecast": self.flow_forecast.tolist(),
            "pressure_forecast": self.pressure_forecast.tolist(),
            "initial_state": self.initial_state.to_dict(),
            "granularity_s": self.granularity_s,
            "horizon": self.horizon,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Instance":
        return cls(np.array(d["flow_forecast"], dtype=float),
                   np.array(d["pressure_forecast"], dtype=float),
                   NetworkState.from_dict(d["initial_state"]),
                   float(d["granularity_s"]), int(d["horizon"]))


@dataclass(frozen=True)
class ObjectiveWeights:
    pressure_slack: float = 100.0  # per bar
    flow_slack: float = 1.0  # per flow unit
    mode_change: float = 10.0
    operating_point_change: float = 1.0

    def __post_init__(self):
        vals = (self.pressure_slack, self.flow_slack, self.mode_change, self.operating_point_change)
        if min(vals) < 0 or max(vals) <= 0:
            raise NetworkError("objective weights must be nonnegative with at least one positive")


@dataclass(frozen=True)
class PipeParameters:
    """Per-instance linearisation constants of one pipe."""
    compressibility: float
    v_source: float
    v_target: float


class NonpositivePressure(NetworkError):
    pass


def compute_pipe_velocities(pipe: Pipe, state: NetworkState, constants: GasConstants,
                            compressibility: float | None = None,
                            floor: float = VELOCITY_FLOOR) -> tuple[float, float]:
    """Constant gas velocity at both pipe ends from the initial flow and pressure."""
    q_in, q_out = state.pipe_flows[pipe.id]
    p_u, p_v = state.pressures[pipe.source], state.pressures[pipe.target]
    if p_u <= 0 or p_v <= 0:
        raise NonpositivePressure(f"pipe {pipe.id}: initial pressure must be positive")
    z = compressibility if compressibility is not None else \
        constants.compressibility(0.5 * (p_u + p_v))
    rtz = constants.specific_gas_constant * constants.temperature * z
    out = []
    for q, p in ((q_in, p_u), (q_out, p_v)):
        mass = abs(q) * constants.kg_per_s_per_unit
        out.append(max(floor, mass * rtz / (p * PASCAL_PER_BAR * pipe.area)))
    return out[0], out[1]


def pipe_parameters(pipe: Pipe, state: NetworkState) -> PipeParameters:
    c = state.constants
    p_mean = 0.5 * (state.pressures[pipe.source] + state.pressures[pipe.target])
    if p_mean <= 0:
        raise NonpositivePressure(f"pipe {pipe.id}: initial pressure must be positive")
    z = c.compressibility(p_mean)
    v_u, v_v = compute_pipe_velocities(pipe, state, c, compressibility=z)
    return PipeParameters(z, v_u, v_v)
