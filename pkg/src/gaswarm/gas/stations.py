"""Built-in station templates.

``toy_station`` is the small test station: one entry, two exits in two fence
groups, a compressor station with a single configuration running parallel to a
valve, and a second valve feeding the southern branch. Pipes only ever connect a
boundary node to the station, so every operation mode admits a feasible
trajectory: boundary pressures and inflows are covered by slacks, and each pipe
can absorb any pressure change through line pack.

``station_d_template`` reproduces the size statistics of a real station
(31 nodes, 37 arcs, 56 modes, 11 valves, compressor stations with 2 and 6
configurations) on a synthetic topology. It is a stress test for model size,
not a physical replica.
"""
from __future__ import annotations

from .network import (CompressorStation, Configuration, GasConstants, GasNetwork, NetworkState,
                      Node, OperationMode, Pipe, SamplingReference, Valve)

TOY_FACETS = (
    (1.0, -1.0, 0.0, 0.0),      # no decompression
    (-1.0, 1.0, 0.0, -30.0),    # pressure lift at most 30 bar
    (-1.6, 1.0, 0.0, 0.0),      # ratio at most 1.6
    (0.0, 0.0, -1.0, 0.0),      # forward flow only
    (0.0, 0.0, 1.0, -800.0),    # capacity
    (-1.0, 1.0, 0.02, -30.0),   # lift shrinks with throughput
)

DEFAULT_CONSTANT_RANGES = {
    "temperature": (278.0, 293.0),
    "norm_density": (0.78, 0.84),
    "molar_mass": (17.0, 19.0),
    "pseudo_critical_temperature": (190.0, 205.0),
    "pseudo_critical_pressure": (45.0, 47.0),
}


def toy_station() -> GasNetwork:
    p_lo, p_hi = 30.0, 80.0
    nodes = (
        Node("W", p_lo, p_hi, True, "entry", "west", 1000.0),
        Node("N", p_lo, p_hi, True, "exit", "northsouth", 1000.0),
        Node("S", p_lo, p_hi, True, "exit", "northsouth", 1000.0),
        Node("w", p_lo, p_hi),
        Node("h", p_lo, p_hi),
        Node("s", p_lo, p_hi),
    )
    pipe = dict(length=20000.0, diameter=1.0, friction=0.01, q_min=-1500.0, q_max=1500.0)
    pipes = (Pipe("P_W", "W", "w", **pipe), Pipe("P_N", "h", "N", **pipe),
             Pipe("P_S", "s", "S", **pipe))
    valves = (Valve("V1", "w", "h", -1500.0, 1500.0), Valve("V2", "h", "s", -1500.0, 1500.0))
    cs = (CompressorStation("C", "w", "h", (Configuration("cfg1", TOY_FACETS),), -1500.0, 1500.0),)
    modes = (
        OperationMode("o1", {"V1": "op", "V2": "op"}, {"C": "cl"}),
        OperationMode("o2", {"V1": "cl", "V2": "op"}, {"C": "cfg1"}),
        OperationMode("o3", {"V1": "cl", "V2": "cl"}, {"C": "by"}),
        OperationMode("o4", {"V1": "cl", "V2": "cl"}, {"C": "cfg1"}),
    )
    ref = SamplingReference(600.0, 40.0, 70.0, DEFAULT_CONSTANT_RANGES)
    return GasNetwork("toy", nodes, pipes, valves, cs, modes, GasConstants(), ref)


def _config(i: int) -> Configuration:
    lift = 20.0 + 5.0 * i
    return Configuration(f"cfg{i + 1}", (
        (1.0, -1.0, 0.0, 0.0),
        (-1.0, 1.0, 0.0, -lift),
        (-1.5, 1.0, 0.0, 0.0),
        (0.0, 0.0, -1.0, 0.0),
        (0.0, 0.0, 1.0, -(400.0 + 100.0 * i)),
    ))


def station_d_template() -> GasNetwork:
    p_lo, p_hi = 30.0, 80.0
    groups = ("g0", "g0", "g1", "g1", "g2", "g2")
    kinds = ("entry", "entry", "exit", "exit", "exit", "exit")
    attach = (0, 4, 10, 15, 20, 24)
    nodes = [Node(f"B{i}", p_lo, p_hi, True, kinds[i], groups[i], 1000.0) for i in range(6)]
    nodes += [Node(f"n{j}", p_lo, p_hi) for j in range(25)]
    pipe = dict(length=10000.0, diameter=0.8, friction=0.012, q_min=-1500.0, q_max=1500.0)
    pipes = [Pipe(f"PB{i}", f"B{i}", f"n{attach[i]}", **pipe) if kinds[i] == "entry"
             else Pipe(f"PB{i}", f"n{attach[i]}", f"B{i}", **pipe) for i in range(6)]
    valves, css = [], []
    valve_links = {2, 8, 11, 14, 20, 23}
    cs_links = {5: 2, 17: 6}
    for j in range(24):
        u, v = f"n{j}", f"n{j + 1}"
        if j in cs_links:
            cfgs = tuple(_config(i) for i in range(cs_links[j]))
            css.append(CompressorStation(f"C{len(css) + 1}", u, v, cfgs, -1500.0, 1500.0))
        elif j in valve_links:
            valves.append(Valve(f"V{len(valves) + 1}", u, v, -1500.0, 1500.0))
        else:
            pipes.append(Pipe(f"P{j}", u, v, **pipe))
    for a, b in ((1, 7), (3, 12), (9, 16), (13, 19), (18, 22)):
        valves.append(Valve(f"V{len(valves) + 1}", f"n{a}", f"n{b}", -1500.0, 1500.0))
    for a, b in ((6, 21), (2, 23)):
        pipes.append(Pipe(f"P{a}_{b}", f"n{a}", f"n{b}", **pipe))

    modes = []
    for i in range(56):
        s1 = css[0].states()[i % 4]
        s2 = css[1].states()[(i // 4) % 8]
        bits = (i * 2654435761) >> 7
        vs = {v.id: ("op" if (bits >> k) & 1 else "cl") for k, v in enumerate(valves)}
        vs[valves[0].id] = "op" if i // 32 else "cl"
        modes.append(OperationMode(f"o{i + 1}", vs, {css[0].id: s1, css[1].id: s2}))
    ref = SamplingReference(600.0, 40.0, 70.0, DEFAULT_CONSTANT_RANGES)
    return GasNetwork("station_d_template", tuple(nodes), tuple(pipes), tuple(valves), tuple(css),
                      tuple(modes), GasConstants(), ref)


def rest_state(network: GasNetwork, pressure: float | None = None, mode: str | None = None,
               constants: GasConstants | None = None) -> NetworkState:
    """Zero-flow state with every pressure equal; valid for any operation mode."""
    if pressure is None:
        lo = max(n.p_min for n in network.nodes)
        hi = min(n.p_max for n in network.nodes)
        pressure = 0.5 * (lo + hi)
    return NetworkState(
        pressures={n.id: float(pressure) for n in network.nodes},
        pipe_flows={a.id: (0.0, 0.0) for a in network.pipes},
        arc_flows={a.id: 0.0 for a in network.valves + network.compressors},
        inflows={n.id: 0.0 for n in network.boundary_nodes},
        mode=mode or network.modes[0].id,
        constants=constants or network.constants,
    )
