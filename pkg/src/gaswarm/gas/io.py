"""JSON files for networks and instances."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Mapping

from .network import (CompressorStation, Configuration, GasConstants, GasNetwork, Instance, Node,
                      OperationMode, Pipe, SamplingReference, Valve)

FORMAT_VERSION = 1


class FormatError(ValueError):
    pass


def _check_version(d: Mapping, kind: str) -> None:
    v = d.get("format_version")
    if v != FORMAT_VERSION:
        raise FormatError(f"{kind} file has format_version {v!r}, expected {FORMAT_VERSION}")


def network_to_dict(net: GasNetwork) -> dict[str, Any]:
    out: dict[str, Any] = {
        "format_version": FORMAT_VERSION,
        "name": net.name,
        "nodes": [{"id": n.id, "boundary": n.boundary, "kind": n.kind, "group": n.group}
                  for n in net.nodes],
        "pipes": [{"id": a.id, "from": a.source, "to": a.target, "length": a.length,
                   "diameter": a.diameter, "friction": a.friction, "slope": a.slope}
                  for a in net.pipes],
        "valves": [{"id": a.id, "from": a.source, "to": a.target} for a in net.valves],
        "compressor_stations": [
            {"id": a.id, "from": a.source, "to": a.target,
             "configurations": [{"id": c.id, "facets": [list(f) for f in c.facets]}
                                for c in a.configurations]}
            for a in net.compressors],
        "operation_modes": [{"id": o.id, "valves": dict(o.valve_states),
                             "compressor_stations": dict(o.compressor_states)} for o in net.modes],
        "constants": net.constants.to_dict(),
        "bounds": {
            "pressure": {n.id: [n.p_min, n.p_max] for n in net.nodes},
            "flow": {a.id: [a.q_min, a.q_max] for a in net.arcs},
            "inflow": {n.id: n.inflow_max for n in net.boundary_nodes},
        },
    }
    if net.reference is not None:
        r = net.reference
        out["reference"] = {"max_abs_flow": r.max_abs_flow, "pressure_min": r.pressure_min,
                            "pressure_max": r.pressure_max,
                            "constant_ranges": {k: list(v) for k, v in r.constant_ranges.items()}}
    return out


def network_from_dict(d: Mapping[str, Any]) -> GasNetwork:
    _check_version(d, "network")
    try:
        b = d["bounds"]
        pres, flow, inflow = b["pressure"], b["flow"], b.get("inflow", {})
        nodes = tuple(Node(n["id"], float(pres[n["id"]][0]), float(pres[n["id"]][1]),
                           bool(n.get("boundary", False)), n.get("kind"), n.get("group"),
                           float(inflow.get(n["id"], 0.0))) for n in d["nodes"])

        def fb(aid):
            lo, hi = flow[aid]
            return float(lo), float(hi)

        pipes = tuple(Pipe(a["id"], a["from"], a["to"], float(a["length"]), float(a["diameter"]),
                           float(a["friction"]), float(a.get("slope", 0.0)), *fb(a["id"]))
                      for a in d["pipes"])
        valves = tuple(Valve(a["id"], a["from"], a["to"], *fb(a["id"])) for a in d["valves"])
        css = tuple(CompressorStation(
            a["id"], a["from"], a["to"],
            tuple(Configuration(c["id"], tuple(tuple(float(x) for x in f) for f in c["facets"]))
                  for c in a["configurations"]),
            *fb(a["id"])) for a in d["compressor_stations"])
        modes = tuple(OperationMode(o["id"], dict(o["valves"]), dict(o["compressor_stations"]))
                      for o in d["operation_modes"])
        ref = None
        if "reference" in d:
            r = d["reference"]
            ref = SamplingReference(float(r["max_abs_flow"]), float(r["pressure_min"]),
                                    float(r["pressure_max"]),
                                    {k: (float(v[0]), float(v[1]))
                                     for k, v in r.get("constant_ranges", {}).items()})
        return GasNetwork(d.get("name", "network"), nodes, pipes, valves, css, modes,
                          GasConstants(**d.get("constants", {})), ref)
    except (KeyError, TypeError, IndexError) as exc:
        raise FormatError(f"malformed network file: {exc!r}") from exc


def instance_to_dict(inst: Instance) -> dict[str, Any]:
    return {"format_version": FORMAT_VERSION, **inst.to_dict()}


def instance_from_dict(d: Mapping[str, Any]) -> Instance:
    _check_version(d, "instance")
    try:
        return Instance.from_dict(d)
    except (KeyError, TypeError, IndexError) as exc:
        raise FormatError(f"malformed instance file: {exc!r}") from exc


def _dump(obj: Any, path: Path) -> None:
    # repr of a float round-trips, which keeps well over 12 significant digits
    path.write_text(json.dumps(obj, indent=1, sort_keys=False) + "\n")


def _load(path: Path) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def save_network(net: GasNetwork, path: str | Path) -> None:
    _dump(network_to_dict(net), Path(path))


def load_network(path: str | Path) -> GasNetwork:
    return network_from_dict(_load(Path(path)))


def save_instance(inst: Instance, path: str | Path) -> None:
    _dump(instance_to_dict(inst), Path(path))


def load_instance(path: str | Path) -> Instance:
    return instance_from_dict(_load(Path(path)))
