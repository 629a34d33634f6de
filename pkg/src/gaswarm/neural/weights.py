"""Weights container.

Layout: the magic ``GWNN``, a little-endian u32 header length, a UTF-8 JSON
header, then every array as contiguous little-endian float64 in header order.
The header carries the architecture and encoding layout so that weights and
instance encodings cannot silently drift apart.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..gas import GasNetwork
from ..gas.io import FormatError
from .nets import NetConfig, NetworkPair

MAGIC = b"GWNN"
WEIGHTS_VERSION = 1


def write_arrays(path: str | Path, header: dict, arrays: dict[str, np.ndarray]) -> None:
    names = list(arrays)
    meta = dict(header)
    meta["format_version"] = WEIGHTS_VERSION
    meta["arrays"] = [{"name": n, "shape": list(np.shape(arrays[n]))} for n in names]
    head = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<I", len(head)) + head)
        for n in names:
            fh.write(np.ascontiguousarray(arrays[n], dtype="<f8").tobytes())


def read_arrays(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: not a weights file")
    (n,) = struct.unpack("<I", raw[4:8])
    try:
        header = json.loads(raw[8:8 + n])
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: bad header: {exc}") from exc
    if header.get("format_version") != WEIGHTS_VERSION:
        raise FormatError(f"{path}: weights format_version {header.get('format_version')!r}")
    arrays, off = {}, 8 + n
    for spec in header["arrays"]:
        count = int(np.prod(spec["shape"], dtype=np.int64))
        end = off + 8 * count
        if end > len(raw):
            raise FormatError(f"{path}: truncated at {spec['name']}")
        arrays[spec["name"]] = np.frombuffer(raw[off:end], dtype="<f8").reshape(spec["shape"]).copy()
        off = end
    if off != len(raw):
        raise FormatError(f"{path}: {len(raw) - off} trailing bytes")
    return header, arrays


def save_pair(pair: NetworkPair, path: str | Path, extra: dict | None = None) -> None:
    header = {"architecture_hash": pair.architecture_hash(),
              "architecture": pair.architecture(),
              "temperature": pair.generator.temperature,
              "beta": pair.cfg.beta}
    if extra:
        header["extra"] = extra
    write_arrays(path, header, pair.arrays())


def load_pair(path: str | Path, network: GasNetwork) -> NetworkPair:
    header, arrays = read_arrays(path)
    arch = header.get("architecture", {})
    try:
        cfg = NetConfig(**arch["config"])
        horizon = int(arch["layout"]["horizon"])
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: missing architecture: {exc!r}") from exc
    pair = NetworkPair.create(network, horizon, cfg)
    if pair.architecture_hash() != header.get("architecture_hash"):
        raise FormatError(f"{path}: architecture hash mismatch for network {network.name}")
    pair.load_arrays(arrays)
    pair.generator.temperature = float(header["temperature"])
    return pair
