"""Instance encoding, the mode generator and the objective discriminator."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from ..gas import GasConstants, GasNetwork, Instance, OperationModeSequence
from . import tensor as T
from .layers import Conv, Dense, InceptionBlock, Merge, ParameterStore
from .tensor import Tensor


@dataclass(frozen=True)
class NetConfig:
    channels: int = 16
    generator_blocks: int = 3
    discriminator_blocks: int = 3
    kernel: int = 3
    beta: float = 1.0

    def __post_init__(self):
        if self.channels < 1 or self.kernel < 1 or self.beta <= 0:
            raise ValueError("channels and kernel must be positive, beta > 0")
        if self.generator_blocks < 0 or self.discriminator_blocks < 0:
            raise ValueError("block counts must be nonnegative")


# -- instance encoding -----------------------------------------------------

@dataclass(frozen=True)
class EncodedBatch:
    flows: np.ndarray  # (B, boundary nodes, steps)
    pressures: np.ndarray  # (B, boundary nodes, steps)
    state: np.ndarray  # (B, state features)

    def __len__(self) -> int:
        return self.flows.shape[0]

    def take(self, idx) -> "EncodedBatch":
        return EncodedBatch(self.flows[idx], self.pressures[idx], self.state[idx])


class PiEncoder:
    """Fixed layout: flow stream, pressure stream and a flat initial-state vector.

    Flows are divided by the reference flow magnitude, pressures are centred on
    the reference range and divided by its half width, and gas constants map
    their reference range onto [-1, 1].
    """

    def __init__(self, network: GasNetwork, horizon: int):
        ref = network.reference
        if ref is None:
            raise ValueError(f"network {network.name} has no sampling reference")
        self.network = network
        self.horizon = int(horizon)
        self.q_scale = float(ref.max_abs_flow)
        self.p_mid = 0.5 * (ref.pressure_min + ref.pressure_max)
        self.p_half = max(0.5 * (ref.pressure_max - ref.pressure_min), 1e-9)
        self.const_ranges = {k: tuple(ref.constant_ranges.get(k, (getattr(GasConstants(), k),) * 2))
                             for k in GasConstants.SAMPLED}
        net = network
        self.features = ([f"p:{n.id}" for n in net.nodes]
                         + [f"{end}:{a.id}" for a in net.pipes for end in ("qin", "qout")]
                         + [f"q:{a.id}" for a in net.valves + net.compressors]
                         + [f"d:{n.id}" for n in net.boundary_nodes]
                         + [f"mode:{o.id}" for o in net.modes]
                         + [f"c:{k}" for k in GasConstants.SAMPLED])

    @property
    def n_boundary(self) -> int:
        return len(self.network.boundary_nodes)

    @property
    def state_dim(self) -> int:
        return len(self.features)

    def layout(self) -> dict:
        return {"horizon": self.horizon,
                "boundary_nodes": [n.id for n in self.network.boundary_nodes],
                "modes": [o.id for o in self.network.modes],
                "state_features": self.features,
                "flow_scale": self.q_scale, "pressure_mid": self.p_mid, "pressure_half": self.p_half,
                "constant_ranges": {k: list(v) for k, v in self.const_ranges.items()}}

    def _state_vector(self, inst: Instance) -> np.ndarray:
        s, net = inst.initial_state, self.network
        v = [(s.pressures[n.id] - self.p_mid) / self.p_half for n in net.nodes]
        for a in net.pipes:
            v.extend(x / self.q_scale for x in s.pipe_flows[a.id])
        v += [s.arc_flows[a.id] / self.q_scale for a in net.valves + net.compressors]
        v += [s.inflows[n.id] / self.q_scale for n in net.boundary_nodes]
        v += [float(o.id == s.mode) for o in net.modes]
        for k in GasConstants.SAMPLED:
            lo, hi = self.const_ranges[k]
            half = 0.5 * (hi - lo)
            v.append((getattr(s.constants, k) - 0.5 * (lo + hi)) / half if half > 0 else 0.0)
        return np.array(v)

    def encode(self, instances: Sequence[Instance]) -> EncodedBatch:
        for inst in instances:
            if inst.horizon != self.horizon:
                raise T.ShapeMismatch(f"instance horizon {inst.horizon} != encoder horizon {self.horizon}")
        flows = np.stack([np.asarray(i.flow_forecast) / self.q_scale for i in instances])
        pres = np.stack([(np.asarray(i.pressure_forecast) - self.p_mid) / self.p_half for i in instances])
        state = np.stack([self._state_vector(i) for i in instances])
        return EncodedBatch(flows, pres, state)


# -- networks -------------------------------------------------------------

class _Trunk:
    """Shared input design: per-stream 1-wide convs merged pairwise."""

    def __init__(self, store, prefix, encoder: PiEncoder, cfg: NetConfig, rng):
        c = cfg.channels
        self.flow = Conv(store, f"{prefix}.in_flow", encoder.n_boundary, c, 1, rng)
        self.pres = Conv(store, f"{prefix}.in_pressure", encoder.n_boundary, c, 1, rng)
        self.state = Dense(store, f"{prefix}.in_state", encoder.state_dim, c, rng)
        self.m1 = Merge(store, f"{prefix}.merge_forecast", c, cfg.kernel, rng)
        self.m2 = Merge(store, f"{prefix}.merge_state", c, cfg.kernel, rng)

    def __call__(self, batch: EncodedBatch) -> Tensor:
        steps = batch.flows.shape[2]
        fc = self.m1(self.flow(Tensor(batch.flows)), self.pres(Tensor(batch.pressures)))
        st = T.broadcast_time(self.state(Tensor(batch.state)), steps)
        return self.m2(fc, st)


class GeneratorNet:
    """Maps an encoded instance to per-step mode probabilities (B, modes, steps)."""

    def __init__(self, encoder: PiEncoder, cfg: NetConfig = NetConfig(), seed: int = 0,
                 store: ParameterStore | None = None):
        rng = np.random.default_rng([seed, 1])
        self.cfg, self.encoder = cfg, encoder
        self.params = store or ParameterStore()
        self.temperature = 1.0
        self.trunk = _Trunk(self.params, "gen", encoder, cfg, rng)
        self.blocks = [InceptionBlock(self.params, f"gen.block{i}", cfg.channels, cfg.kernel, rng)
                       for i in range(cfg.generator_blocks)]
        self.head = Conv(self.params, "gen.head", cfg.channels, len(encoder.network.modes), 1, rng)

    def logits(self, batch: EncodedBatch) -> Tensor:
        h = self.trunk(batch)
        for blk in self.blocks:
            h = blk(h)
        return self.head(T.relu(h))

    def __call__(self, batch: EncodedBatch) -> Tensor:
        return T.check_finite(T.softmax(self.logits(batch), self.temperature, axis=1), "generator output")


class DiscriminatorNet:
    """Predicts the scaled objective of the mode-fixed problem; output >= 0."""

    def __init__(self, encoder: PiEncoder, cfg: NetConfig = NetConfig(), seed: int = 0,
                 store: ParameterStore | None = None):
        rng = np.random.default_rng([seed, 2])
        self.cfg, self.encoder = cfg, encoder
        c = cfg.channels
        self.params = store or ParameterStore()
        self.trunk = _Trunk(self.params, "disc", encoder, cfg, rng)
        self.modes = Conv(self.params, "disc.in_modes", len(encoder.network.modes), c, 1, rng)
        self.join = Merge(self.params, "disc.merge_modes", c, cfg.kernel, rng)
        self.blocks = [InceptionBlock(self.params, f"disc.block{i}", c, cfg.kernel, rng, small=True)
                       for i in range(cfg.discriminator_blocks)]
        self.head = Dense(self.params, "disc.head", c, 1, rng)

    def __call__(self, z1: Tensor, batch: EncodedBatch) -> Tensor:
        if z1.data.ndim != 3 or z1.shape[1] != len(self.encoder.network.modes):
            raise T.ShapeMismatch(f"mode input must be (batch, modes, steps), got {z1.shape}")
        h = self.join(self.trunk(batch), self.modes(z1))
        for blk in self.blocks:
            h = blk(h)
        pooled = T.mean(T.relu(h), axis=2)
        out = T.softplus(T.reshape(self.head(pooled), (-1,)), self.cfg.beta)
        return T.check_finite(out, "discriminator output")


def round_to_one_hot(z: np.ndarray) -> np.ndarray:
    """Per step argmax set to one; ties go to the lowest mode index."""
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    idx = np.argmax(z, axis=-2)  # numpy argmax returns the first maximum
    np.put_along_axis(out, np.expand_dims(idx, -2), 1.0, axis=-2)
    return out


def to_sequences(z: np.ndarray) -> list[OperationModeSequence]:
    return [OperationModeSequence(tuple(np.argmax(zi, axis=0))) for zi in np.asarray(z)]


@dataclass
class NetworkPair:
    generator: GeneratorNet
    discriminator: DiscriminatorNet

    @classmethod
    def create(cls, network: GasNetwork, horizon: int, cfg: NetConfig = NetConfig(),
               seed: int = 0) -> "NetworkPair":
        enc = PiEncoder(network, horizon)
        return cls(GeneratorNet(enc, cfg, seed), DiscriminatorNet(enc, cfg, seed))

    @property
    def encoder(self) -> PiEncoder:
        return self.generator.encoder

    @property
    def cfg(self) -> NetConfig:
        return self.generator.cfg

    def forward(self, batch: EncodedBatch) -> tuple[Tensor, Tensor]:
        z = self.generator(batch)
        return z, self.discriminator(z, batch)

    def arrays(self) -> dict[str, np.ndarray]:
        return {**self.generator.params.snapshot(), **self.discriminator.params.snapshot()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.generator.params.load({k: v for k, v in arrays.items() if k.startswith("gen.")})
        self.discriminator.params.load({k: v for k, v in arrays.items() if k.startswith("disc.")})

    def architecture(self) -> dict:
        shapes = {k: list(v.shape) for k, v in self.arrays().items()}
        return {"config": asdict(self.cfg), "layout": self.encoder.layout(), "shapes": shapes}

    def architecture_hash(self) -> str:
        blob = json.dumps(self.architecture(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]
