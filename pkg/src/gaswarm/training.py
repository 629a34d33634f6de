"""Discriminator pretraining and alternating generator/discriminator training."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import datagen as dg
from .gas import GasNetwork, Instance, NetworkState, ObjectiveWeights
from .milp import SolveParams
from .neural import Adam, CyclicLR, EncodedBatch, NetworkPair, ReduceLROnPlateau, Tensor, save_pair
from .neural import tensor as T
from .neural.nets import round_to_one_hot, to_sequences
from .neural.weights import write_arrays

log = logging.getLogger(__name__)


class EmptyDataset(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 2048
    pretrain_epochs: int = 500
    pretrain_lr: float = 0.005
    pretrain_weight_decay: float = 5e-6
    cyclic_max_lr: float = 5e-4
    cyclic_base_lr: float = 5e-6
    step_size_up: int = 10_000
    num_scenarios: int = 3_200_000
    num_data_new: int = 2048
    num_data_old: int = 8192
    num_epochs: int = 10
    num_generator_epochs: int = 25
    num_discriminator_epochs: int = 25
    discriminator_stop_multiplier: float = 3.0
    generator_stop_multiplier: float = 0.9
    num_prelabelled: int = 8192
    ratio_test: float = 0.1
    lr: float = 0.001
    weight_decay: float = 5e-6
    plateau_patience: int = 2
    plateau_factor: float = 0.5
    objective_scale: float = 500.0
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)

    def __post_init__(self):
        for f in ("batch_size", "pretrain_epochs", "step_size_up", "num_scenarios", "num_data_new",
                  "objective_scale"):
            if not getattr(self, f) > 0:
                raise ValueError(f"{f} must be positive")
        for f in ("num_data_old", "num_epochs", "num_generator_epochs", "num_discriminator_epochs",
                  "num_prelabelled"):
            if getattr(self, f) < 0:
                raise ValueError(f"{f} must be nonnegative")
        if not 0 < self.ratio_test < 1:
            raise ValueError("ratio_test must lie in (0, 1)")
        if abs(sum(self.split) - 1) > 1e-9 or min(self.split) <= 0:
            raise ValueError("split fractions must be positive and sum to 1")

    @classmethod
    def full(cls) -> "TrainConfig":
        return cls()

    @classmethod
    def desk(cls) -> "TrainConfig":
        # step_size_up shrinks with the batch count so one generator call still sweeps half a cycle
        return cls(batch_size=32, pretrain_epochs=20, num_scenarios=2000, num_data_new=64,
                   num_data_old=256, num_prelabelled=256, num_epochs=3, num_generator_epochs=10,
                   num_discriminator_epochs=10, step_size_up=63)

    @classmethod
    def profile(cls, name: str, **overrides) -> "TrainConfig":
        if name not in ("full", "desk"):
            raise ValueError(f"unknown profile {name!r}")
        base = cls.full() if name == "full" else cls.desk()
        return replace(base, **overrides)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


# -- losses ---------------------------------------------------------------

def discriminator_loss(f_hat: Tensor, f: np.ndarray, scale: float = 500.0) -> Tensor:
    """Mean of |f_hat - f / scale|."""
    return T.mean(T.absolute(f_hat - Tensor(np.asarray(f, dtype=float) / scale)))


def generator_loss(f_hat: Tensor) -> Tensor:
    """Mean distance of the (nonnegative) prediction to zero."""
    return T.mean(T.absolute(f_hat))


# -- labelled arrays --------------------------------------------------------

@dataclass(frozen=True)
class LabelledArrays:
    """Encoded instances with one-hot mode sequences and unscaled objectives."""
    batch: EncodedBatch
    z1: np.ndarray  # (N, modes, steps)
    f: np.ndarray  # (N,)

    def __len__(self) -> int:
        return len(self.f)

    def take(self, idx) -> "LabelledArrays":
        return LabelledArrays(self.batch.take(idx), self.z1[idx], self.f[idx])

    @classmethod
    def from_samples(cls, pair: NetworkPair, samples: Sequence[dg.LabelledSample]) -> "LabelledArrays":
        if not samples:
            raise EmptyDataset("no labelled samples")
        n_modes = len(pair.encoder.network.modes)
        batch = pair.encoder.encode([s.pi for s in samples])
        z = np.stack([s.z1.one_hot(n_modes) for s in samples])
        return cls(batch, z, np.array([s.objective for s in samples], dtype=float))


def epoch_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 7, *keys])))


def batches(n: int, size: int, rng: np.random.Generator | None):
    order = rng.permutation(n) if rng is not None else np.arange(n)
    for i in range(0, n, size):
        yield order[i:i + size]


def evaluate_discriminator(pair: NetworkPair, data: LabelledArrays, cfg: TrainConfig) -> float:
    """Sample-weighted mean L1 over ``data`` without touching gradients."""
    total = 0.0
    for idx in batches(len(data), max(cfg.batch_size, 256), None):
        part = data.take(idx)
        f_hat = pair.discriminator(Tensor(part.z1), part.batch)
        total += float(np.sum(np.abs(f_hat.data - part.f / cfg.objective_scale)))
    return total / len(data)


def discriminator_training_loop(pair: NetworkPair, data: LabelledArrays, optimizer: Adam,
                                cfg: TrainConfig, rng: np.random.Generator) -> float:
    losses = []
    for idx in batches(len(data), cfg.batch_size, rng):
        part = data.take(idx)
        optimizer.zero_grad()
        loss = discriminator_loss(pair.discriminator(Tensor(part.z1), part.batch), part.f,
                                  cfg.objective_scale)
        loss.backward()
        optimizer.step()
        losses.append(float(loss.data))
    return float(np.mean(losses))


# -- pretraining ----------------------------------------------------------

@dataclass
class PretrainResult:
    train_losses: list[float]
    test_losses: list[float]
    initial_test_loss: float
    validation_loss: float
    mean_prediction: float  # mean f_hat over the pretraining data, anchors the generator stop

    @property
    def final_test_loss(self) -> float:
        return self.test_losses[-1] if self.test_losses else self.initial_test_loss

    def to_dict(self) -> dict:
        return asdict(self)


def split_indices(n: int, fractions: Sequence[float], rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    cuts = np.floor(np.cumsum(fractions)[:-1] * n).astype(int)
    return np.split(order, cuts)


def pretrain_discriminator(pair: NetworkPair, samples: Sequence[dg.LabelledSample], cfg: TrainConfig,
                           seed: int = 0) -> PretrainResult:
    data = LabelledArrays.from_samples(pair, samples)
    train_idx, test_idx, val_idx = split_indices(len(data), cfg.split, epoch_rng(seed, 0))
    if min(len(train_idx), len(test_idx), len(val_idx)) == 0:
        raise EmptyDataset(f"{len(data)} samples are too few for an 8:1:1 split")
    train, test, val = data.take(train_idx), data.take(test_idx), data.take(val_idx)
    pair.generator.params.set_trainable(False)
    pair.discriminator.params.set_trainable(True)
    opt = Adam(pair.discriminator.params, cfg.pretrain_lr, cfg.pretrain_weight_decay)
    sched = ReduceLROnPlateau(opt, cfg.plateau_patience, cfg.plateau_factor)
    initial = evaluate_discriminator(pair, test, cfg)
    train_losses, test_losses = [], []
    for epoch in range(cfg.pretrain_epochs):
        train_losses.append(discriminator_training_loop(pair, train, opt, cfg, epoch_rng(seed, 1, epoch)))
        test_losses.append(evaluate_discriminator(pair, test, cfg))
        sched.step(test_losses[-1])
        log.info("pretrain epoch %d: train %.5f test %.5f", epoch, train_losses[-1], test_losses[-1])
    mean_pred = float(np.mean(pair.discriminator(Tensor(data.z1), data.batch).data))
    return PretrainResult(train_losses, test_losses, initial, evaluate_discriminator(pair, val, cfg),
                          mean_pred)


# -- alternating training ---------------------------------------------------

@dataclass
class ScenarioSource:
    """Fresh instances: sampled forecasts on top of uniformly drawn initial states."""
    network: GasNetwork
    states: Sequence[NetworkState]
    horizon: int
    sampler: dg.SamplerConfig
    granularity_s: float = 1800.0

    def draw(self, rng: np.random.Generator, n: int) -> list[Instance]:
        out = []
        for _ in range(n):
            state = self.states[int(rng.integers(len(self.states)))]
            fc = dg.sample_forecast(self.network, self.sampler, rng, self.horizon)
            out.append(Instance(fc.flows, fc.pressures, state, self.granularity_s, self.horizon))
        return out


@dataclass
class History:
    generator_losses: list[list[float]] = field(default_factory=list)  # per outer epoch
    temperatures: list[list[float]] = field(default_factory=list)
    discriminator_test_losses: list[list[float]] = field(default_factory=list)
    discriminator_train_losses: list[list[float]] = field(default_factory=list)
    initial_generator_loss: float | None = None
    stopping_loss_generator: float | None = None
    stopping_loss_discriminator: float | None = None
    skipped_samples: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def generator_training(pair: NetworkPair, source: ScenarioSource, cfg: TrainConfig,
                       rng: np.random.Generator) -> float:
    """One generator call: fresh instances, fresh Adam and cyclic rate, mean batch loss."""
    pair.discriminator.params.set_trainable(False)
    pair.generator.params.set_trainable(True)
    opt = Adam(pair.generator.params)
    sched = CyclicLR(opt, cfg.cyclic_base_lr, cfg.cyclic_max_lr, cfg.step_size_up)
    data = pair.encoder.encode(source.draw(rng, cfg.num_scenarios))
    losses = []
    for idx in batches(len(data), cfg.batch_size, rng):
        opt.zero_grad()
        _, f_hat = pair.forward(data.take(idx))
        loss = generator_loss(f_hat)
        loss.backward()
        opt.step()
        sched.step()
        losses.append(float(loss.data))
    return float(np.mean(losses))


def mean_generator_loss(pair: NetworkPair, instances: Sequence[Instance]) -> float:
    """Generator loss on fixed instances, without updates."""
    _, f_hat = pair.forward(pair.encoder.encode(instances))
    return float(generator_loss(f_hat).data)


def prepare_discriminator_training_data(pair: NetworkPair, old: Sequence[dg.LabelledSample],
                                        source: ScenarioSource, cfg: TrainConfig,
                                        rng: np.random.Generator, seed: int = 0,
                                        weights: ObjectiveWeights = ObjectiveWeights(),
                                        params: SolveParams = SolveParams(),
                                        history: History | None = None) -> list[dg.LabelledSample]:
    """Label generator proposals with the oracle and append them to the most recent old data."""
    pis = source.draw(rng, cfg.num_data_new)
    z, _ = pair.forward(pair.encoder.encode(pis))
    new = []
    for i, (pi, seq) in enumerate(zip(pis, to_sequences(round_to_one_hot(z.data)))):
        try:
            f = dg.label(source.network, pi, seq, weights, params)
        except Exception as exc:  # skip, never abort the epoch
            f = None
            log.warning("generator sample %d failed: %r", i, exc)
        if f is None:
            if history is not None:
                history.skipped_samples += 1
            continue
        new.append(dg.LabelledSample(pi, seq, float(f), seed, i))
    keep = list(old[-cfg.num_data_old:]) if cfg.num_data_old else []
    return keep + new


def mix_data(data: Sequence, prelabelled: Sequence, num_prelabelled: int,
             rng: np.random.Generator) -> list:
    """Seeded draw of prelabelled samples interleaved uniformly with ``data``."""
    k = min(num_prelabelled, len(prelabelled))
    chosen = [prelabelled[i] for i in np.sort(rng.choice(len(prelabelled), size=k, replace=False))]
    pool = list(data) + chosen
    return [pool[i] for i in rng.permutation(len(pool))]


def split_data(data: Sequence, ratio_test: float) -> tuple[list, list]:
    n_test = max(1, int(round(ratio_test * len(data))))
    if n_test >= len(data):
        raise EmptyDataset("not enough data for a train/test split")
    return list(data[:-n_test]), list(data[-n_test:])


def save_checkpoint(pair: NetworkPair, history: History, out_dir: Path, epoch: int,
                    optimizer: Adam | None = None) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    save_pair(pair, out_dir / f"checkpoint_{epoch:03d}.gwnn")
    (out_dir / f"checkpoint_{epoch:03d}.json").write_text(
        json.dumps(history.to_dict(), indent=1, sort_keys=True) + "\n")
    if optimizer is not None:
        st = optimizer.state_dict()
        arrays = {**{f"m.{k}": v for k, v in st["m"].items()}, **{f"v.{k}": v for k, v in st["v"].items()}}
        write_arrays(out_dir / f"checkpoint_{epoch:03d}.adam", {"t": st["t"], "lr": st["lr"]}, arrays)


def train_alternating(pair: NetworkPair, prelabelled: Sequence[dg.LabelledSample],
                      pretrain: PretrainResult, source: ScenarioSource, cfg: TrainConfig,
                      seed: int = 0, weights: ObjectiveWeights = ObjectiveWeights(),
                      params: SolveParams = SolveParams(), checkpoint_dir: str | Path | None = None,
                      eval_instances: Sequence[Instance] | None = None) -> History:
    """Alternate generator and discriminator phases for ``cfg.num_epochs`` outer epochs.

    The softmax temperature starts at 0 and rises by one before every generator
    epoch; it is never reset between outer epochs.
    """
    hist = History(stopping_loss_discriminator=cfg.discriminator_stop_multiplier * pretrain.final_test_loss,
                   stopping_loss_generator=cfg.generator_stop_multiplier * pretrain.mean_prediction)
    if eval_instances:
        hist.initial_generator_loss = mean_generator_loss(pair, eval_instances)
    temperature = 0.0
    data: list[dg.LabelledSample] = []
    for epoch in range(cfg.num_epochs):
        g_losses, temps = [], []
        for g in range(cfg.num_generator_epochs):
            temperature += 1.0
            pair.generator.temperature = temperature
            loss = generator_training(pair, source, cfg, epoch_rng(seed, 2, epoch, g))
            g_losses.append(loss)
            temps.append(temperature)
            log.info("epoch %d generator %d: T=%g loss %.5f", epoch, g, temperature, loss)
            if loss <= hist.stopping_loss_generator:
                break
        hist.generator_losses.append(g_losses)
        hist.temperatures.append(temps)

        pair.generator.params.set_trainable(False)
        pair.discriminator.params.set_trainable(True)
        rng = epoch_rng(seed, 3, epoch)
        data = prepare_discriminator_training_data(pair, data, source, cfg, rng, seed, weights, params, hist)
        mixed = mix_data(data, prelabelled, cfg.num_prelabelled, rng)
        train_s, test_s = split_data(mixed, cfg.ratio_test)
        train, test = LabelledArrays.from_samples(pair, train_s), LabelledArrays.from_samples(pair, test_s)
        opt = Adam(pair.discriminator.params, cfg.lr, cfg.weight_decay)
        sched = ReduceLROnPlateau(opt, cfg.plateau_patience, cfg.plateau_factor)
        d_train, d_test = [], []
        for d in range(cfg.num_discriminator_epochs):
            d_train.append(discriminator_training_loop(pair, train, opt, cfg, epoch_rng(seed, 4, epoch, d)))
            d_test.append(evaluate_discriminator(pair, test, cfg))
            sched.step(d_test[-1])
            if d_test[-1] <= hist.stopping_loss_discriminator:
                break
        hist.discriminator_train_losses.append(d_train)
        hist.discriminator_test_losses.append(d_test)
        if checkpoint_dir is not None:
            save_checkpoint(pair, hist, Path(checkpoint_dir), epoch, opt)
    return hist
