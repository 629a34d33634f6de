"""Synthetic instances: forecasts, mode sequences, initial states and labelled data.

All randomness flows through numpy ``Generator`` objects backed by the
counter-based Philox bit generator. Every sample draws from its own stream keyed
by ``(seed, phase, index)``, so a dataset does not depend on the order in which
samples are produced.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .gas import (GasConstants, GasNetwork, Instance, NetworkState, ObjectiveWeights,
                  OperationModeSequence, build_instance_milp, build_state_model, extract_state,
                  rest_state, state_point)
from .gas.io import FormatError, instance_from_dict, instance_to_dict
from .milp import SolveParams, Status, solve_milp, validate_solution

log = logging.getLogger(__name__)

PHASE_STATES = 0
PHASE_FORECASTS = 1
PHASE_SCENARIOS = 2


class TooManyBoundaryGroups(ValueError):
    pass


class RejectionBudgetExceeded(RuntimeError):
    pass


def make_rng(seed: int, phase: int = 0, index: int = 0) -> np.random.Generator:
    """Independent Philox stream for one (seed, phase, index) triple."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, phase, index])))


@dataclass(frozen=True)
class SamplerConfig:
    max_abs_flow: float
    pressure_min: float
    pressure_max: float
    flow_step_limit: float = 200.0
    fence_group_limit: float = 200.0
    pressure_step_limit: float = 5.0
    box_inflation: float = 1.05
    range_padding: float = 0.05
    switch_threshold: float = 0.9
    max_rejections: int = 100_000
    batch: int = 256  # candidates drawn per vectorised rejection round

    def __post_init__(self):
        for name in ("max_abs_flow", "flow_step_limit", "fence_group_limit", "pressure_step_limit",
                     "box_inflation", "max_rejections", "batch"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.switch_threshold < 1:
            raise ValueError("switch_threshold must lie in (0, 1)")
        if self.pressure_min > self.pressure_max:
            raise ValueError("empty pressure range")

    @classmethod
    def from_network(cls, network: GasNetwork, **overrides) -> "SamplerConfig":
        ref = network.reference
        if ref is None:
            raise ValueError(f"network {network.name} has no sampling reference")
        return cls(ref.max_abs_flow, ref.pressure_min, ref.pressure_max, **overrides)

    @property
    def flow_box(self) -> float:
        return self.box_inflation * self.max_abs_flow

    @property
    def pressure_box(self) -> tuple[float, float]:
        pad = self.range_padding * (self.pressure_max - self.pressure_min)
        return self.pressure_min - pad, self.pressure_max + pad


@dataclass(frozen=True)
class Forecast:
    flows: np.ndarray  # (boundary nodes, steps)
    pressures: np.ndarray


# -- flows ----------------------------------------------------------------

def _flow_candidates(network: GasNetwork, box: float, rng: np.random.Generator, n: int) -> np.ndarray:
    """Balanced candidates (n, boundary nodes), uniform on the balanced box slice."""
    boundary = network.boundary_nodes
    groups = list(network.fence_groups)
    if len(boundary) <= 3:
        free = rng.uniform(-box, box, size=(n, len(boundary) - 1))
        return np.concatenate([free, -free.sum(axis=1, keepdims=True)], axis=1)
    # more nodes than dimensions: balance group totals first, then split each total
    free = rng.uniform(-box, box, size=(n, len(groups) - 1))
    totals = np.concatenate([free, -free.sum(axis=1, keepdims=True)], axis=1)
    out = np.empty((n, len(boundary)))
    col = {nd.id: i for i, nd in enumerate(boundary)}
    for gi, g in enumerate(groups):
        members = network.fence_groups[g]
        share = rng.uniform(-box, box, size=(n, len(members) - 1))
        for k, v in enumerate(members[:-1]):
            out[:, col[v]] = share[:, k]
        out[:, col[members[-1]]] = totals[:, gi] - share.sum(axis=1)
    return out


def flow_step_ok(network: GasNetwork, config: SamplerConfig, cand: np.ndarray,
                 prev: np.ndarray | None) -> np.ndarray:
    """Acceptance mask for flow candidates (n, boundary nodes)."""
    boundary = network.boundary_nodes
    ok = np.all(np.abs(cand) <= config.flow_box, axis=1)
    signs = np.array([nd.sign for nd in boundary], dtype=float)
    ok &= np.all(np.sign(cand) == signs, axis=1)
    col = {nd.id: i for i, nd in enumerate(boundary)}
    for members in network.fence_groups.values():
        idx = [col[v] for v in members]
        if len(idx) > 1:
            sub = cand[:, idx]
            ok &= (sub.max(axis=1) - sub.min(axis=1)) <= config.fence_group_limit
    if prev is not None:
        ok &= np.all(np.abs(cand - prev) <= config.flow_step_limit, axis=1)
    return ok


def sample_flow_forecast(network: GasNetwork, config: SamplerConfig, rng: np.random.Generator,
                         steps: int) -> np.ndarray:
    """Balanced flow forecast of shape (boundary nodes, steps).

    Each step is drawn uniformly from the balanced box and only the offending
    step is redrawn when a rejection rule fails.
    """
    if len(network.fence_groups) > 3:
        raise TooManyBoundaryGroups(f"{len(network.fence_groups)} fence groups; at most 3 supported")
    nb = len(network.boundary_nodes)
    if nb < 2:
        raise TooManyBoundaryGroups("flow balancing needs at least two boundary nodes")
    out = np.empty((nb, steps))
    prev = None
    for t in range(steps):
        drawn = 0
        while True:
            cand = _flow_candidates(network, config.flow_box, rng, config.batch)
            ok = np.flatnonzero(flow_step_ok(network, config, cand, prev))
            if ok.size:
                drawn += int(ok[0]) + 1
                row = cand[ok[0]]
                break
            drawn += config.batch
            if drawn >= config.max_rejections:
                raise RejectionBudgetExceeded(f"flow step {t}: {drawn} candidates rejected")
        if drawn > config.max_rejections:
            raise RejectionBudgetExceeded(f"flow step {t}: {drawn} candidates rejected")
        # exact balance: close on the last node
        row = row.copy()
        row[-1] = -row[:-1].sum()
        out[:, t] = row
        prev = row
    return out


# -- pressures ------------------------------------------------------------

def sample_pressure_forecast(network: GasNetwork, config: SamplerConfig, rng: np.random.Generator,
                             steps: int) -> np.ndarray:
    lo, hi = config.pressure_box
    nb = len(network.boundary_nodes)
    out = np.empty((nb, steps))
    for t in range(steps):
        for i in range(nb):
            if t == 0:
                out[i, 0] = rng.uniform(lo, hi)
                continue
            drawn = 0
            while True:
                cand = rng.uniform(lo, hi, size=config.batch)
                ok = np.flatnonzero(np.abs(cand - out[i, t - 1]) <= config.pressure_step_limit)
                if ok.size:
                    drawn += int(ok[0]) + 1
                    out[i, t] = cand[ok[0]]
                    break
                drawn += config.batch
                if drawn >= config.max_rejections:
                    raise RejectionBudgetExceeded(f"pressure step {t}: {drawn} candidates rejected")
    return out


def sample_forecast(network: GasNetwork, config: SamplerConfig, rng: np.random.Generator,
                    steps: int) -> Forecast:
    flows = sample_flow_forecast(network, config, rng, steps)
    return Forecast(flows, sample_pressure_forecast(network, config, rng, steps))


# -- modes and constants --------------------------------------------------

def sample_operation_mode_sequence(n_modes: int, steps: int, config: SamplerConfig,
                                   rng) -> OperationModeSequence:
    """First mode uniform; afterwards switch to a different uniform mode iff a draw >= threshold."""
    if n_modes < 1:
        raise ValueError("need at least one operation mode")
    seq = [int(rng.integers(n_modes))]
    for _ in range(1, steps):
        cur = seq[-1]
        if rng.random() >= config.switch_threshold and n_modes > 1:
            k = int(rng.integers(n_modes - 1))
            cur = k if k < cur else k + 1
        seq.append(cur)
    return OperationModeSequence(tuple(seq))


def padded_range(lo: float, hi: float, padding: float = 0.05) -> tuple[float, float]:
    pad = padding * (hi - lo)
    return lo - pad, hi + pad


def sample_gas_constants(ranges: Mapping[str, tuple[float, float]], rng: np.random.Generator,
                         padding: float = 0.05, base: GasConstants = GasConstants()) -> GasConstants:
    values = {}
    for name in GasConstants.SAMPLED:
        if name not in ranges:
            continue
        lo, hi = padded_range(*ranges[name], padding)
        values[name] = float(rng.uniform(lo, hi)) if hi > lo else float(lo)
    return replace(base, **values)


# -- initial states -------------------------------------------------------

@dataclass(frozen=True)
class SeedStatePool:
    network: GasNetwork
    states: tuple[NetworkState, ...]

    def __post_init__(self):
        if not self.states:
            raise ValueError("seed pool is empty")
        for i, s in enumerate(self.states):
            report = validate_solution(build_state_model(self.network, s), state_point(self.network, s))
            if not report.feasible:
                raise ValueError(f"seed state {i} violates its single-step model "
                                 f"(worst {report.worst_violation:.3g})")


def _bypass_like_mode(network: GasNetwork) -> str:
    def score(o):
        return (sum(s == "op" for s in o.valve_states.values())
                + sum(s == "by" for s in o.compressor_states.values()))
    return max(network.modes, key=score).id  # first of the best on ties


def steady_state_seed(network: GasNetwork, config: SamplerConfig,
                      weights: ObjectiveWeights = ObjectiveWeights(), rounds: int = 3,
                      params: SolveParams = SolveParams()) -> NetworkState:
    """Deterministic stand-in for a measured state.

    Starts from rest at mid-range pressure, holds a bypass-like mode under
    constant mid-range forecasts and keeps the last step after a few rounds.
    """
    boundary = network.boundary_nodes
    mid = 0.5 * (config.pressure_min + config.pressure_max)
    entries = [n for n in boundary if n.kind == "entry"]
    exits = [n for n in boundary if n.kind == "exit"]
    level = 0.5 * config.max_abs_flow
    flows = np.array([level / len(entries) if n.kind == "entry" else -level / len(exits)
                      for n in boundary]) if entries and exits else np.zeros(len(boundary))
    mode = _bypass_like_mode(network)
    state = rest_state(network, mid, mode=mode)
    k = 2
    seq = OperationModeSequence((network.mode_index(mode),) * k)
    for _ in range(rounds):
        inst = Instance(np.tile(flows[:, None], (1, k)), np.full((len(boundary), k), mid), state, 1800.0, k)
        res = solve_milp(build_instance_milp(network, inst, weights, seq), params)
        if not res.has_solution:
            raise RuntimeError("steady-state bootstrap solve failed")
        state = extract_state(network, inst, res.point, k)
    return state


def generate_initial_state(network: GasNetwork, pool: SeedStatePool, time_step_distance: int,
                           config: SamplerConfig, rng: np.random.Generator,
                           weights: ObjectiveWeights = ObjectiveWeights(),
                           params: SolveParams = SolveParams(),
                           granularity_s: float = 1800.0) -> NetworkState:
    """State reached after ``time_step_distance`` steps of a random fixed-mode trajectory."""
    j = int(time_step_distance)
    if j < 1:
        raise ValueError("time step distance must be at least 1")
    ranges = network.reference.constant_ranges if network.reference else {}
    for _ in range(config.max_rejections):
        fc = sample_forecast(network, config, rng, j)
        constants = sample_gas_constants(ranges, rng, config.range_padding, network.constants)
        seed_state = pool.states[int(rng.integers(len(pool.states)))]
        start = replace(seed_state, constants=constants)
        inst = Instance(fc.flows, fc.pressures, start, granularity_s, j)
        z1 = sample_operation_mode_sequence(len(network.modes), j, config, rng)
        res = solve_milp(build_instance_milp(network, inst, weights, z1), params)
        if res.status is Status.OPTIMAL:
            return extract_state(network, inst, res.point, j)
        log.info("initial state solve ended with %s; resampling", res.status.value)
    raise RejectionBudgetExceeded("no initial state within the retry budget")


# -- labelled data --------------------------------------------------------

@dataclass(frozen=True)
class LabelledSample:
    pi: Instance
    z1: OperationModeSequence
    objective: float
    seed: int
    sample_index: int

    def to_record(self, n_modes: int) -> dict:
        return {"pi": instance_to_dict(self.pi), "z1": self.z1.one_hot(n_modes).tolist(),
                "objective": self.objective, "seed": self.seed, "sample_index": self.sample_index}

    @classmethod
    def from_record(cls, rec: Mapping) -> "LabelledSample":
        try:
            return cls(instance_from_dict(rec["pi"]), OperationModeSequence.from_one_hot(rec["z1"]),
                       float(rec["objective"]), int(rec["seed"]), int(rec["sample_index"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed dataset record: {exc!r}") from exc


@dataclass
class GenerationConfig:
    num_states: int = 100
    num_scenarios: int = 2000
    time_step_difference: int = 8
    horizon: int = 2
    granularity_s: float = 1800.0

    def __post_init__(self):
        for name in ("num_states", "num_scenarios", "time_step_difference", "horizon"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")


@dataclass
class GenerationFailure:
    sample_index: int
    reason: str


def build_state_pool(network: GasNetwork, num_states: int, time_step_difference: int, seed: int,
                     config: SamplerConfig, weights: ObjectiveWeights = ObjectiveWeights(),
                     params: SolveParams = SolveParams(), granularity_s: float = 1800.0,
                     seed_pool: SeedStatePool | None = None) -> list[NetworkState]:
    seed_pool = seed_pool or SeedStatePool(network, (steady_state_seed(network, config, weights),))
    return [generate_initial_state(network, seed_pool, time_step_difference, config,
                                   make_rng(seed, PHASE_STATES, i), weights, params, granularity_s)
            for i in range(num_states)]


def label(network: GasNetwork, instance: Instance, z1: OperationModeSequence,
          weights: ObjectiveWeights = ObjectiveWeights(), params: SolveParams = SolveParams()):
    """Objective of the mode-fixed problem, or None when no solution was found."""
    res = solve_milp(build_instance_milp(network, instance, weights, z1), params)
    return res.objective if res.has_solution else None


def generate_dataset(network: GasNetwork, gen: GenerationConfig, seed: int,
                     config: SamplerConfig | None = None,
                     weights: ObjectiveWeights = ObjectiveWeights(),
                     params: SolveParams = SolveParams(),
                     failures: list[GenerationFailure] | None = None,
                     states: Sequence[NetworkState] | None = None) -> list[LabelledSample]:
    """State pool, forecast pool, then one fixed-mode solve per scenario."""
    config = config or SamplerConfig.from_network(network)
    if states is None:
        states = build_state_pool(network, gen.num_states, gen.time_step_difference, seed, config,
                                  weights, params, gen.granularity_s)
    forecasts = [sample_forecast(network, config, make_rng(seed, PHASE_FORECASTS, i), gen.horizon)
                 for i in range(gen.num_scenarios)]
    out = []
    for i in range(gen.num_scenarios):
        rng = make_rng(seed, PHASE_SCENARIOS, i)
        z1 = sample_operation_mode_sequence(len(network.modes), gen.horizon, config, rng)
        state = states[int(rng.integers(len(states)))]
        pi = Instance(forecasts[i].flows, forecasts[i].pressures, state, gen.granularity_s, gen.horizon)
        try:
            f = label(network, pi, z1, weights, params)
        except Exception as exc:  # a failed sample must not abort the batch
            f, reason = None, repr(exc)
        else:
            reason = "no solution"
        if f is None:
            log.warning("scenario %d skipped: %s", i, reason)
            if failures is not None:
                failures.append(GenerationFailure(i, reason))
            continue
        out.append(LabelledSample(pi, z1, float(f), seed, i))
    return out


def write_dataset(samples: Iterable[LabelledSample], n_modes: int, path: str | Path) -> None:
    with open(path, "w") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_record(n_modes), separators=(",", ":")) + "\n")


def read_dataset(path: str | Path) -> list[LabelledSample]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
            out.append(LabelledSample.from_record(rec))
    return out
