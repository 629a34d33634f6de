import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gaswarm import datagen as dg
from gaswarm.gas import (GasNetwork, ObjectiveWeights, build_instance_milp,
                         build_state_model, rest_state, state_point, station_d_template, toy_station)
from gaswarm.milp import solve_milp, validate_solution
from oracles import scan_flows


class AlwaysBelow:
    """rng stand-in whose uniform draws never reach the switch threshold."""

    def __init__(self, first=2):
        self.first = first

    def integers(self, n):
        return self.first % n

    def random(self):
        return 0.5


# -- flows ----------------------------------------------------------------

def test_flow_forecast_constraints_on_toy(toy):
    cfg = dg.SamplerConfig.from_network(toy)
    for i in range(50):
        flows = dg.sample_flow_forecast(toy, cfg, dg.make_rng(3, 1, i), 6)
        assert flows.shape == (3, 6)
        assert scan_flows(toy, cfg, flows) == []


def test_flow_forecast_deterministic(toy):
    cfg = dg.SamplerConfig.from_network(toy)
    a = dg.sample_flow_forecast(toy, cfg, dg.make_rng(11), 4)
    b = dg.sample_flow_forecast(toy, cfg, dg.make_rng(11), 4)
    assert np.array_equal(a, b)


def test_group_level_sampling_on_larger_station():
    net = station_d_template()
    cfg = dg.SamplerConfig.from_network(net)
    flows = dg.sample_flow_forecast(net, cfg, dg.make_rng(5), 3)
    assert scan_flows(net, cfg, flows) == []


def test_too_many_groups_rejected(toy):
    from dataclasses import replace
    nodes = tuple(replace(n, group=n.id) if n.boundary else n for n in toy.nodes)
    extra = replace(toy.nodes[1], id="X", group="X")
    net = GasNetwork("four", nodes + (extra,), toy.pipes + (replace(toy.pipes[1], id="P_X", target="X"),),
                     toy.valves, toy.compressors, toy.modes, toy.constants, toy.reference)
    with pytest.raises(dg.TooManyBoundaryGroups):
        dg.sample_flow_forecast(net, dg.SamplerConfig.from_network(net), dg.make_rng(0), 2)


def test_rejection_budget(toy):
    cfg = dg.SamplerConfig.from_network(toy, flow_step_limit=1e-6, max_rejections=500)
    with pytest.raises(dg.RejectionBudgetExceeded):
        dg.sample_flow_forecast(toy, cfg, dg.make_rng(0), 3)


# -- pressures and constants ----------------------------------------------

def test_pressure_forecast_box_and_steps(toy):
    cfg = dg.SamplerConfig.from_network(toy)
    lo, hi = 40.0 - 1.5, 70.0 + 1.5
    for i in range(50):
        p = dg.sample_pressure_forecast(toy, cfg, dg.make_rng(9, 1, i), 8)
        assert np.all((p >= lo) & (p <= hi))
        assert np.all(np.abs(np.diff(p, axis=1)) <= 5.0)


def test_degenerate_pressure_range(toy):
    cfg = dg.SamplerConfig(600.0, 55.0, 55.0)
    p = dg.sample_pressure_forecast(toy, cfg, dg.make_rng(1), 4)
    assert np.all(p == 55.0)


def test_constant_padding_endpoints():
    assert dg.padded_range(10.0, 20.0) == pytest.approx((9.5, 20.5))


def test_constants_inside_padded_box():
    ranges = {"temperature": (278.0, 293.0), "molar_mass": (17.0, 19.0)}
    rng = dg.make_rng(2)
    for _ in range(1000):
        c = dg.sample_gas_constants(ranges, rng)
        assert 278.0 - 0.75 <= c.temperature <= 293.0 + 0.75
        assert 17.0 - 0.1 <= c.molar_mass <= 19.0 + 0.1


def test_degenerate_constant_range():
    c = dg.sample_gas_constants({"temperature": (285.0, 285.0)}, dg.make_rng(0))
    assert c.temperature == 285.0


# -- mode sequences -------------------------------------------------------

def test_single_mode_is_constant():
    cfg = dg.SamplerConfig(600.0, 40.0, 70.0)
    seq = dg.sample_operation_mode_sequence(1, 12, cfg, dg.make_rng(0))
    assert seq.modes == (0,) * 12


def test_stub_below_threshold_is_constant():
    cfg = dg.SamplerConfig(600.0, 40.0, 70.0)
    seq = dg.sample_operation_mode_sequence(4, 12, cfg, AlwaysBelow(first=3))
    assert seq.modes == (3,) * 12


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 9), st.integers(1, 10), st.integers(0, 2**32))
def test_switches_always_change_mode(n_modes, steps, seed):
    cfg = dg.SamplerConfig(600.0, 40.0, 70.0, switch_threshold=0.5)
    seq = dg.sample_operation_mode_sequence(n_modes, steps, cfg, dg.make_rng(seed)).modes
    assert len(seq) == steps and all(0 <= m < n_modes for m in seq)


def test_switch_frequency():
    cfg = dg.SamplerConfig(600.0, 40.0, 70.0)
    seq = dg.sample_operation_mode_sequence(4, 100_001, cfg, dg.make_rng(123)).modes
    freq = np.mean(np.diff(seq) != 0)
    assert abs(freq - 0.10) <= 0.01


# -- initial states and datasets ------------------------------------------

@pytest.fixture(scope="module")
def pool():
    net = toy_station()
    cfg = dg.SamplerConfig.from_network(net)
    return dg.SeedStatePool(net, (dg.steady_state_seed(net, cfg),))


def test_seed_pool_rejects_invalid_state(toy):
    bad = rest_state(toy, 50.0)
    bad.inflows["W"] = 100.0  # unbalanced
    with pytest.raises(ValueError):
        dg.SeedStatePool(toy, (bad,))


def test_initial_state_valid_and_repeatable(pool):
    net = pool.network
    cfg = dg.SamplerConfig.from_network(net)
    a = dg.generate_initial_state(net, pool, 3, cfg, dg.make_rng(4))
    b = dg.generate_initial_state(net, pool, 3, cfg, dg.make_rng(4))
    assert a == b
    report = validate_solution(build_state_model(net, a), state_point(net, a))
    assert report.feasible


def test_dataset_labels_match_resolve(pool):
    net = pool.network
    gen = dg.GenerationConfig(num_states=2, num_scenarios=6, time_step_difference=2, horizon=2)
    states = dg.build_state_pool(net, 2, 2, 17, dg.SamplerConfig.from_network(net), seed_pool=pool)
    samples = dg.generate_dataset(net, gen, 17, states=states)
    assert [s.sample_index for s in samples] == list(range(6))
    for s in samples:
        assert s.objective >= 0
        res = solve_milp(build_instance_milp(net, s.pi, ObjectiveWeights(), s.z1))
        assert abs(res.objective - s.objective) <= 1e-6


def test_single_scenario(pool):
    net = pool.network
    gen = dg.GenerationConfig(num_states=1, num_scenarios=1, time_step_difference=1, horizon=2)
    out = dg.generate_dataset(net, gen, 1, states=[pool.states[0]])
    assert len(out) == 1


def test_sample_streams_independent_of_count(pool):
    net = pool.network
    states = [pool.states[0]]
    small = dg.generate_dataset(net, dg.GenerationConfig(1, 2, 1, 2), 8, states=states)
    large = dg.generate_dataset(net, dg.GenerationConfig(1, 4, 1, 2), 8, states=states)
    assert [s.objective for s in small] == [s.objective for s in large[:2]]


def test_dataset_roundtrip_bytes(pool, tmp_path):
    net = pool.network
    samples = dg.generate_dataset(net, dg.GenerationConfig(1, 3, 1, 2), 5, states=[pool.states[0]])
    p1, p2 = tmp_path / "a.ndjson", tmp_path / "b.ndjson"
    dg.write_dataset(samples, len(net.modes), p1)
    back = dg.read_dataset(p1)
    dg.write_dataset(back, len(net.modes), p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert [s.z1 for s in back] == [s.z1 for s in samples]


def test_failures_are_recorded_not_raised(pool):
    net = pool.network
    failures = []
    bad = rest_state(net, 50.0, mode="o1")
    bad.pressures["W"] = -1.0  # nonpositive pressure breaks the pipe coefficients
    out = dg.generate_dataset(net, dg.GenerationConfig(1, 2, 1, 2), 0, states=[bad], failures=failures)
    assert out == [] and [f.sample_index for f in failures] == [0, 1]
