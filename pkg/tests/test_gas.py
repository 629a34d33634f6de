import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gaswarm.gas import (CompressorStation, Configuration, GasConstants, GasNetwork, Instance,
                         MissingForecast, NetworkState, Node, NonpositivePressure, ObjectiveWeights,
                         OperationMode, OperationModeSequence, Pipe, UnboundedBigM, Valve,
                         assemble_compressor_block, assemble_mode_coupling, assemble_node_balance,
                         assemble_pipe_rows, assemble_slack_and_objective, assemble_valve_block,
                         build_instance_milp, build_state_model, compute_pipe_velocities,
                         continuity_coefficient, extract_state, load_network, network_from_dict,
                         network_to_dict, rest_state, save_instance, save_network, state_point,
                         station_d_template, toy_station)
from gaswarm.gas.io import FormatError, load_instance
from gaswarm.milp import Block, SolveParams, Status, solve_milp, validate_solution
from conftest import random_toy_instance
from oracles import physics_residuals

FIXTURE = Path(__file__).parent / "fixtures" / "toy_station.json"


def one_pipe_state(q_in, q_out, p_u=50.0, p_v=50.0, constants=GasConstants()):
    return NetworkState({"u": p_u, "v": p_v}, {"P": (q_in, q_out)}, {}, {}, "o", constants)


PIPE = Pipe("P", "u", "v", length=1000.0, diameter=0.8, friction=0.01)


# -- velocities -----------------------------------------------------------

def test_zero_flow_hits_velocity_floor():
    v_u, v_v = compute_pipe_velocities(PIPE, one_pipe_state(0.0, 0.0), GasConstants())
    assert v_u == v_v == 0.5


def test_velocity_linear_in_flow():
    c = GasConstants()
    v1, _ = compute_pipe_velocities(PIPE, one_pipe_state(300.0, 0.0), c)
    v2, _ = compute_pipe_velocities(PIPE, one_pipe_state(600.0, 0.0), c)
    assert v1 > 0.5 and v2 == pytest.approx(2 * v1, rel=1e-12)


def test_velocity_hand_value():
    c = GasConstants()
    z = 0.9
    v_u, _ = compute_pipe_velocities(PIPE, one_pipe_state(100.0, 100.0), c, compressibility=z)
    mass = 100.0 * c.norm_density * 1000 / 3600
    rtz = 8314.462618 / c.molar_mass * c.temperature * z
    expected = mass * rtz / (50.0 * 1e5 * (math.pi * 0.8 ** 2 / 4))
    assert v_u == pytest.approx(expected, rel=1e-12)


def test_nonpositive_pressure_rejected():
    with pytest.raises(NonpositivePressure):
        compute_pipe_velocities(PIPE, one_pipe_state(1.0, 1.0, p_u=0.0), GasConstants())


def test_papay_compressibility_is_subunit_at_pipeline_pressures():
    c = GasConstants()
    assert 0.8 < c.compressibility(60.0) < 1.0
    assert c.compressibility(0.0) == 1.0


# -- pipe rows ------------------------------------------------------------

def pipe_instance(slope=0.0):
    pipe = Pipe("P", "u", "v", length=1000.0, diameter=0.8, friction=0.01, slope=slope)
    state = one_pipe_state(200.0, 190.0, 52.0, 51.0)
    inst = Instance(np.zeros((0, 2)), np.zeros((0, 2)), state, 1800.0, 2)
    return pipe, inst


def test_continuity_coefficient_example():
    assert continuity_coefficient(120000.0, 1800.0, 1000.0, 0.5) == pytest.approx(864000.0, rel=1e-15)


def test_degenerate_time_difference_zeroes_flow_terms():
    assert continuity_coefficient(120000.0, 0.0, 1000.0, 0.5) == 0.0


def test_pipe_rows_flat_pipe():
    pipe, inst = pipe_instance()
    cont, mom = assemble_pipe_rows(pipe, 1, 2, inst)
    assert cont.terms["p[u,2]"] == 1.0 and cont.terms["p[v,2]"] == 1.0
    assert cont.terms["p[u,1]"] == -1.0 and cont.terms["p[v,1]"] == -1.0
    assert cont.terms["qout[P,2]"] == -cont.terms["qin[P,2]"] > 0
    assert cont.rhs == 0.0
    assert mom.terms["p[u,2]"] == -1.0 and mom.terms["p[v,2]"] == 1.0
    assert mom.rhs == 0.0


def test_pipe_row_coefficients_match_formula():
    pipe, inst = pipe_instance(slope=0.002)
    c = inst.constants
    z = c.compressibility(51.5)
    rtz = c.specific_gas_constant * c.temperature * z
    unit = c.norm_density * 1000 / 3600 / 1e5
    cont, mom = assemble_pipe_rows(pipe, 1, 2, inst)
    cq = 2 * rtz * 1800.0 / (pipe.length * pipe.area) * unit
    assert cont.terms["qout[P,2]"] == pytest.approx(cq, rel=1e-12)
    g = 9.81 * 0.002 * 1000.0 / (2 * rtz)
    assert mom.terms["p[u,2]"] == pytest.approx(-1 + g, rel=1e-12)
    assert mom.terms["p[v,2]"] == pytest.approx(1 + g, rel=1e-12)
    v_u, v_v = compute_pipe_velocities(pipe, inst.initial_state, c, compressibility=z)
    f = 0.01 * 1000.0 / (4 * 0.8 * pipe.area) * unit
    assert mom.terms["qin[P,2]"] == pytest.approx(f * v_u, rel=1e-12)
    assert mom.terms["qout[P,2]"] == pytest.approx(f * v_v, rel=1e-12)


def test_first_step_moves_initial_pressures_to_rhs():
    pipe, inst = pipe_instance()
    cont, _ = assemble_pipe_rows(pipe, 0, 1, inst)
    assert "p[u,0]" not in cont.terms
    assert cont.rhs == pytest.approx(52.0 + 51.0)


# -- flow conservation ----------------------------------------------------

def small_network(**kw):
    nodes = (Node("a", 30, 70, True, "entry", "g", 100.0), Node("b", 30, 70),
             Node("c", 30, 70), Node("e", 30, 70, True, "exit", "g", 100.0))
    return GasNetwork("small", nodes, kw.get("pipes", ()), kw.get("valves", ()),
                      kw.get("compressors", ()), kw.get("modes", (OperationMode("o", {}, {}),)))


def test_inner_node_with_two_valves():
    net = small_network(valves=(Valve("v1", "a", "b"), Valve("v2", "b", "c")),
                        modes=(OperationMode("o", {"v1": "op", "v2": "op"}, {}),))
    row = assemble_node_balance(net, net.node("b"), 3)
    assert row.terms == {"q[v1,3]": 1.0, "q[v2,3]": -1.0} and row.rhs == 0.0


def test_isolated_boundary_node():
    net = small_network()
    row = assemble_node_balance(net, net.node("e"), 1)
    assert row.terms == {"d[e,1]": 1.0}


def test_junction_matches_incidence_listing():
    net = small_network(pipes=(Pipe("p1", "a", "b", 1000, 0.5, 0.01), Pipe("p2", "b", "e", 1000, 0.5, 0.01)),
                        valves=(Valve("v", "c", "b"),),
                        modes=(OperationMode("o", {"v": "op"}, {}),))
    # incidence: +1 where the arc enters b, -1 where it leaves
    incidence = {"p1": 1, "p2": -1, "v": 1}
    expected = {"qout[p1,1]": incidence["p1"], "qin[p2,1]": incidence["p2"], "q[v,1]": incidence["v"]}
    assert assemble_node_balance(net, net.node("b"), 1).terms == expected


# -- valves ---------------------------------------------------------------

def test_valve_big_m_constants():
    net = small_network(valves=(Valve("v", "b", "c", -50, 60),),
                        modes=(OperationMode("o", {"v": "op"}, {}),))
    rows = {r.name.split("[")[0]: r for r in assemble_valve_block(net, net.valves[0], 1)}
    assert rows["valve_p_hi"].rhs == 40.0 and rows["valve_p_hi"].terms["open[v,1]"] == 40.0
    assert rows["valve_p_lo"].rhs == -40.0 and rows["valve_p_lo"].terms["open[v,1]"] == -40.0
    assert rows["valve_q_hi"].terms["open[v,1]"] == -60.0
    assert rows["valve_q_lo"].terms["open[v,1]"] == 50.0


def test_valve_needs_finite_bounds():
    net = small_network(valves=(Valve("v", "b", "c", -math.inf, 60),),
                        modes=(OperationMode("o", {"v": "op"}, {}),))
    with pytest.raises(UnboundedBigM):
        assemble_valve_block(net, net.valves[0], 1)


# -- whole toy model ------------------------------------------------------

def test_hand_count_matches_fixture(toy):
    data = json.loads(FIXTURE.read_text())
    assert network_to_dict(network_from_dict(data)) == network_to_dict(toy)
    count = data["hand_count"]
    inst = random_toy_instance(np.random.default_rng(0), count["horizon"])
    m = build_instance_milp(toy, inst)
    assert m.n_vars == count["variables"] == 2 * sum(count["variables_per_step"].values())
    assert m.n_rows == count["rows"] == 2 * sum(count["rows_per_step"].values())
    assert len(m.block_indices(Block.Z1)) == count["z1"]
    assert len(m.block_indices(Block.Z2)) == count["z2"]


def test_fixing_modes_satisfies_mode_rows(toy):
    inst = random_toy_instance(np.random.default_rng(1))
    m = build_instance_milp(toy, inst, z1_fix=OperationModeSequence((0, 0)))
    r = solve_milp(m)
    act = m.matrix @ r.x
    for i, row in enumerate(m.rows):
        if row.name.startswith("mode_choice"):
            assert act[i] == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("mode", range(4))
def test_every_mode_induces_its_element_states(toy, mode):
    inst = random_toy_instance(np.random.default_rng(mode))
    m = build_instance_milp(toy, inst, z1_fix=OperationModeSequence((mode, mode)))
    r = solve_milp(m)
    assert r.status is Status.OPTIMAL
    assert validate_solution(m, r.point).feasible
    o = toy.modes[mode]
    for t in (1, 2):
        for v in toy.valves:
            assert r.point[f"open[{v.id},{t}]"] == float(o.valve_states[v.id] == "op")
        for s in toy.compressors[0].states():
            assert r.point[f"ind[C,{s},{t}]"] == float(o.compressor_states["C"] == s)


def test_closed_compressor_carries_no_flow(toy):
    inst = random_toy_instance(np.random.default_rng(3))
    r = solve_milp(build_instance_milp(toy, inst, z1_fix=OperationModeSequence((0, 0))))
    for t in (1, 2):
        assert r.point[f"q[C,{t}]"] == pytest.approx(0.0, abs=1e-9)
        for s in ("by", "cfg1"):
            for var in ("pu", "pv", "qc"):
                assert r.point[f"{var}[C,{s},{t}]"] == pytest.approx(0.0, abs=1e-9)


def test_open_and_closed_valve_semantics(toy):
    inst = random_toy_instance(np.random.default_rng(4))
    r = solve_milp(build_instance_milp(toy, inst, z1_fix=OperationModeSequence((0, 2))))
    # step 1: mode o1 opens V1, step 2: mode o3 closes V2
    assert r.point["p[w,1]"] == pytest.approx(r.point["p[h,1]"], abs=1e-9)
    assert r.point["q[V2,2]"] == pytest.approx(0.0, abs=1e-9)


def test_forward_compression_facet():
    cfg = Configuration("c", ((1.0, -1.0, 0.0, 0.0),))
    net = small_network(compressors=(CompressorStation("cs", "b", "c", (cfg,), 0, 100),),
                        modes=(OperationMode("o", {}, {"cs": "c"}),))
    rows = assemble_compressor_block(net, net.compressors[0], 1)
    facet = [r for r in rows if r.name.startswith("cs_facet")]
    assert len(facet) == 1
    assert facet[0].terms == {"pu[cs,c,1]": 1.0, "pv[cs,c,1]": -1.0, "qc[cs,c,1]": 0.0, "ind[cs,c,1]": 0.0}


def test_single_mode_fixes_all_indicators():
    net = small_network(valves=(Valve("v", "b", "c", -10, 10),),
                        modes=(OperationMode("o", {"v": "cl"}, {}),))
    rows = assemble_mode_coupling(net, 1)
    assert rows[0].terms == {"mode[o,1]": 1.0} and rows[0].rhs == 1.0
    # the closed valve's indicator has no mode backing it
    assert rows[1].terms == {"open[v,1]": 1.0}


def test_two_modes_differing_in_one_valve():
    net = small_network(valves=(Valve("v", "b", "c", -10, 10),),
                        modes=(OperationMode("o1", {"v": "cl"}, {}), OperationMode("o2", {"v": "op"}, {})))
    rows = assemble_mode_coupling(net, 1)
    assert rows[1].terms == {"open[v,1]": 1.0, "mode[o2,1]": -1.0}


def test_missing_forecast(toy):
    inst = random_toy_instance(np.random.default_rng(0), 3)
    bad = Instance(inst.flow_forecast[:2], inst.pressure_forecast[:2], inst.initial_state, 1800.0, 3)
    with pytest.raises(MissingForecast):
        assemble_slack_and_objective(toy, bad, ObjectiveWeights())


def mode_change_total(toy, seq, initial_mode):
    inst = random_toy_instance(np.random.default_rng(0), len(seq))
    inst = Instance(inst.flow_forecast, inst.pressure_forecast,
                    rest_state(toy, 55.0, mode=initial_mode), 1800.0, len(seq))
    m = build_instance_milp(toy, inst, z1_fix=OperationModeSequence(seq))
    r = solve_milp(m)
    return sum(v for k, v in r.point.items() if k.startswith("delta["))


def test_constant_mode_has_no_change_cost(toy):
    assert mode_change_total(toy, (1, 1, 1), "o2") == pytest.approx(0.0, abs=1e-9)


def test_single_switch_costs_two(toy):
    assert mode_change_total(toy, (1, 1, 2), "o2") == pytest.approx(2.0, abs=1e-9)


def test_tracking_forecast_needs_no_pressure_slack(toy):
    state = rest_state(toy, 55.0, mode="o1")
    inst = Instance(np.zeros((3, 2)), np.full((3, 2), 55.0), state, 1800.0, 2)
    r = solve_milp(build_instance_milp(toy, inst))
    assert r.objective == pytest.approx(0.0, abs=1e-9)


def test_objective_weights_validation():
    with pytest.raises(ValueError):
        ObjectiveWeights(0, 0, 0, 0)
    with pytest.raises(ValueError):
        ObjectiveWeights(-1, 1, 1, 1)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_every_fixing_is_feasible(seed):
    toy = toy_station()
    rng = np.random.default_rng(seed)
    inst = random_toy_instance(rng)
    seq = OperationModeSequence(tuple(rng.integers(0, 4, 2)))
    fixed = build_instance_milp(toy, inst, z1_fix=seq)
    # with the flow directions fixed too, only an LP remains
    dirs = {f"dir[{g},{t}]": int(rng.integers(2)) for g in toy.fence_groups for t in (1, 2)}
    model = fixed.with_bounds({fixed.index_of(k): (v, v) for k, v in dirs.items()})
    assert solve_milp(model).status is Status.OPTIMAL


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_restriction_monotonicity_and_physics(seed):
    toy = toy_station()
    rng = np.random.default_rng(seed)
    inst = random_toy_instance(rng)
    full = solve_milp(build_instance_milp(toy, inst))
    seq = OperationModeSequence(tuple(rng.integers(0, 4, 2)))
    sub = solve_milp(build_instance_milp(toy, inst, z1_fix=seq))
    assert sub.objective >= full.objective - SolveParams().mip_gap_abs
    for r in (full, sub):
        assert physics_residuals(toy, inst, r.point).max() <= 1e-6
        for t in (1, 2):
            assert sum(r.point[f"mode[{o.id},{t}]"] for o in toy.modes) == 1.0


def test_station_d_template_statistics():
    net = station_d_template()
    stats = net.stats()
    assert (stats["nodes"], stats["arcs"], stats["modes"], stats["valves"]) == (31, 37, 56, 11)
    assert stats["configurations"] == [2, 6]
    assert stats["boundary_nodes"] == 6 and len(net.pipes) == 24


def test_station_d_active_copy_equals_aggregate():
    net = station_d_template()
    state = rest_state(net, 55.0)
    flows = np.array([[300.0] * 2, [200.0] * 2, [-150.0] * 2, [-100.0] * 2, [-150.0] * 2, [-100.0] * 2])
    inst = Instance(flows, np.full((6, 2), 55.0), state, 1800.0, 2)
    idx = next(i for i, o in enumerate(net.modes)
               if o.compressor_states["C1"].startswith("cfg") and o.compressor_states["C2"].startswith("cfg"))
    m = build_instance_milp(net, inst, z1_fix=OperationModeSequence((idx, idx)))
    r = solve_milp(m)
    assert r.status is Status.OPTIMAL
    o = net.modes[idx]
    for cs in net.compressors:
        s = o.compressor_states[cs.id]
        for t in (1, 2):
            assert r.point[f"qc[{cs.id},{s},{t}]"] == pytest.approx(r.point[f"q[{cs.id},{t}]"], abs=1e-9)
            assert r.point[f"pu[{cs.id},{s},{t}]"] == pytest.approx(r.point[f"p[{cs.source},{t}]"], abs=1e-9)


def test_validation_matches_recomputed_residuals(toy):
    rng = np.random.default_rng(5)
    m = build_instance_milp(toy, random_toy_instance(rng))
    x = rng.uniform(-5, 5, m.n_vars)
    report = validate_solution(m, x, tol=1e-6)
    resid = m.matrix @ x - m.rhs
    expected = set()
    for i, row in enumerate(m.rows):
        v = {"<=": max(resid[i], 0), ">=": max(-resid[i], 0), "=": abs(resid[i])}[row.sense.value]
        if v > 1e-6:
            expected.add(row.name)
    assert {r.row for r in report.rows} == expected


# -- states and files -----------------------------------------------------

def test_extracted_state_validates_on_state_model(toy):
    inst = random_toy_instance(np.random.default_rng(6))
    r = solve_milp(build_instance_milp(toy, inst))
    for t in (0, 1, 2):
        st_ = extract_state(toy, inst, r.point, t)
        report = validate_solution(build_state_model(toy, st_), state_point(toy, st_), 1e-6)
        assert report.feasible, report.rows[:3]
    assert extract_state(toy, inst, r.point, 2).pressures["W"] == r.point["p[W,2]"]


def test_network_roundtrip(tmp_path, toy):
    save_network(toy, tmp_path / "net.json")
    assert load_network(tmp_path / "net.json") == toy


def test_instance_roundtrip(tmp_path):
    inst = random_toy_instance(np.random.default_rng(2))
    save_instance(inst, tmp_path / "i.json")
    back = load_instance(tmp_path / "i.json")
    assert np.array_equal(back.flow_forecast, inst.flow_forecast)
    assert back.initial_state == inst.initial_state


def test_format_version_checked(tmp_path, toy):
    d = network_to_dict(toy)
    d["format_version"] = 99
    with pytest.raises(FormatError):
        network_from_dict(d)
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(FormatError):
        load_network(tmp_path / "bad.json")
