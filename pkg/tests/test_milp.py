import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gaswarm.milp import (Block, FreeIntegerPresent, HintInfeasible, IncumbentSource, MilpBuilder,
                          ModelError, PartialAssignment, SolveParams, Status, UnknownVariable,
                          fix_binaries, solve_lp, solve_milp, validate_solution)
from oracles import enumerate_milp, highs_lp

EXACT = SolveParams(mip_gap_abs=1e-9, mip_gap_rel=1e-9)


def lp(*, lower=0.0, upper=math.inf, costs, rows):
    b = MilpBuilder()
    for i, c in enumerate(costs):
        b.add_var(f"x{i}", lower, upper, cost=c)
    for k, (terms, sense, rhs) in enumerate(rows):
        b.add_row(f"r{k}", terms, sense, rhs)
    return b.build()


def knapsack():
    b = MilpBuilder("knapsack")
    for name, value in zip("abc", (5, 4, 3)):
        b.add_var(name, block=Block.Z1, cost=-value)
    b.add_row("cap", {0: 2, 1: 3, 2: 1}, "<=", 3)
    return b.build()


# -- model ----------------------------------------------------------------

def test_variable_bounds_must_be_ordered():
    b = MilpBuilder()
    with pytest.raises(ModelError):
        b.add_var("x", 2.0, 1.0)


def test_slack_costs_nonnegative():
    b = MilpBuilder()
    b.add_var("s", 0.0, block=Block.X2, cost=-1.0)
    with pytest.raises(ModelError):
        b.build()


def test_rows_need_finite_rhs():
    b = MilpBuilder()
    b.add_var("x")
    with pytest.raises(ModelError):
        b.add_row("r", {0: 1.0}, "<=", math.inf)


def test_fix_binaries_sets_bounds():
    m = knapsack()
    fixed = fix_binaries(m, {"a": 1, "b": 0, "c": 1})
    assert fixed.z1_fixed and not m.z1_fixed
    assert (fixed.lower[0], fixed.upper[0]) == (1.0, 1.0)
    assert (fixed.lower[1], fixed.upper[1]) == (0.0, 0.0)
    assert fixed.rows == m.rows


def test_fix_binaries_errors():
    m = knapsack()
    with pytest.raises(PartialAssignment):
        fix_binaries(m, {"a": 1})
    with pytest.raises(UnknownVariable):
        fix_binaries(m, {"a": 1, "b": 0, "c": 1, "zz": 0})
    with pytest.raises(ModelError):
        fix_binaries(m, {"a": 1, "b": 0, "c": 0.5})


def test_dump_lists_everything():
    text = knapsack().dump()
    assert "minimize" in text and "cap:" in text and "binaries" in text
    assert text.rstrip().endswith("end")


# -- LP -------------------------------------------------------------------

def test_lp_single_bound():
    r = solve_lp(lp(upper=10.0, costs=[1.0], rows=[({0: 1.0}, ">=", 1.0)]))
    assert r.status is Status.OPTIMAL
    assert r.objective == pytest.approx(1.0, abs=1e-9)


def test_lp_face():
    r = solve_lp(lp(costs=[-1.0, -1.0], rows=[({0: 1.0, 1: 1.0}, "<=", 1.0)]))
    assert r.status is Status.OPTIMAL
    assert r.objective == pytest.approx(-1.0, abs=1e-9)


def test_lp_infeasible():
    m = lp(lower=-math.inf, costs=[0.0], rows=[({0: 1.0}, ">=", 2.0), ({0: 1.0}, "<=", 1.0)])
    assert solve_lp(m).status is Status.INFEASIBLE


def test_lp_unbounded():
    m = lp(costs=[-1.0, 0.0], rows=[({0: 1.0, 1: -1.0}, "<=", 1.0)])
    assert solve_lp(m).status is Status.UNBOUNDED


def test_lp_rejects_free_integers():
    with pytest.raises(FreeIntegerPresent):
        solve_lp(knapsack())


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_lp_matches_highs_with_duality(seed):
    rng = np.random.default_rng(seed)
    m, n = rng.integers(2, 12), rng.integers(2, 12)
    A = rng.normal(size=(m, n))
    A[rng.random((m, n)) < 0.4] = 0.0
    x0 = rng.uniform(-1, 1, n)
    senses = rng.choice(["<=", "=", ">="], m, p=[0.45, 0.1, 0.45])
    shift = np.where(senses == "<=", 1, np.where(senses == ">=", -1, 0)) * rng.uniform(-0.3, 1, m)
    rows = [({j: A[i, j] for j in range(n)}, senses[i], A[i] @ x0 + shift[i]) for i in range(m)]
    model = lp(lower=-2.0, upper=2.0, costs=rng.normal(size=n), rows=rows)
    ours = solve_lp(model)
    status, ref = highs_lp(model)
    assert ours.status.value == status
    if status == "optimal":
        assert ours.objective == pytest.approx(ref, abs=1e-7 * max(1, abs(ref)))
        # dual bound from the final basis closes the gap
        assert abs(ours.bound - ours.objective) <= 1e-6 * max(1, abs(ours.objective))
        assert validate_solution(model, ours.point).feasible


# -- MILP -----------------------------------------------------------------

def test_two_binaries():
    b = MilpBuilder()
    b.add_var("x", block=Block.Z1, cost=-1)
    b.add_var("y", block=Block.Z1, cost=-2)
    b.add_row("r", {0: 1, 1: 1}, "<=", 1)
    r = solve_milp(b.build())
    assert r.status is Status.OPTIMAL and r.objective == pytest.approx(-2)
    assert r.point == {"x": 0.0, "y": 1.0}


def test_knapsack_matches_brute_force():
    best = min(-(5 * a + 4 * b + 3 * c) for a, b, c in itertools.product((0, 1), repeat=3)
               if 2 * a + 3 * b + c <= 3)
    r = solve_milp(knapsack(), EXACT)
    assert r.objective == pytest.approx(best, abs=1e-9)


def test_warm_start_with_optimum():
    m = knapsack()
    cold = solve_milp(m, EXACT)
    warm = solve_milp(m, EXACT, incumbent_hint=cold.point)
    assert warm.objective == pytest.approx(cold.objective)
    assert warm.node_count <= cold.node_count
    assert warm.hint_accepted and warm.incumbent_source is IncumbentSource.WARM_START


def test_infeasible_hint_warns_and_is_discarded():
    m = knapsack()
    with pytest.warns(HintInfeasible):
        r = solve_milp(m, EXACT, incumbent_hint={"a": 1.0, "b": 1.0, "c": 1.0})
    assert r.hint_accepted is False
    assert r.objective == pytest.approx(-8.0)


def test_partial_hint_rejected():
    with pytest.raises(PartialAssignment):
        solve_milp(knapsack(), incumbent_hint={"a": 1.0})


def test_time_limit_without_incumbent():
    rng = np.random.default_rng(0)
    b = MilpBuilder()
    for i in range(30):
        b.add_var(f"z{i}", block=Block.Z1, cost=-rng.uniform(1, 2))
    b.add_row("cap", {i: rng.uniform(1, 2) for i in range(30)}, "<=", 7.3)
    r = solve_milp(b.build(), SolveParams(time_limit_s=1e-9))
    assert r.time_limit_hit
    assert r.status in (Status.INFEASIBLE, Status.FEASIBLE)


def test_solution_validates():
    r = solve_milp(knapsack())
    report = validate_solution(knapsack(), r.point, 1e-6)
    assert report.feasible and report.worst_violation <= 1e-9


def test_validation_reports_violation():
    m = lp(costs=[1.0], rows=[({0: 1.0}, ">=", 1.0)])
    report = validate_solution(m, {"x0": 0.5})
    assert not report.feasible
    assert report.rows[0].row == "r0"
    assert report.rows[0].violation == pytest.approx(0.5)


def random_milp(seed: int, n_bin: int, n_cont: int):
    rng = np.random.default_rng(seed)
    b = MilpBuilder()
    for i in range(n_bin):
        b.add_var(f"z{i}", block=Block.Z1, cost=rng.normal())
    for i in range(n_cont):
        b.add_var(f"x{i}", -3.0, 3.0, cost=rng.normal())
    n = n_bin + n_cont
    for k in range(rng.integers(2, 8)):
        coefs = {j: rng.normal() for j in range(n) if rng.random() < 0.6}
        b.add_row(f"r{k}", coefs, rng.choice(["<=", ">="]), rng.uniform(-1, 2))
    return b.build()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.integers(0, 5))
def test_oracle_equivalence_small(seed, n_bin, n_cont):
    model = random_milp(seed, n_bin, n_cont)
    ref = enumerate_milp(model)
    r = solve_milp(model, EXACT)
    if math.isinf(ref):
        assert r.status is Status.INFEASIBLE
    else:
        assert r.status is Status.OPTIMAL
        assert r.objective == pytest.approx(ref, abs=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_warm_start_dominance(seed):
    model = random_milp(seed, 6, 3)
    ref = solve_milp(model, EXACT)
    if not ref.has_solution:
        return
    # any feasible point: the optimum of a random fixing
    rng = np.random.default_rng(seed)
    fixing = {f"z{i}": int(rng.integers(2)) for i in range(6)}
    sub = solve_lp(fix_binaries(model, fixing))
    if sub.status is not Status.OPTIMAL:
        return
    hint = dict(sub.point)
    with warnings.catch_warnings():
        warnings.simplefilter("error", HintInfeasible)
        warm = solve_milp(model, SolveParams(), incumbent_hint=hint)
    assert warm.objective <= sub.objective + SolveParams().mip_gap_abs


def test_determinism():
    model = random_milp(7, 10, 4)
    a, b = solve_milp(model), solve_milp(model)
    assert (a.status, a.objective, a.node_count) == (b.status, b.objective, b.node_count)
