"""Solver-boundary checks.

Oracle values used here:
  * max x s.t. x <= 5           -> 5           (closed form)
  * {x + y <= 1, x + y >= 2}    -> infeasible  (closed form)
  * knapsack max 3a+4b+5c s.t. 2a+3b+4c <= 5, a,b,c binary -> 7 at a=b=1
    (the 8-assignment enumeration runs inline so the value is cross-checked
     rather than trusted)
"""

import itertools
import math
import os
import shutil

import numpy as np
import pytest

from nrcc import mipcore
from nrcc.mipcore import (
    INF,
    MilpModel,
    ModelError,
    SolverError,
    SolverOptions,
    export_mps,
    import_mps,
    solve,
)


def simple_lp() -> MilpModel:
    m = MilpModel("simple")
    x = m.add_var("x", 0.0, 5.0)
    m.set_objective({x: 1.0}, "max")
    return m


def knapsack() -> MilpModel:
    m = MilpModel("knapsack")
    a = m.add_binary("a")
    b = m.add_binary("b")
    c = m.add_binary("c")
    m.add_constr({a: 2.0, b: 3.0, c: 4.0}, "<=", 5.0, "weight")
    m.set_objective({a: 3.0, b: 4.0, c: 5.0}, "max")
    return m


def knapsack_brute_force() -> float:
    best = -math.inf
    for bits in itertools.product((0, 1), repeat=3):
        if 2 * bits[0] + 3 * bits[1] + 4 * bits[2] <= 5:
            best = max(best, 3 * bits[0] + 4 * bits[1] + 5 * bits[2])
    return best


def test_maximize_bounded_var():
    sol = solve(simple_lp())
    assert sol.status == mipcore.OPTIMAL
    assert sol.objective == pytest.approx(5.0, abs=1e-9)
    assert sol.value(0) == pytest.approx(5.0, abs=1e-9)


def test_infeasible_pair_detected():
    m = MilpModel()
    x = m.add_var("x", 0.0, 10.0)
    y = m.add_var("y", 0.0, 10.0)
    m.add_constr({x: 1.0, y: 1.0}, "<=", 1.0)
    m.add_constr({x: 1.0, y: 1.0}, ">=", 2.0)
    m.set_objective({x: 1.0})
    sol = solve(m)
    assert sol.status == mipcore.INFEASIBLE
    assert sol.values is None


def test_unbounded_detected():
    m = MilpModel()
    x = m.add_var("x", 0.0, INF)
    m.set_objective({x: 1.0}, "max")
    sol = solve(m)
    assert sol.status == mipcore.UNBOUNDED


def test_knapsack_matches_enumeration():
    sol = solve(knapsack())
    assert sol.status == mipcore.OPTIMAL
    assert knapsack_brute_force() == 7.0
    assert sol.objective == pytest.approx(7.0, abs=1e-9)


def test_lp_relaxation_bounds_milp():
    # budget 4 makes the relaxation fractional: a=1, b=2/3 -> 3 + 8/3 = 17/3,
    # while the best integral pick is c alone -> 5
    m = MilpModel()
    a, b, c = m.add_binary("a"), m.add_binary("b"), m.add_binary("c")
    m.add_constr({a: 2.0, b: 3.0, c: 4.0}, "<=", 4.0, "weight")
    m.set_objective({a: 3.0, b: 4.0, c: 5.0}, "max")
    relaxed = solve(m, relaxed=True)
    integral = solve(m)
    assert relaxed.status == mipcore.OPTIMAL
    # relaxation of a maximization is an upper bound
    assert relaxed.objective >= integral.objective - 1e-9
    assert relaxed.objective == pytest.approx(17.0 / 3.0, abs=1e-6)
    assert integral.objective == pytest.approx(5.0, abs=1e-9)


def test_relaxed_solve_does_not_mutate_model():
    m = knapsack()
    solve(m, relaxed=True)
    assert m.integer == [True, True, True]
    sol = solve(m)
    assert sol.objective == pytest.approx(7.0, abs=1e-9)


def test_equality_and_duplicate_terms():
    m = MilpModel()
    x = m.add_var("x", -INF, INF)
    # duplicate coefficients on one row must merge: x + x == 4 -> x = 2
    m.add_constr([(x, 1.0), (x, 1.0)], "==", 4.0)
    m.set_objective({x: 1.0})
    sol = solve(m)
    assert sol.value(x) == pytest.approx(2.0, abs=1e-9)


def test_fix_var_and_bounds_roundtrip():
    m = simple_lp()
    m.fix_var(0, 3.25)
    assert m.var_bounds(0) == (3.25, 3.25)
    sol = solve(m)
    assert sol.objective == pytest.approx(3.25, abs=1e-12)


def test_model_validation_errors():
    m = MilpModel()
    m.add_var("x")
    with pytest.raises(ModelError):
        m.add_var("x")
    with pytest.raises(ModelError):
        m.add_var("y", 2.0, 1.0)
    with pytest.raises(ModelError):
        m.add_constr({5: 1.0}, "<=", 1.0)
    with pytest.raises(ModelError):
        m.add_constr({0: 1.0}, "<", 1.0)
    with pytest.raises(ModelError):
        m.set_objective({0: 1.0}, "minimize")
    with pytest.raises(ModelError):
        solve(m)  # no objective yet


def test_integrality_of_reported_binaries():
    sol = solve(knapsack())
    for i in range(3):
        assert abs(sol.value(i) - round(sol.value(i))) <= 1e-6


def test_deterministic_repeat_solves():
    a = solve(knapsack())
    b = solve(knapsack())
    assert a.objective == b.objective
    assert np.array_equal(a.values, b.values)


def test_constraint_residuals_at_solution():
    m = knapsack()
    sol = solve(m)
    res = m.constraint_residuals(sol.values)
    assert res.max() <= 1e-9


# ---- MPS round trips ----


def model_fixture_mixed() -> MilpModel:
    m = MilpModel("mixed")
    x = m.add_var("x", -INF, INF)
    y = m.add_var("load#shed[2,3]", 0.0, 4.5)
    z = m.add_binary("build?")
    w = m.add_var("w", -2.25, INF)
    m.add_constr({x: 1.0, y: -0.125}, "<=", 2.5, "cap")
    m.add_constr({y: 3.0, z: 1.0}, ">=", 0.75, "floor")
    m.add_constr({x: 1.0, w: 1.0, z: -5.0}, "==", 0.1, "tie")
    m.set_objective({x: -1.0, y: 2.0, z: 0.3, w: 1.1}, "min")
    return m


@pytest.mark.parametrize("builder", [simple_lp, knapsack, model_fixture_mixed])
def test_mps_round_trip_structure(tmp_path, builder):
    m = builder()
    path = str(tmp_path / "m.mps")
    name_map = export_mps(m, path)
    assert all(len(k) <= 8 for k in name_map)
    back = import_mps(path)
    assert back.num_vars == m.num_vars
    assert back.num_constrs == m.num_constrs
    assert back.lb == m.lb and back.ub == m.ub
    assert back.integer == m.integer
    assert back.senses == m.senses and back.rhs == m.rhs
    for j in range(m.num_constrs):
        assert dict(zip(back.row_vars[j], back.row_coefs[j])) == dict(
            zip(m.row_vars[j], m.row_coefs[j])
        )
    assert back.obj == m.obj
    assert back.obj_sense == m.obj_sense


@pytest.mark.parametrize("builder", [simple_lp, knapsack, model_fixture_mixed])
def test_mps_round_trip_same_optimum(tmp_path, builder):
    m = builder()
    path = str(tmp_path / "m.mps")
    export_mps(m, path)
    back = import_mps(path)
    a, b = solve(m), solve(back)
    assert a.status == b.status == mipcore.OPTIMAL
    assert a.objective == pytest.approx(b.objective, abs=1e-9)


def test_mps_export_empty_model_rejected(tmp_path):
    with pytest.raises(ModelError):
        export_mps(MilpModel(), str(tmp_path / "x.mps"))
    m = MilpModel()
    m.add_var("x")
    with pytest.raises(ModelError):
        export_mps(m, str(tmp_path / "y.mps"))  # no objective


def test_mps_import_rejects_ranges(tmp_path):
    path = tmp_path / "r.mps"
    path.write_text(
        "NAME t\nROWS\n N  OBJ\n L  R1\nCOLUMNS\n    X  OBJ  1.0\n"
        "RANGES\n    RNG  R1  4.0\nENDATA\n"
    )
    with pytest.raises(ModelError):
        import_mps(str(path))


def test_mps_objsense_maximize(tmp_path):
    m = simple_lp()
    path = str(tmp_path / "m.mps")
    export_mps(m, path)
    text = open(path).read()
    assert "OBJSENSE" in text and "MAXIMIZE" in text
    assert import_mps(path).obj_sense == "max"


# ---- solution-file parsers (no binary required) ----

HIGHS_SOL = """\
Model status
Optimal

# Primal solution values
Feasible
Objective 7
# Columns 3
C0000001 1
C0000002 1
C0000003 0
# Rows 1
R0000001 5
"""

CBC_SOL = """\
Optimal - objective value 7.00000000
      0 C0000001                 1                   3
      1 C0000002                 1                   4
      2 C0000003                 0                   5
"""


def test_parse_highs_solution_file():
    status, values = mipcore.parse_highs_solution(HIGHS_SOL)
    assert status == mipcore.OPTIMAL
    assert values == {"C0000001": 1.0, "C0000002": 1.0, "C0000003": 0.0}


def test_parse_highs_infeasible_stdout_fallback():
    status, values = mipcore.parse_highs_solution(
        "", "Model   status      : Infeasible\n"
    )
    assert status == mipcore.INFEASIBLE
    assert values is None


def test_parse_cbc_solution_file():
    status, values = mipcore.parse_cbc_solution(CBC_SOL)
    assert status == mipcore.OPTIMAL
    assert values["C0000002"] == 1.0


def test_parse_cbc_infeasible():
    status, values = mipcore.parse_cbc_solution("Infeasible - objective value 0\n")
    assert status == mipcore.INFEASIBLE
    assert values is None


def test_unknown_backend_rejected():
    with pytest.raises(SolverError):
        solve(simple_lp(), SolverOptions(backend="gurobi"))


def test_env_var_overrides_backend(monkeypatch):
    monkeypatch.setenv("NRCC_SOLVER", "scipy")
    # configured backend would fail; env var must win
    sol = solve(simple_lp(), SolverOptions(backend="no-such-solver"))
    assert sol.status == mipcore.OPTIMAL


@pytest.mark.skipif(shutil.which("highs") is None, reason="highs binary not on PATH")
def test_highs_cli_live():
    sol = solve(knapsack(), SolverOptions(backend="highs-cli"))
    assert sol.status == mipcore.OPTIMAL
    assert sol.objective == pytest.approx(7.0, abs=1e-6)


@pytest.mark.skipif(shutil.which("cbc") is None, reason="cbc binary not on PATH")
def test_cbc_cli_live():
    sol = solve(knapsack(), SolverOptions(backend="cbc-cli"))
    assert sol.status == mipcore.OPTIMAL
    assert sol.objective == pytest.approx(7.0, abs=1e-6)
