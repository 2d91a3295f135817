"""Enumeration oracle and Monte-Carlo deliverability checks."""

import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nrcc import mipcore, products as P, verifier as V
from nrcc.mipcore import INF, MilpModel, ModelError, SolverOptions
from nrcc.netmodel import ServiceWindowSpec, load_case
from nrcc.opfeas import build_index


def _knapsack():
    # max 6a + 5b + 4c, 5a + 4b + 3c <= 9
    m = MilpModel("ks")
    a = m.add_binary("a")
    b = m.add_binary("b")
    c = m.add_binary("c")
    m.add_constr({a: 5.0, b: 4.0, c: 3.0}, "<=", 9.0, "w")
    m.set_objective({a: 6.0, b: 5.0, c: 4.0}, "max")
    return m, (a, b, c)


def test_enumeration_matches_milp_on_knapsack():
    m, _ = _knapsack()
    direct = mipcore.solve(m, SolverOptions())
    oracle = V.enumerate_milp(m, SolverOptions())
    assert oracle.status == "optimal"
    assert oracle.objective == pytest.approx(direct.objective, abs=1e-9)
    assert oracle.backend == "enum"


def test_enumeration_respects_fixed_binaries():
    m, (a, b, c) = _knapsack()
    m.fix_var(a, 0.0)
    oracle = V.enumerate_milp(m, SolverOptions())
    # without a the best pack is b + c = 9
    assert oracle.objective == pytest.approx(9.0, abs=1e-9)
    assert m.var_bounds(a) == (0.0, 0.0)  # bounds restored as given


def test_enumeration_restores_bounds():
    m, (a, b, c) = _knapsack()
    V.enumerate_milp(m, SolverOptions())
    for v in (a, b, c):
        assert m.var_bounds(v) == (0.0, 1.0)


def test_enumeration_infeasible():
    m = MilpModel("bad")
    a = m.add_binary("a")
    m.add_constr({a: 1.0}, ">=", 2.0, "impossible")
    m.set_objective({a: 1.0}, "min")
    sol = V.enumerate_milp(m, SolverOptions())
    assert sol.status == "infeasible"


def test_enumeration_binary_cap():
    m = MilpModel("big")
    terms = {}
    for i in range(V.ORACLE_MAX_BINARIES + 1):
        terms[m.add_binary(f"b{i}")] = 1.0
    m.set_objective(terms, "max")
    with pytest.raises(ModelError, match="cap"):
        V.enumerate_milp(m, SolverOptions())


def test_enumerate_lex_breaks_ties_and_restores_rows():
    m = MilpModel("lex")
    x = m.add_var("x", 0.0, 10.0)
    y = m.add_var("y", 0.0, 10.0)
    m.add_constr({x: 1.0, y: 1.0}, ">=", 5.0, "cover")
    rows_before = len(m.senses)
    sol = V.enumerate_lex(m, [[(x, 0.0)], [(x, 1.0)], [(y, 1.0)]], SolverOptions())
    assert sol.status == "optimal"
    assert sol.value(x) == pytest.approx(0.0, abs=1e-8)
    assert sol.value(y) == pytest.approx(5.0, abs=1e-7)
    assert len(m.senses) == rows_before


def test_enumerate_oracle_rejects_unknown_model():
    case = load_case("cases/toy6")
    with pytest.raises(ValueError, match="unknown model id"):
        V.enumerate_oracle(case, "model9")


# ---- call sampling ----


def _params(r_down=100.0, r_up=0.0, theta_down=2.0, theta_up=0.0):
    w = ServiceWindowSpec(
        id="w", service_steps=(16, 17, 18), theta_down_h=theta_down,
        theta_up_h=theta_up, rho=1.0, beta_down=1.0, beta_up=0.0,
        protected_steps=(), rebound_steps=(), r_cap_kw=float("inf"),
    )
    return P.CallSetParams.from_ratings(w, r_down, r_up)


def test_sampler_deterministic_and_admissible():
    params = _params()
    a = V.sample_calls(params, "w", 3, 1.0, 40, np.random.default_rng(7))
    b = V.sample_calls(params, "w", 3, 1.0, 40, np.random.default_rng(7))
    assert len(a) == 40
    for ca, cb in zip(a, b):
        assert ca == cb
        assert P.call_admissible(params, ca, 1.0)


def test_sampler_vertex_share():
    params = _params()
    calls = V.sample_calls(params, "w", 3, 1.0, 40, np.random.default_rng(0))
    # last quarter hits the rating exactly on theta/dt steps
    for call in calls[30:]:
        on = np.isclose(call.xi_down_kw, 100.0)
        assert on.sum() == 2 and np.allclose(call.xi_down_kw[~on], 0.0)


def test_sampler_zero_rating_gives_zero_calls():
    params = _params(r_down=0.0)
    for call in V.sample_calls(params, "w", 3, 1.0, 8, np.random.default_rng(1)):
        assert not call.xi_down_kw.any() and not call.xi_up_kw.any()


@settings(max_examples=60, deadline=None)
@given(
    r=st.floats(0.0, 400.0),
    theta=st.floats(0.1, 4.0),
    seed=st.integers(0, 2**31 - 1),
)
def test_sampler_admissible_for_random_params(r, theta, seed):
    params = _params(r_down=r, theta_down=theta)
    rng = np.random.default_rng(seed)
    for call in V.sample_calls(params, "w", 3, 1.0, 12, rng):
        assert P.call_admissible(params, call, 1.0)


# ---- deliverability on the bundled case ----


@pytest.fixture(scope="module")
def tier1():
    case = load_case("cases/toy6")
    idx = build_index(case)
    m1 = P.solve_model1(case, idx=idx)
    pk = P.expected_peaks(case, idx=idx)
    p0 = P.solve_model2(case, 5000.0, m1.gamma0, pk, idx=idx)
    p1 = P.solve_model3(case, 5000.0, m1.gamma0, p0, m1, idx=idx)
    return case, idx, p1


def test_screening_resolve_zero_shed(tier1):
    case, idx, p1 = tier1
    report = V.screening_resolve(case, p1, idx=idx)
    assert report["status"] == "optimal"
    assert report["blocks"] == 12
    assert report["worst_shed_pu"] <= V.RESIDUAL_TOL_PU
    assert report["worst_residual_pu"] <= V.RESIDUAL_TOL_PU


def test_verify_envelope_report_shape_and_determinism(tier1):
    case, idx, p1 = tier1
    a = V.verify_envelope(case, p1, n_samples=12, seed=3, idx=idx, tier=1)
    b = V.verify_envelope(case, p1, n_samples=12, seed=3, idx=idx, tier=1)
    assert a == b
    (rep,) = a
    core = {"tier", "window", "n", "violations", "worst_residual_kw", "seed"}
    assert core <= set(rep)
    assert rep["tier"] == 1 and rep["window"] == "evening"
    assert rep["n"] == 12 and rep["seed"] == 3
    assert rep["screening_calls"] == 4
    assert rep["screening_violations"] == 0
    assert rep["solver_failures"] == 0
    assert rep["violations"] == 0 and rep["violation_rate"] == 0.0


def test_verify_envelope_flags_overstated_ratings(tier1):
    case, idx, p1 = tier1
    env = p1.windows[0]
    # promise far more range than the 50 kW plan can deliver
    fat = dataclasses.replace(
        env, r_down_kw=400.0, e_down_kwh=800.0
    )
    tampered = dataclasses.replace(p1, windows=[fat])
    (rep,) = V.verify_envelope(case, tampered, n_samples=8, seed=0, idx=idx)
    assert rep["screening_violations"] > 0
    assert rep["violations"] > 0
    assert rep["worst_residual_kw"] > 1.0


def test_verify_envelope_parallel_matches_serial(tier1):
    case, idx, p1 = tier1
    serial = V.verify_envelope(case, p1, n_samples=8, seed=11, idx=idx)
    threaded = V.verify_envelope(case, p1, n_samples=8, seed=11, idx=idx, jobs=4)
    assert serial == threaded
