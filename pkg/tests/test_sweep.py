"""Sweep orchestration, artifacts, and menu emission."""

import json

import numpy as np
import pytest

from nrcc import sweep as S
from nrcc.mipcore import SolverOptions
from nrcc.netmodel import (
    BudgetSchedule,
    Bus,
    CandidateInvestment,
    Case,
    Line,
    NetworkModel,
    Scenario,
    ScenarioSet,
    TimeGrid,
    load_case,
)

try:
    import jsonschema
except ImportError:  # pragma: no cover
    jsonschema = None


@pytest.fixture(scope="module")
def toy_sweep(tmp_path_factory):
    case = load_case("cases/toy6")
    out = tmp_path_factory.mktemp("sweep")
    menu = S.run_sweep(case, out_dir=out, jobs=1)
    return case, out, menu


def test_menu_structure_and_monotonicity(toy_sweep):
    case, out, menu = toy_sweep
    assert len(menu.tiers) == 4
    assert [t.delta_gamma for t in menu.tiers] == list(case.budget.delta_gammas)
    caps = [t.p0.lambda_d_kw for t in menu.tiers]
    assert all(a >= b - 1e-6 for a, b in zip(caps, caps[1:]))
    ranges = [t.p1.objective_kw for t in menu.tiers]
    assert all(a <= b + 1e-6 for a, b in zip(ranges, ranges[1:]))
    for t in menu.tiers:
        assert set(t.p2) == {"a", "b", "c"}


def test_p1_provenance_matches_p0(toy_sweep):
    case, out, menu = toy_sweep
    for t in menu.tiers:
        assert t.p1.lambda_d_kw == t.p0.lambda_d_kw
        assert t.p1.lambda_r_kw == t.p0.lambda_r_kw


def test_artifacts_written_and_fingerprinted(toy_sweep):
    case, out, menu = toy_sweep
    assert S.baseline_path(out).is_file()
    for k in range(4):
        doc = json.loads(S.tier_path(out, k).read_text())
        assert doc["fingerprint"] == case.fingerprint
        assert doc["k"] == k
        assert doc["p0"] and doc["p1"] and set(doc["p2"]) == {"a", "b", "c"}
    assert S.menu_path(out).is_file()


def test_resume_reuses_artifacts(toy_sweep):
    case, out, menu = toy_sweep
    before = json.loads(S.menu_path(out).read_text())
    menu2 = S.run_sweep(case, out_dir=out, jobs=1)
    after = json.loads(S.menu_path(out).read_text())
    assert S.strip_timing(before) == S.strip_timing(after)
    # resumed results carry the stored timings through unchanged
    assert menu2.tiers[1].p0.wall_time_s == menu.tiers[1].p0.wall_time_s


def test_stale_fingerprint_forces_recompute(toy_sweep, tmp_path):
    case, out, menu = toy_sweep
    stale = json.loads(S.tier_path(out, 1).read_text())
    stale["fingerprint"] = "0" * 16
    stale["p0"]["lambda_d_kw"] = -999.0
    path = tmp_path / "tiers" / "tier_1.json"
    path.parent.mkdir(parents=True)
    path.write_text(json.dumps(stale))
    # loader refuses the stale doc entirely
    assert S.load_tier_doc(case, tmp_path, 1) is None


def test_menu_dict_matches_schema(toy_sweep):
    if jsonschema is None:
        pytest.skip("jsonschema not installed")
    case, out, menu = toy_sweep
    from importlib import resources

    schema = json.loads(
        resources.files("nrcc.schemas").joinpath("menu.schema.json").read_text()
    )
    doc = json.loads(S.menu_path(out).read_text())
    jsonschema.validate(doc, schema)


def test_menu_round_trip_parse(toy_sweep):
    case, out, menu = toy_sweep
    doc = json.loads(S.menu_path(out).read_text())
    assert json.loads(json.dumps(doc)) == doc
    assert doc["case"] == "toy6"
    assert doc["lambda_exp"] == {"d": 420.0, "r": 0.0}


def test_fresh_runs_identical_modulo_timing(toy_sweep):
    case, out, menu = toy_sweep
    again = S.run_sweep(case, jobs=3)
    assert S.strip_timing(S.menu_dict(menu)) == S.strip_timing(S.menu_dict(again))


def _windowless_case():
    net = NetworkModel(
        base_kva=100.0,
        buses=(Bus("S0", is_substation=True), Bus("B1")),
        lines=(Line("L1", "S0", "B1", r_pu=0.001, x_pu=0.001, s_max_kva=100.0),),
        candidates=(
            CandidateInvestment(
                id="up", kind="line_upgrade", target="L1",
                fixed_cost=150.0, delta_s_max_kva=50.0,
            ),
        ),
        substations=("S0",),
    )
    grid = TimeGrid(dt_hours=1.0, steps_per_day=2, days=1)
    scen = Scenario(
        id="only", weight=1.0,
        p_kw=np.array([[0.0, 50.0], [0.0, 120.0]]),
        q_kvar=np.zeros((2, 2)),
    )
    return Case(
        name="noles", network=net,
        scenarios=ScenarioSet(scenarios=(scen,), grid=grid, bus_ids=("S0", "B1")),
        windows=(),
        budget=BudgetSchedule(delta_gammas=(0.0, 100.0), w_peak=0.5, voll=10.0),
        solver=SolverOptions(), fingerprint="noles",
    )


def test_windowless_sweep_keeps_caps_and_skips_products(tmp_path):
    case = _windowless_case()
    menu = S.run_sweep(case, out_dir=tmp_path)
    doc = S.menu_dict(menu)
    for tier in doc["tiers"]:
        assert "lambda_d" in tier["p0"]
        assert tier["p1"]["status"] == "skipped"
        assert tier["p1"]["windows"] == []
        assert all(v["status"] == "skipped" for v in tier["p2"].values())
    # tier 0 admits only baseline-cost plans, so the cap is the plan's peak
    assert doc["tiers"][0]["p0"]["lambda_d"] == pytest.approx(120.0, abs=1e-4)
