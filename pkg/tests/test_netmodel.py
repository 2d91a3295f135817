"""Case loading, validation and round-trip checks.

The toy6 fixture numbers cross-checked here are closed-form: total feeder
load by hour (100/250/400/420/400/300/150 kW blocks), 60/25/15 split over
buses B2/B4/B5, q = 0.3 p, scenario multipliers 0.9/1.0/1.1 with weights
0.3/0.4/0.3, so the expected scenario equals the base profile up to float
rounding of the weight products.
"""

import json
import math
import shutil
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nrcc import netmodel
from nrcc.netmodel import (
    Bus,
    CaseError,
    Line,
    NetworkModel,
    expected_scenario,
    load_case,
    resolve_window,
    serialize_case,
)

CASES = Path(__file__).resolve().parent.parent / "cases"
TOY6 = CASES / "toy6"


@pytest.fixture(scope="module")
def toy6():
    return load_case(TOY6)


def test_toy6_loads(toy6):
    net = toy6.network
    assert net.n_buses == 6
    assert len(net.lines) == 5
    assert net.substation == "B0"
    assert [c.kind for c in net.candidates] == [
        "storage", "storage", "line_upgrade", "voltage_regulator",
    ]
    assert toy6.scenarios.grid.total_steps == 24
    assert toy6.scenarios.grid.dt_hours == 1.0
    assert [s.id for s in toy6.scenarios.scenarios] == ["low", "base", "high"]
    assert toy6.budget.delta_gammas == (0.0, 5000.0, 9000.0, 15000.0)
    assert toy6.budget.w_peak == 0.7
    assert toy6.budget.voll == 500.0
    assert len(toy6.windows) == 1
    assert toy6.windows[0].service_steps == (16, 17, 18)


def test_toy6_profile_values(toy6):
    high = toy6.scenarios.scenarios[2]
    b2 = toy6.network.bus_position("B2")
    # hour 17 at B2, high scenario: 420 * 0.6 * 1.1
    assert high.p_kw[17, b2] == 420.0 * 0.6 * 1.1
    assert high.q_kvar[17, b2] == 0.3 * (420.0 * 0.6 * 1.1)
    # substation bus carries no load
    b0 = toy6.network.bus_position("B0")
    assert np.all(high.p_kw[:, b0] == 0.0)
    total = high.p_kw.sum(axis=1)
    assert total[17] == pytest.approx(462.0, abs=1e-9)
    assert total[0] == pytest.approx(110.0, abs=1e-9)


def test_expected_scenario_is_weighted_average(toy6):
    exp = expected_scenario(toy6.scenarios)
    assert exp.weight == 1.0
    base = toy6.scenarios.scenarios[1]
    # 0.3*0.9 + 0.4*1.0 + 0.3*1.1 = 1 up to float rounding
    assert np.allclose(exp.p_kw, base.p_kw, rtol=1e-12, atol=1e-9)
    assert abs(exp.p_kw.sum(axis=1)[17] - 420.0) < 1e-9


def test_round_trip_exact(toy6, tmp_path):
    serialize_case(toy6, tmp_path)
    again = netmodel.load_case(tmp_path)
    assert again.network == toy6.network
    assert again.scenarios == toy6.scenarios
    assert again.windows == toy6.windows
    assert again.budget == toy6.budget
    assert again.solver == toy6.solver


def test_fingerprint_tracks_content(toy6, tmp_path):
    for f in ("network.json", "scenarios.csv", "config.toml"):
        shutil.copy(TOY6 / f, tmp_path / f)
    assert load_case(tmp_path).fingerprint == toy6.fingerprint
    text = (tmp_path / "config.toml").read_text().replace("w_peak = 0.7", "w_peak = 0.6")
    (tmp_path / "config.toml").write_text(text)
    assert load_case(tmp_path).fingerprint != toy6.fingerprint


def _copy_toy6(tmp_path) -> Path:
    for f in ("network.json", "scenarios.csv", "config.toml"):
        shutil.copy(TOY6 / f, tmp_path / f)
    return tmp_path


def _patch_network(case_dir: Path, fn) -> None:
    raw = json.loads((case_dir / "network.json").read_text())
    fn(raw)
    (case_dir / "network.json").write_text(json.dumps(raw))


def test_cycle_rejected(tmp_path):
    case = _copy_toy6(tmp_path)
    _patch_network(case, lambda raw: raw["lines"].append(
        {"id": "L6", "from_bus": "B2", "to_bus": "B5",
         "r_pu": 0.01, "x_pu": 0.01, "s_max_kva": 100.0}
    ))
    with pytest.raises(CaseError, match="non-radial"):
        load_case(case)


def test_disconnected_rejected(tmp_path):
    case = _copy_toy6(tmp_path)

    def detach(raw):
        # same line count, but B5 ends up unreachable
        raw["lines"] = [l for l in raw["lines"] if l["id"] != "L5"]
        raw["lines"].append({"id": "L6", "from_bus": "B2", "to_bus": "B4",
                             "r_pu": 0.01, "x_pu": 0.01, "s_max_kva": 100.0})
        raw["candidates"] = [c for c in raw["candidates"] if c["id"] != "reg_b5"]

    _patch_network(case, detach)
    with pytest.raises(CaseError, match="non-radial"):
        load_case(case)


def test_bad_weights_rejected(tmp_path):
    case = _copy_toy6(tmp_path)
    text = (case / "scenarios.csv").read_text().replace("low,0.3", "low,0.4")
    (case / "scenarios.csv").write_text(text)
    with pytest.raises(CaseError, match="weights sum"):
        load_case(case)


def test_horizon_gap_rejected(tmp_path):
    case = _copy_toy6(tmp_path)
    lines = (case / "scenarios.csv").read_text().splitlines()
    kept = [ln for ln in lines if not ln.startswith("high,0.3,0,23,B2")]
    assert len(kept) == len(lines) - 1
    (case / "scenarios.csv").write_text("\n".join(kept) + "\n")
    with pytest.raises(CaseError, match="horizon mismatch"):
        load_case(case)


def test_window_overlap_rejected(tmp_path):
    case = _copy_toy6(tmp_path)
    text = (case / "config.toml").read_text().replace(
        "protected_steps = [19, 20, 21, 22]",
        "protected_steps = [18, 19, 20, 21, 22]",
    )
    (case / "config.toml").write_text(text)
    with pytest.raises(CaseError, match="overlap"):
        load_case(case)


def test_two_substations_rejected(tmp_path):
    case = _copy_toy6(tmp_path)
    _patch_network(case, lambda raw: raw.update(substations=["B0", "B3"]))
    with pytest.raises(CaseError, match="exactly one substation"):
        load_case(case)


def test_unknown_bus_in_scenarios_rejected(tmp_path):
    case = _copy_toy6(tmp_path)
    with open(case / "scenarios.csv", "a") as fh:
        fh.write("low,0.3,0,0,B9,1.0,0.0\n")
    with pytest.raises(CaseError, match="unknown bus"):
        load_case(case)


def test_duplicate_scenario_row_rejected(tmp_path):
    case = _copy_toy6(tmp_path)
    lines = (case / "scenarios.csv").read_text().splitlines()
    with open(case / "scenarios.csv", "a") as fh:
        fh.write(lines[1] + "\n")
    with pytest.raises(CaseError, match="duplicate row"):
        load_case(case)


def test_error_carries_path_and_element(tmp_path):
    case = _copy_toy6(tmp_path)
    _patch_network(case, lambda raw: raw["lines"][0].update(s_max_kva=-5.0))
    with pytest.raises(CaseError) as err:
        load_case(case)
    assert err.value.path == str(case / "network.json")
    assert err.value.element == "line L1"
    assert "s_max_kva" in str(err.value)


def test_json_config_equivalent(tmp_path, toy6):
    case = _copy_toy6(tmp_path)
    serialize_case(toy6, tmp_path / "out")
    again = load_case(tmp_path / "out")
    assert (tmp_path / "out" / "config.json").exists()
    assert again.windows == toy6.windows
    assert again.budget == toy6.budget


def test_tier_budgets_must_increase(tmp_path):
    case = _copy_toy6(tmp_path)
    text = (case / "config.toml").read_text().replace(
        "delta_gamma = [0.0, 5000.0, 9000.0, 15000.0]",
        "delta_gamma = [0.0, 9000.0, 5000.0]",
    )
    (case / "config.toml").write_text(text)
    with pytest.raises(CaseError, match="strictly increasing"):
        load_case(case)


def test_resolve_window_replicates_days(toy6):
    from nrcc.netmodel import TimeGrid

    spec = toy6.windows[0]
    grid = TimeGrid(dt_hours=1.0, steps_per_day=24, days=2)
    rw = resolve_window(spec, grid)
    assert rw.h == 3
    assert rw.service_by_day == ((16, 17, 18), (40, 41, 42))
    assert rw.protected_by_day[1] == (43, 44, 45, 46)
    assert rw.rebound_by_day[0] == (0, 1, 2, 3, 4, 5)
    assert rw.service_steps() == (16, 17, 18, 40, 41, 42)


@given(
    w1=st.floats(0.05, 0.95),
    scale=st.floats(0.1, 10.0),
    shift=st.floats(-50.0, 50.0),
)
@settings(max_examples=50, deadline=None)
def test_expected_scenario_is_linear(w1, scale, shift):
    """E[aP + b] = aE[P] + b, and weights act linearly."""
    from nrcc.netmodel import Scenario, ScenarioSet, TimeGrid

    rng = np.random.default_rng(7)
    base = rng.uniform(0.0, 100.0, size=(4, 2))
    grid = TimeGrid(dt_hours=1.0, steps_per_day=4, days=1)

    def make(p1, p2, w):
        return ScenarioSet(
            scenarios=(
                Scenario("a", w, p1, 0.3 * p1),
                Scenario("b", 1.0 - w, p2, 0.3 * p2),
            ),
            grid=grid,
            bus_ids=("X", "Y"),
        )

    plain = expected_scenario(make(base, 2.0 * base, w1))
    transformed = expected_scenario(make(scale * base + shift, scale * 2.0 * base + shift, w1))
    assert np.allclose(transformed.p_kw, scale * plain.p_kw + shift, rtol=1e-10, atol=1e-8)


def test_minimal_network_constructs_directly():
    net = NetworkModel(
        base_kva=100.0,
        buses=(Bus("A", is_substation=True), Bus("B")),
        lines=(Line("l", "A", "B", 0.01, 0.01, 50.0),),
        candidates=(),
        substations=("A",),
    )
    assert net.bus_position("B") == 1
    assert net.storages() == ()
