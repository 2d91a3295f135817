"""Command-line behavior: exit codes, artifact flow, stage composition."""

import json

import pytest

from nrcc import sweep as S
from nrcc.cli import main

CASE = "cases/toy6"


def test_usage_errors_exit_1(capsys):
    assert main([]) == 1
    assert main(["frobnicate", "--case", CASE]) == 1
    assert main(["p0", "--case", CASE]) == 1          # --tier is required
    assert main(["p2", "--case", CASE, "--tier", "0", "--variant", "d"]) == 1
    capsys.readouterr()


def test_help_exits_0(capsys):
    assert main(["--help"]) == 0
    assert "sweep" in capsys.readouterr().out


def test_bad_case_dir_exits_2(tmp_path, capsys):
    assert main(["baseline", "--case", str(tmp_path / "nope"), "--out", str(tmp_path)]) == 2
    assert "case error" in capsys.readouterr().err


def test_tier_out_of_range_exits_2(tmp_path, capsys):
    assert main(["p0", "--case", CASE, "--tier", "9", "--out", str(tmp_path)]) == 2
    assert "out of range" in capsys.readouterr().err


def test_missing_artifact_chain_exits_2(tmp_path, capsys):
    out = str(tmp_path)
    assert main(["p0", "--case", CASE, "--tier", "0", "--out", out]) == 2
    assert "baseline" in capsys.readouterr().err
    assert main(["baseline", "--case", CASE, "--out", out]) == 0
    assert main(["p1", "--case", CASE, "--tier", "0", "--out", out]) == 2
    assert "p0 for tier 0" in capsys.readouterr().err
    assert main(["verify", "--case", CASE, "--tier", "0", "--out", out]) == 2
    assert main(["plot", "--case", CASE, "--out", out]) == 2
    capsys.readouterr()


@pytest.fixture(scope="module")
def staged_and_swept(tmp_path_factory):
    staged = tmp_path_factory.mktemp("staged")
    swept = tmp_path_factory.mktemp("swept")
    a = str(staged)
    assert main(["baseline", "--case", CASE, "--out", a]) == 0
    for k in range(4):
        assert main(["p0", "--case", CASE, "--tier", str(k), "--out", a]) == 0
        assert main(["p1", "--case", CASE, "--tier", str(k), "--out", a]) == 0
        assert main(["p2", "--case", CASE, "--tier", str(k), "--out", a]) == 0
    # the sweep should find every stage already on disk and only emit the menu
    assert main(["sweep", "--case", CASE, "--out", a]) == 0
    assert main(["sweep", "--case", CASE, "--out", str(swept), "--jobs", "2"]) == 0
    return staged, swept


def test_stage_composition_matches_sweep(staged_and_swept, capsys):
    staged, swept = staged_and_swept
    a = json.loads(S.menu_path(staged).read_text())
    b = json.loads(S.menu_path(swept).read_text())
    assert S.strip_timing(a) == S.strip_timing(b)
    capsys.readouterr()


def test_sweep_prints_tier_table(staged_and_swept, capsys):
    staged, _ = staged_and_swept
    assert main(["sweep", "--case", CASE, "--out", str(staged)]) == 0
    out = capsys.readouterr().out
    assert out.count("tier ") == 4
    assert "down range" in out and "band" in out


def test_verify_command(staged_and_swept, tmp_path, capsys):
    _, swept = staged_and_swept
    out = str(swept)
    args = ["verify", "--case", CASE, "--tier", "1", "--out", out,
            "--samples", "16", "--seed", "3"]
    assert main(args) == 0
    report_path = swept / "verify_tier_1.json"
    first = report_path.read_bytes()
    reports = json.loads(first)
    assert [r["window"] for r in reports] == ["evening"]
    assert reports[0]["violations"] == 0
    assert reports[0]["n"] == 16 and reports[0]["seed"] == 3
    assert main(args) == 0
    assert report_path.read_bytes() == first
    assert "0/16 violations" in capsys.readouterr().out


def test_verify_all_tiers(staged_and_swept, capsys):
    _, swept = staged_and_swept
    assert main(["verify", "--case", CASE, "--out", str(swept),
                 "--samples", "8", "--jobs", "2"]) == 0
    assert all((swept / f"verify_tier_{k}.json").is_file() for k in range(4))
    capsys.readouterr()


def test_plot_command(staged_and_swept, capsys):
    _, swept = staged_and_swept
    assert main(["plot", "--case", CASE, "--out", str(swept)]) == 0
    assert (swept / "curves.svg").is_file()
    assert (swept / "profiles.svg").is_file()
    assert main(["plot", "--case", CASE, "--out", str(swept), "--tier", "9"]) == 2
    capsys.readouterr()


def test_sweep_accepts_menu_json_path(tmp_path, capsys):
    target = tmp_path / "menus" / "toy.json"
    assert main(["sweep", "--case", CASE, "--out", str(target)]) == 0
    doc = json.loads(target.read_text())
    assert doc["case"] == "toy6"
    # artifacts land beside the requested menu file
    assert (tmp_path / "menus" / "baseline.json").is_file()
    capsys.readouterr()
