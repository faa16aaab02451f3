"""Command-line interface: output formats, determinism, and exit codes."""

import json

import pytest

from scptmlab.cli import SWEEP_HEADER, main
from scptmlab.metrics import METRIC_COLUMNS, MetricsReport


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


def test_run_csv_is_deterministic(scenario_path, capsys):
    argv = ("run", scenario_path, "--set", "num_devices=50")
    code1, out1 = run_cli(capsys, *argv)
    code2, out2 = run_cli(capsys, *argv)
    assert code1 == code2 == 0
    assert out1 == out2
    lines = out1.strip().splitlines()
    assert lines[0] == MetricsReport.csv_header()
    cells = lines[1].split(",")
    assert cells[0] == "analytic"
    assert len(cells) == 1 + len(METRIC_COLUMNS)


def test_run_both_engines_json(scenario_path, capsys):
    code, out = run_cli(capsys, "run", scenario_path, "--engine", "both",
                        "--set", "num_devices=40", "--format", "json",
                        "--seed", "3")
    assert code == 0
    payload = json.loads(out)
    assert [p["provenance"] for p in payload] == ["analytic", "montecarlo"]
    for p in payload:
        assert 0.0 <= p["p_access"] <= 1.0


def test_run_mc_ensemble_reports_mean(scenario_path, capsys):
    code, out = run_cli(capsys, "run", scenario_path, "--engine", "mc",
                        "--reps", "5", "--seed", "1",
                        "--set", "num_devices=40")
    assert code == 0
    assert "montecarlo-mean" in out


def test_run_dump_files(scenario_path, capsys, tmp_path):
    trace = tmp_path / "trace.csv"
    sched = tmp_path / "sched.csv"
    plan = tmp_path / "plan.csv"
    events = tmp_path / "events.csv"
    code, _ = run_cli(capsys, "run", scenario_path, "--engine", "mc",
                      "--set", "num_devices=30",
                      "--dump-trace", str(trace),
                      "--dump-schedule", str(sched),
                      "--dump-plan", str(plan),
                      "--dump-events", str(events))
    assert code == 0
    assert trace.read_text().startswith("# scptmlab-trace v1")
    assert sched.read_text().startswith("# scptmlab-schedule v1")
    assert events.read_text().startswith("# scptmlab-events v1")
    assert plan.read_text().splitlines()[0] == "vf_index,subgroup,devices"


def test_sweep_range_and_list(scenario_path, capsys):
    code, out = run_cli(capsys, "sweep", scenario_path, "N=50:150:50",
                        "--schemes", "NeGP")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == SWEEP_HEADER
    assert lines[1] == "num_devices,scheme,engine,metric,value,half_ci95"
    swept = {row.split(",")[0] for row in lines[2:]}
    assert swept == {"50", "100", "150"}

    code, out = run_cli(capsys, "sweep", scenario_path, "scheme=SP,NeGP",
                        "--set", "num_devices=40")
    assert code == 0
    swept = {row.split(",")[0] for row in out.strip().splitlines()[2:]}
    assert swept == {"SP", "NeGP"}


def test_validate_passes_on_small_scenario(scenario_path, capsys):
    code, out = run_cli(capsys, "validate", scenario_path,
                        "--schemes", "NeGP", "--reps", "10",
                        "--set", "num_devices=40")
    assert code == 0
    assert "FAIL" not in out


def test_plan_output(scenario_path, capsys):
    code, out = run_cli(capsys, "plan", scenario_path,
                        "--set", "num_devices=20", "--set", "scheme=NeGP")
    assert code == 0
    assert "scheme=NeGP subgroups=3 devices=20" in out
    assert "subgroup 3: 4 devices paged at VF 11" in out


def test_plan_csv_via_out_file(scenario_path, capsys, tmp_path):
    path = tmp_path / "plan.csv"
    code, _ = run_cli(capsys, "plan", scenario_path,
                      "--set", "num_devices=20", "--set", "scheme=NeGP",
                      "--out", str(path))
    assert code == 0
    assert path.read_text().splitlines()[0] == "vf_index,subgroup,devices"


@pytest.mark.parametrize("argv", [
    ("sweep", None, "N=50:10:10"),          # stop < start
    ("sweep", None, "plainly-not-a-spec"),
    ("run", None, "--set", "no_such_key=1"),
    ("run", None, "--engine", "warp"),
])
def test_bad_arguments_exit_2(scenario_path, capsys, argv):
    argv = [a if a is not None else scenario_path for a in argv]
    code, _ = run_cli(capsys, *argv)
    assert code == 2


def test_missing_scenario_exits_1(capsys):
    code, _ = run_cli(capsys, "run", "/nonexistent/scenario.json")
    assert code == 1
