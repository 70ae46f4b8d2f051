"""Command-line interface: exit codes, outputs, determinism."""

import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from vecsim.cli import main

SHIPPED = Path(__file__).resolve().parent.parent / "scenarios"
BENCH = str(SHIPPED / "benchmark.json")


def test_simulate_is_byte_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        rc = main(
            ["simulate", "--scenario", BENCH, "--out", str(out), "--no-figures"]
        )
        assert rc == 0
    for name in ("run.json", "metrics.json", "delays.csv", "tiers.csv", "trajectory.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    line = capsys.readouterr().out
    assert "edge fraction" in line and "mean delay" in line


def test_solve_renders_figures(tmp_path):
    out = tmp_path / "out"
    rc = main(["solve", "--scenario", BENCH, "--out", str(out)])
    assert rc == 0
    assert (out / "solver_report.json").exists()
    assert (out / "trajectory.csv").exists()
    figs = list((out / "figures").glob("*.png"))
    assert figs, "solve should render at least one figure"


def test_solve_all_rules_reports_each(tmp_path, capsys):
    out = tmp_path / "out"
    rc = main(["solve", "--scenario", BENCH, "--rule", "all", "--out", str(out), "--no-figures"])
    assert rc == 0
    doc = json.loads((out / "solver_report.json").read_text())
    assert set(doc["solver"]) == {"cyclic", "gs", "random"}
    line = capsys.readouterr().out
    for rule in ("cyclic", "gs", "random"):
        assert rule in line


def test_export_rerenders_saved_run(tmp_path):
    first = tmp_path / "first"
    assert main(["simulate", "--scenario", BENCH, "--out", str(first), "--no-figures"]) == 0
    second = tmp_path / "second"
    rc = main(
        ["export", "--run", str(first / "run.json"), "--out", str(second), "--no-figures"]
    )
    assert rc == 0
    for name in ("run.json", "metrics.json", "delays.csv", "trajectory.csv"):
        assert (first / name).read_bytes() == (second / name).read_bytes(), name


def test_train_writes_model_and_curves(tmp_path):
    out = tmp_path / "out"
    rc = main(["train", "--scenario", BENCH, "--out", str(out), "--no-figures"])
    assert rc == 0
    assert (out / "model.json").exists()
    curves = (out / "training_curves.csv").read_text().splitlines()
    assert curves[0].startswith("epoch")
    assert len(curves) > 2


def test_recommend_and_plan_outputs(tmp_path):
    out = tmp_path / "rec"
    assert main(["recommend", "--scenario", BENCH, "--out", str(out), "--no-figures"]) == 0
    recs = json.loads((out / "recommendations.json").read_text())
    assert recs, "at least one car"
    for car_doc in recs.values():
        assert car_doc["merged_items"]
    hier = list(out.glob("hierarchy-area-*.json"))
    assert len(hier) == 6

    out2 = tmp_path / "plan"
    assert main(["plan", "--scenario", BENCH, "--out", str(out2), "--no-figures"]) == 0
    plan = (out2 / "plan.csv").read_text().splitlines()
    assert plan[0].split(",")[:3] == ["car_id", "rsu_id", "leg"]
    assert len(plan) > 1


def test_seed_flag_changes_outputs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["plan", "--scenario", BENCH, "--out", str(a), "--no-figures"]) == 0
    assert main(
        ["plan", "--scenario", BENCH, "--seed", "99", "--out", str(b), "--no-figures"]
    ) == 0
    # route geometry ignores the seed, so plans agree; simulate must not
    assert (a / "plan.csv").read_bytes() == (b / "plan.csv").read_bytes()
    c, d = tmp_path / "c", tmp_path / "d"
    assert main(["train", "--scenario", BENCH, "--out", str(c), "--no-figures"]) == 0
    assert main(
        ["train", "--scenario", BENCH, "--seed", "99", "--out", str(d), "--no-figures"]
    ) == 0
    assert (c / "training_curves.csv").read_bytes() != (d / "training_curves.csv").read_bytes()


def test_missing_scenario_exits_2(tmp_path, capsys):
    rc = main(["plan", "--scenario", str(tmp_path / "nope.json"), "--no-figures"])
    assert rc == 2
    assert "error" in capsys.readouterr().err


def test_invalid_scenario_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"version": 99}))
    rc = main(["plan", "--scenario", str(bad), "--no-figures"])
    assert rc == 2
    assert "version" in capsys.readouterr().err


def test_out_with_multiple_scenarios_exits_2(tmp_path, capsys):
    rc = main(
        ["plan", "--scenario", BENCH, BENCH, "--out", str(tmp_path), "--no-figures"]
    )
    assert rc == 2
    assert "ambiguous" in capsys.readouterr().err


def test_parallel_jobs_over_two_scenarios(tmp_path, capsys, monkeypatch):
    # distinct copies so the default runs/<name> dirs do not collide
    for name in ("one", "two"):
        doc = json.loads(Path(BENCH).read_text())
        doc["name"] = name
        (tmp_path / f"{name}.json").write_text(json.dumps(doc))
        shutil.copy(SHIPPED / "rsus.csv", tmp_path / "rsus.csv")
    monkeypatch.chdir(tmp_path)
    rc = main(
        [
            "plan",
            "--scenario", str(tmp_path / "one.json"), str(tmp_path / "two.json"),
            "--jobs", "2", "--no-figures",
        ]
    )
    assert rc == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2
    assert (tmp_path / "runs" / "one" / "plan.csv").exists()
    assert (tmp_path / "runs" / "two" / "plan.csv").exists()


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "vecsim", "plan", "--scenario", BENCH,
         "--out", str(tmp_path / "o"), "--no-figures"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "contacts" in proc.stdout
