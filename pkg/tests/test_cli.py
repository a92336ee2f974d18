from __future__ import annotations

import json
import subprocess
import sys

import pytest

from mif.harness.cli import main
from mif.spatial import SceneGraph


def test_validate_example(relocation_path, capsys):
    assert main(["validate", str(relocation_path)]) == 0
    assert capsys.readouterr().out.startswith("ok:")


def test_run_static_relocation_fails(relocation_path):
    assert main(["run", str(relocation_path), "--mode", "static"]) == 1


def test_run_full_relocation_succeeds(relocation_path, tmp_path, capsys):
    out = tmp_path / "run.jsonl"
    assert main(["run", str(relocation_path), "--mode", "full", "--out", str(out)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["success"] is True and "D_trace" not in doc
    assert len(out.read_text().splitlines()) == 1


def test_graph_dump_and_identical_diff(relocation_path, tmp_path, capsys):
    g = tmp_path / "g.json"
    assert main(["graph", "dump", str(relocation_path), "--out", str(g)]) == 0
    assert len(SceneGraph.loads(g.read_text()).nodes) == 10
    capsys.readouterr()
    assert main(["graph", "diff", str(g), str(g)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["D"] == 0.0 and doc["matched"] == 10


@pytest.mark.parametrize("argv", [
    ["run", "x.json", "--bogus"],
    ["teleport"],
    [],
    ["run", "x.json", "--mode", "psychic"],
    ["sweep-tau", "suite", "--taus", "a,b"],
])
def test_bad_arguments_exit_2(argv, capsys):
    assert main(argv) == 2
    assert "usage" in capsys.readouterr().err


def test_missing_file_exits_2(tmp_path, capsys):
    assert main(["validate", str(tmp_path / "nope.json")]) == 2
    assert "error" in capsys.readouterr().err


def test_bad_seed_variable_exits_2(relocation_path, monkeypatch):
    monkeypatch.setenv("MIF_SEED", "seven")
    assert main(["validate", str(relocation_path)]) == 2


def test_seed_variable_overrides(relocation_path, monkeypatch, capsys):
    monkeypatch.setenv("MIF_SEED", "42")
    main(["run", str(relocation_path), "--mode", "static"])
    assert json.loads(capsys.readouterr().out)["seed"] == 42


def test_suite_commands(tmp_path, capsys):
    suite = tmp_path / "suite"
    assert main(["make-suite", str(suite), "--per-label", "2", "--unchanged", "2"]) == 0
    assert (suite / "manifest.json").exists()
    capsys.readouterr()
    assert main(["sweep-tau", str(suite), "--taus", "0.2,0.45,0.8", "--out", str(tmp_path / "sweep.csv")]) == 0
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0].startswith("tau,TPR,FPR") and len(lines) == 4
    out = tmp_path / "eval"
    assert main(["eval-adaptation", str(suite), "--modes", "static,full", "--min-per-label", "2", "--out", str(out)]) == 0
    assert len((out / "runs.jsonl").read_text().splitlines()) == 6 * 2
    assert len((out / "runs.csv").read_text().splitlines()) == 6 * 2 + 1
    # the default minimum refuses a two-per-label suite
    assert main(["eval-adaptation", str(suite)]) == 2


def test_eval_ips(relocation_path, capsys):
    assert main(["eval-ips", str(relocation_path)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["ips"]["i_col"] == 1 and doc["penetration_m"] == 0.0


def test_module_entry_point(relocation_path):
    res = subprocess.run([sys.executable, "-m", "mif", "validate", str(relocation_path)],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("ok:")
