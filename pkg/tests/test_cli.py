import csv
import dataclasses
import os

import pytest
import yaml

from bundletr import main
from bundletr.main import run
from bundletr.problems import max_quad
from bundletr.reporting import TRACE_HEADER


def _config(repo_root, name):
    return os.path.join(repo_root, "configs", name)


def test_list_problems_is_sorted(capsys):
    assert run(["list-problems"]) == 0
    names = capsys.readouterr().out.split()
    assert names == sorted(names)
    assert "zigzag" in names


def test_oscillation_run_hits_inner_cap(repo_root, tmp_path, capsys):
    trace = tmp_path / "trace.csv"
    summary = tmp_path / "summary.yaml"
    code = run(["solve", "--problem", "counterexample_quadratic", "--config", _config(repo_root, "q0_osc.yaml"),
                "--trace", str(trace), "--summary", str(summary)])
    assert code == 2
    with open(trace, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    assert rows[0] == TRACE_HEADER
    body = rows[1:]
    assert len(body) == 12
    assert all(r[TRACE_HEADER.index("kind")] == "null-frozen" for r in body)
    assert all(float(r[TRACE_HEADER.index("rho")]) == 0.25 for r in body)
    record = yaml.safe_load(summary.read_text(encoding="utf-8"))
    assert record["status"] == "inner_cap"
    assert record["serious_steps"] == 0


def test_trace_is_reproducible(repo_root, tmp_path):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for p in paths:
        run(["solve", "--config", _config(repo_root, "repaired.yaml"), "--trace", str(p)])
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_prox_run_lands_on_soft_threshold(repo_root, tmp_path):
    summary = tmp_path / "summary.yaml"
    code = run(["solve", "--problem", "l1_quadratic:b=2,r=1", "--config", _config(repo_root, "prox.yaml"),
                "--summary", str(summary)])
    assert code == 0
    record = yaml.safe_load(summary.read_text(encoding="utf-8"))
    assert record["status"] == "critical"
    assert record["x"][0] == pytest.approx(1.0, abs=1e-8)
    assert record["problem"] == "l1_quadratic:b=2,r=1"


def test_solve_reports_summary_on_stdout(capsys):
    assert run(["solve", "--problem", "counterexample_quadratic"]) == 0
    record = yaml.safe_load(capsys.readouterr().out)
    assert record["status"] == "critical"
    assert record["f"] == pytest.approx(-0.5, abs=1e-6)


def test_unknown_problem_exits_with_error():
    assert run(["solve", "--problem", "no_such_problem"]) == 1


def test_invalid_config_exits_with_error(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("solver:\n  Theta: 0.5\n", encoding="utf-8")
    assert run(["solve", "--problem", "zigzag", "--config", str(bad)]) == 1


def test_missing_problem_exits_with_error():
    assert run(["solve"]) == 1


def test_check_oracle_prints_report(capsys):
    code = run(["check-oracle", "--problem", "max_quad", "--oracle", "downshift", "--samples", "50"])
    assert code == 0
    record = yaml.safe_load(capsys.readouterr().out)
    assert record["samples"] == 50
    assert record["exactness_max_violation"] <= 0.0


def test_check_oracle_unsupported_kind_exits_with_error():
    assert run(["check-oracle", "--problem", "zigzag", "--oracle", "natural"]) == 1


def test_partial_trace_is_written_when_evaluation_fails(tmp_path, monkeypatch):
    named = max_quad(seed=0)
    calls = {"n": 0}

    def flaky(x):
        calls["n"] += 1
        return float("nan") if calls["n"] > 12 else named.problem.value(x)

    broken = dataclasses.replace(named, problem=dataclasses.replace(named.problem, value=flaky))
    monkeypatch.setattr(main, "get_problem", lambda spec, seed=None: broken)
    trace = tmp_path / "trace.csv"
    assert run(["solve", "--problem", "max_quad", "--trace", str(trace)]) == 1
    assert trace.exists()
    with open(trace, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    assert rows[0] == TRACE_HEADER
    assert len(rows) >= 2
    assert rows[1][:2] == ["1", "1"]
