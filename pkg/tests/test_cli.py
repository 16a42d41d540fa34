import csv
import json

import pytest

from trudinger import cli
from trudinger.errors import DivergenceError

PROBLEM = {"p": 3, "n": 2, "T": 1.0,
           "domain": {"kind": "ball", "center": [0, 0], "radius": 1},
           "datum": {"h": "2 + 0.5*sin(x1 + x2)*cos(t)", "bounds": [1.5, 2.5]},
           "n_samples": 20000}


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def run(tmp_path, *args):
    out = tmp_path / "out"
    code = cli.run([*args, "--out", str(out)])
    report = json.loads((out / "report.json").read_text())
    return code, report, out


def test_verify_fixture(tmp_path):
    cfg = {"seed": 3, "problem": PROBLEM,
           "barriers": [{"family": "side_sub_highp", "anchor": {"x": [1, 0], "t": 0.5}, "eps": 0.05},
                        {"family": "side_super_highp", "anchor": {"x": [0, 1], "t": 0.25}, "eps": 0.05}],
           "verify": {"n_per_piece": 2000, "n_boundary": 2000}}
    code, rep, out = run(tmp_path, "verify", "--config", str(write(tmp_path, cfg)))
    assert code == 0
    assert rep["command"] == "verify" and rep["seed"] == 3 and rep["failures"] == []
    assert [r["pass"] for r in rep["results"]] == [True, True]
    assert rep["config_hash"] == cli.config_hash(cfg)
    assert "timestamp" in json.loads((out / "run.json").read_text())
    assert len(json.loads((out / "barriers.json").read_text())) == 2


def test_verify_reports_failing_check(tmp_path, monkeypatch):
    import trudinger.cli as mod
    real = mod.make_barrier

    def halved(prob, family, y, s, eps):
        good = real(prob, family, y, s, eps)
        return real(prob, family, y, s, eps, c=good.params.c_min / 2)
    monkeypatch.setattr(mod, "make_barrier", halved)
    cfg = {"problem": PROBLEM, "verify": {"n_per_piece": 2000, "n_boundary": 2000},
           "barriers": [{"family": "side_sub_highp", "anchor": {"x": [1, 0], "t": 0.5}, "eps": 0.05}]}
    code, rep, _ = run(tmp_path, "verify", "--config", str(write(tmp_path, cfg)))
    assert code == 1
    assert rep["failures"] == ["side_sub_highp[0]"]


def test_report_is_deterministic(tmp_path):
    cfg = {"problem": {**PROBLEM, "T": 0.1}, "solver": {"h": 0.125, "n_snapshots": 2}}
    path = write(tmp_path, cfg)
    a = cli.run(["solve", "--config", str(path), "--out", str(tmp_path / "a")])
    b = cli.run(["solve", "--config", str(path), "--out", str(tmp_path / "b")])
    assert a == b == 0
    assert (tmp_path / "a" / "report.json").read_text() == (tmp_path / "b" / "report.json").read_text()
    assert (tmp_path / "a" / "snapshots.csv").read_text() == (tmp_path / "b" / "snapshots.csv").read_text()


def test_solve_negative_horizon_is_invalid(tmp_path):
    cfg = {"problem": {**PROBLEM, "T": -1.0}, "solver": {"h": 0.1}}
    code, rep, out = run(tmp_path, "solve", "--config", str(write(tmp_path, cfg)))
    assert code == 2
    err = json.loads((out / "error.json").read_text())
    assert err["error"] == "InvalidInputError"
    assert rep["failures"][0]["message"].startswith("horizon T")


@pytest.mark.parametrize("body", ["{not json", "[1, 2]", json.dumps({"problem": {"p": 3}})])
def test_malformed_configs(tmp_path, body):
    path = tmp_path / "bad.json"
    path.write_text(body)
    code, _, out = run(tmp_path, "solve", "--config", str(path))
    assert code == 2 and (out / "error.json").exists()


def test_expression_error_is_invalid(tmp_path):
    cfg = {"problem": {**PROBLEM, "datum": {"h": "2 + x1*"}}, "solver": {"h": 0.1}}
    code, _, out = run(tmp_path, "solve", "--config", str(write(tmp_path, cfg)))
    assert code == 2
    assert "offset 7" in json.loads((out / "error.json").read_text())["message"]


def test_converge_heat_writes_three_rows(tmp_path):
    cfg = {"converge": {"solution": "heat", "T": 0.5, "cells": [8, 16, 32], "min_order": 1.5,
                        "domain": {"kind": "box", "lo": [0, 0], "hi": [3.141592653589793, 1]}}}
    code, rep, out = run(tmp_path, "converge", "--config", str(write(tmp_path, cfg)))
    assert code == 0
    rows = list(csv.DictReader(open(out / "orders.csv")))
    assert len(rows) == 3
    assert float(rows[-1]["order"]) > 1.5


def test_divergence_exit_code(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise DivergenceError("non-finite values after step 17", 17)
    monkeypatch.setattr(cli, "solve", boom)
    cfg = {"problem": PROBLEM, "solver": {"h": 0.1}}
    code, rep, out = run(tmp_path, "solve", "--config", str(write(tmp_path, cfg)))
    assert code == 3
    assert json.loads((out / "error.json").read_text())["step"] == 17


def test_suite_plumbing(tmp_path, monkeypatch):
    from trudinger.acceptance import CriterionResult
    fake = [CriterionResult(1, "algebra", True, {"x": 1.0}, 0.1, 5.0),
            CriterionResult(2, "matrix", False, {"x": 2.0}, 0.1, None)]
    monkeypatch.setattr(cli, "run_all", lambda: fake)
    code, rep, _ = run(tmp_path, "suite")
    assert code == 1
    assert len(rep["results"]) == 2 and len(rep["failures"]) == 1
