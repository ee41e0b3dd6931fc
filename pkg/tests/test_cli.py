import json
from pathlib import Path

import numpy as np
import pytest

from jflow.cli import main

QUAD_CHAIN = {
    "problem": "dirichlet",
    "grid": {"topology": "chain", "n": 8, "h": 0.25},
    "p": 2.0,
}

ROBIN_SMALL = {
    "problem": "robin",
    "grid": {"topology": "grid", "nx": 4, "ny": 4, "h": 0.25},
    "p": 2.0,
    "law": {"g": {"kind": "arctan", "a": 0.5}, "beta": {"kind": "linear", "a": 1.0}},
}

SOURCED_ROBIN = {
    "problem": "robin",
    "grid": {"topology": "chain", "n": 6, "h": 0.25},
    "p": 2.0,
    "law": {"g": {"kind": "affine", "a": 1.0, "b": 0.8}, "beta": {"kind": "linear", "a": 1.0}},
}


def write(tmp_path, name, cfg):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def read_csv(path):
    lines = Path(path).read_text().strip().split("\n")
    header = lines[0].split(",")
    rows = [list(map(float, line.split(","))) for line in lines[1:]]
    return header, np.array(rows)


def test_run_writes_decaying_trajectory(tmp_path):
    problem = write(tmp_path, "quad.json", QUAD_CHAIN)
    out = tmp_path / "out"
    code = main(["run", "--problem", problem, "--T", "1.0", "--tau", "0.1", "--seed", "3", "--out", str(out)])
    assert code == 0
    header, rows = read_csv(out / "trajectory.csv")
    assert header[0] == "t" and header[-2] == "energy" and header[-1] == "step_residual"
    assert rows.shape[0] == 11
    energy = rows[:, -2]
    assert np.all(np.diff(energy) <= 1e-9)
    t = rows[:, 0]
    assert np.all(np.diff(t) > 0)
    assert np.allclose(np.diff(t), 0.1)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["dissipation"]["passed"]
    assert summary["contraction"]["passed"]


def test_run_T_equals_tau_two_rows(tmp_path):
    problem = write(tmp_path, "quad.json", QUAD_CHAIN)
    out = tmp_path / "out2"
    code = main(["run", "--problem", problem, "--T", "0.1", "--tau", "0.1", "--out", str(out)])
    assert code == 0
    _, rows = read_csv(out / "trajectory.csv")
    assert rows.shape[0] == 2


def test_run_missing_file_exit_2(tmp_path):
    assert main(["run", "--problem", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2


def test_run_bad_steps_exit_2(tmp_path):
    problem = write(tmp_path, "quad.json", QUAD_CHAIN)
    assert main(["run", "--problem", problem, "--T", "0.01", "--tau", "0.1", "--out", str(tmp_path)]) == 2


def test_check_robin_default_suite_passes(tmp_path):
    problem = write(tmp_path, "robin.json", ROBIN_SMALL)
    out = tmp_path / "rep"
    code = main([
        "check", "--problem", problem, "--seed", "7", "--samples", "8",
        "--T", "0.3", "--tau", "0.05", "--out", str(out),
    ])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["passed"]
    assert {c["name"] for c in report["checks"]} >= {"invariance[positive-cone]", "order-preserving"}


def test_check_sourced_flow_fails_positivity(tmp_path):
    problem = write(tmp_path, "sourced.json", SOURCED_ROBIN)
    out = tmp_path / "rep2"
    code = main([
        "check", "--problem", problem, "--seed", "7", "--samples", "8",
        "--T", "0.3", "--tau", "0.05", "--out", str(out),
    ])
    assert code == 1
    report = json.loads((out / "report.json").read_text())
    failing = [c for c in report["checks"] if not c["passed"]]
    assert failing
    assert any(c["witness"] is not None for c in failing)


def test_check_unknown_kind_exit_2(tmp_path):
    problem = write(tmp_path, "bad.json", {"problem": "wave", "grid": {"topology": "chain", "n": 5, "h": 0.1}})
    assert main(["check", "--problem", problem, "--seed", "1", "--out", str(tmp_path)]) == 2


def test_check_domination_without_reference_exit_3(tmp_path):
    problem = write(tmp_path, "quad.json", QUAD_CHAIN)
    code = main(["check", "--problem", problem, "--seed", "1", "--suite", "domination", "--out", str(tmp_path)])
    assert code == 3


def test_check_reports_byte_identical_up_to_timestamp(tmp_path):
    problem = write(tmp_path, "robin.json", ROBIN_SMALL)
    outs = []
    for name in ("repA", "repB"):
        out = tmp_path / name
        main([
            "check", "--problem", problem, "--seed", "11", "--samples", "6",
            "--T", "0.2", "--tau", "0.05", "--out", str(out),
        ])
        text = (out / "report.json").read_text()
        outs.append("\n".join(l for l in text.splitlines() if '"timestamp"' not in l))
    assert outs[0] == outs[1]


def test_list_problems(capsys):
    assert main(["list-problems"]) == 0
    text = capsys.readouterr().out
    assert "robin" in text and "tv_chain32" in text
