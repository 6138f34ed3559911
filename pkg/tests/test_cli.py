import csv
import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from upsilon_transforms.cli import main

DELTA1 = {"dimension": 1, "components": [{"direction": [1.0], "atoms": [{"r": 1.0, "w": 1.0}]}]}
HEAVY = {"dimension": 1, "components": [{"direction": [1.0], "density": {
    "kind": "power-law-spliced", "params": {"theta0": 0.5, "theta_inf": 0.5}}}]}


def run(capsys, *argv):
    code = main(list(argv))
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def rows(text):
    return list(csv.reader(io.StringIO(text)))


@pytest.fixture
def delta_file(tmp_path):
    p = tmp_path / "delta1.json"
    p.write_text(json.dumps(DELTA1))
    return str(p)


def test_stable_density_rows(capsys):
    code, out, err = run(capsys, "stable", "--r", "0.5", "--x", "1,2,4")
    assert code == 0
    table = rows(out)
    assert table[0] == ["x", "density"] and len(table) == 4
    for x, f in table[1:]:
        x = float(x)
        assert float(f) == pytest.approx(x**-1.5 * math.exp(-1 / (4 * x)) / (2 * math.sqrt(math.pi)), rel=1e-10)
    assert json.loads(err.splitlines()[-1])["command"] == "stable"


def test_stable_laplace_row(capsys):
    code, out, _ = run(capsys, "stable", "--r", "0.5", "--laplace", "1")
    assert code == 0
    (t, lt, ex, er), = rows(out)[1:]
    assert float(lt) == pytest.approx(math.exp(-1), rel=1e-10) and float(er) < 1e-10


def test_stable_bad_index(capsys):
    code, _, err = run(capsys, "stable", "--r", "1.5", "--x", "1")
    assert code == 2 and "(0, 1)" in err


@pytest.mark.parametrize("argv", [
    ["stable", "--r", "0.5"],
    ["stable", "--r", "0.5", "--x", "1", "--laplace", "1"],
    ["stable", "--r", "abc", "--x", "1"],
    ["bogus"],
    ["transform", "--kernel", "gamma", "--params", "alpha=1", "--measure", "fixture:delta1"],
    ["transform", "--kernel", "psi", "--params", "alpha", "--measure", "fixture:delta1"],
    ["transform", "--kernel", "psi", "--params", "alpha=-1,p=1", "--measure", "fixture:nope"],
    ["transform", "--kernel", "psi", "--params", "alpha=-1,p=1", "--measure", "fixture:delta1",
     "--grid", "2,1"],
])
def test_flag_errors_exit_2(capsys, argv):
    assert run(capsys, *argv)[0] == 2


def test_transform_psi_on_delta(capsys, delta_file):
    code, out, _ = run(capsys, "transform", "--kernel", "psi", "--params", "alpha=-1,p=1",
                       "--measure", delta_file, "--grid", "0.5,1,2")
    assert code == 0
    table = rows(out)
    assert table[0] == ["direction", "r", "density"]
    for d, r, v in table[1:]:
        r = float(r)
        assert d == "1.0" and float(v) == pytest.approx(math.exp(-r), rel=1e-14)


def test_transform_out_of_domain(capsys, delta_file):
    code, _, err = run(capsys, "transform", "--kernel", "psi", "--params", "alpha=2.5,p=1",
                       "--measure", delta_file)
    assert code == 4 and "domain {0}" in err


def test_transform_tau_bad_order(capsys):
    code, _, _ = run(capsys, "transform", "--kernel", "tau", "--params", "beta=1,alpha=0.5,p=1",
                     "--measure", "fixture:delta1")
    assert code == 2


def test_transform_bad_measure_file(capsys, tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"dimension": 1, "components": [{"direction": [1.0], "extra": 1}]}))
    code, _, err = run(capsys, "transform", "--kernel", "psi", "--params", "alpha=-1,p=1",
                       "--measure", str(p))
    assert code == 2 and "extra" in err
    code, _, _ = run(capsys, "transform", "--kernel", "psi", "--params", "alpha=-1,p=1",
                     "--measure", str(tmp_path / "missing.json"))
    assert code == 2


def test_verify_identity_passes(capsys):
    code, out, _ = run(capsys, "verify", "--identity", "part1", "--params", "beta=-1,alpha=0.5,p=1")
    assert code == 0
    doc = json.loads(out)
    assert doc["summary"]["passed"] == 1 and doc["reports"][0]["passed"]


def test_verify_hypothesis_violation(capsys):
    code, _, _ = run(capsys, "verify", "--identity", "part1", "--params", "beta=1,alpha=0.5,p=1")
    assert code == 2


def test_verify_failure_exit_5(capsys):
    code, _, err = run(capsys, "verify", "--identity", "part1", "--params", "beta=-1,alpha=0.5,p=1",
                       "--measure", "fixture:exp", "--tol", "1e-30")
    assert code == 5 and "FAILED Part1" in err


def test_verify_commute_and_csv(capsys, tmp_path):
    code, _, _ = run(capsys, "verify", "--identity", "commute", "--rho1", "psi:alpha=-1,p=1",
                     "--rho2", "tau:beta=-2,alpha=-1,p=1", "--csv", "--out-dir", str(tmp_path))
    assert code == 0
    assert {"report.json", "report.csv", "manifest.json"} <= {p.name for p in tmp_path.iterdir()}
    assert run(capsys, "verify", "--identity", "commute", "--rho1", "psi:alpha=-1,p=1")[0] == 2


def test_simulate_residual_and_determinism(capsys, tmp_path):
    argv = ["simulate", "--kernel", "psi", "--params", "alpha=-1,p=1", "--measure", "fixture:delta1",
            "--n", "100000", "--eps", "1e-4", "--seed", "42", "--ugrid", "0.25,0.5,1,2,4"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(capsys, *argv, "--out-dir", str(a))[0] == 0
    diag = json.loads((a / "diagnostics.json").read_text())["diagnostics"]
    assert diag["ecf_residual"] <= 3 / math.sqrt(1e5)
    assert run(capsys, "replay", str(a / "manifest.json"), "--out-dir", str(b))[0] == 0
    for name in ("samples.csv", "diagnostics.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    man = json.loads((a / "manifest.json").read_text())
    assert man["schema_version"] == 1 and man["seed"] == 42 and man["command"] == "simulate"
    assert "--out-dir" in man["argv"]


def test_simulate_bad_eps(capsys):
    code, _, _ = run(capsys, "simulate", "--kernel", "psi", "--params", "alpha=-1,p=1",
                     "--measure", "fixture:delta1", "--n", "10", "--eps", "0")
    assert code == 2


def test_simulate_print_samples(capsys):
    code, out, _ = run(capsys, "simulate", "--kernel", "psi", "--params", "alpha=-1,p=1",
                       "--measure", "fixture:delta1", "--n", "5", "--eps", "1e-3", "--print-samples")
    assert code == 0 and len(rows(out)) == 6


@pytest.mark.parametrize("kernel,params,domain", [
    ("psi", "alpha=0,p=1", "M_log"),
    ("pi", "alpha=0.3,p=1,q=0.5", "M0"),
    ("psi", "alpha=2.5,p=1", "{0}"),
    ("tau", "beta=-1,alpha=0.5,p=1", "M^0.5"),
])
def test_classify(capsys, kernel, params, domain):
    code, out, _ = run(capsys, "classify", "--kernel", kernel, "--params", params)
    assert code == 0 and json.loads(out)["domain"] == domain


def test_classify_membership(capsys, tmp_path):
    p = tmp_path / "heavy.json"
    p.write_text(json.dumps(HEAVY))
    code, out, _ = run(capsys, "classify", "--kernel", "psi", "--params", "alpha=1,p=1",
                       "--measure", str(p))
    assert code == 0 and json.loads(out)["member"] is False
    code, out, _ = run(capsys, "classify", "--kernel", "psi", "--params", "alpha=1,p=1",
                       "--measure", "fixture:exp")
    assert json.loads(out)["member"] is True


def test_replay_rejects_bad_manifest(capsys, tmp_path):
    p = tmp_path / "m.json"
    p.write_text("{}")
    assert run(capsys, "replay", str(p))[0] == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "upsilon_transforms", "stable", "--r", "0.5",
                          "--x", "1"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("x,density\n")
