import io
import json
import subprocess
import sys

import pytest

from qtperc.cli import EXIT_IO, EXIT_LIMIT, EXIT_SPEC, EXIT_USAGE, run


def call(*argv):
    buf = io.StringIO()
    code = run(list(argv), stdout=buf)
    return code, buf.getvalue()


def test_certify_z2():
    code, out = call("certify", "--spec", "z2.json", "--params", "0.25", "--max-radius", "1")
    doc = json.loads(out)
    assert code == 0
    assert doc["certified"] is True
    assert doc["psi"] == pytest.approx(0.75, abs=1e-14)
    assert doc["certificate"]["enumeration_limit"] == 26


def test_certify_failure_is_a_result():
    code, out = call("certify", "--spec", "z2", "--params", "0.45", "--max-radius", "1")
    assert code == 0 and json.loads(out)["certified"] is False


def test_psi_z1():
    code, out = call("psi", "--spec", "z1.json", "--params", "0.5", "--radius", "2")
    assert code == 0 and json.loads(out)["psi"] == pytest.approx(0.25, abs=1e-15)


def test_one_arm_zero():
    code, out = call("one-arm", "--spec", "z1.json", "--params", "0.0", "--k", "4", "--replicas", "1000", "--seed", "7")
    doc = json.loads(out)
    assert code == 0 and doc["mean"] == 0.0 and doc["seed"] == 7


def test_params_comma_and_space():
    a = call("psi", "--spec", "z2-anisotropic", "--params", "0.2,0.3")[1]
    b = call("psi", "--spec", "z2-anisotropic", "--params", "0.2", "0.3")[1]
    assert a == b
    assert json.loads(a)["psi"] == pytest.approx(1.0)


@pytest.mark.parametrize("argv", [
    ("psi", "--spec", "z2", "--params", "0.2", "0.3"),
    ("psi", "--spec", "z2", "--params", "1.2"),
    ("psi", "--spec", "z2", "--params", "abc"),
    ("bound-q", "--spec", "z2-anisotropic", "--params", "0.1", "0.2"),
    ("russo-check", "--spec", "z1", "--params", "0.0", "--n", "2"),
    ("psi", "--spec", "z2", "--params", "0.2", "--root-type", "3"),
])
def test_usage_errors(argv):
    assert call(*argv)[0] == EXIT_USAGE


def test_spec_and_io_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"kind": "periodic_lattice", "dimension": 1}')
    assert call("psi", "--spec", str(bad), "--params", "0.2")[0] == EXIT_SPEC
    bad.write_text("{not json")
    assert call("psi", "--spec", str(bad), "--params", "0.2")[0] == EXIT_SPEC
    assert call("psi", "--spec", str(tmp_path / "missing.json"), "--params", "0.2")[0] == EXIT_IO
    out = tmp_path / "no" / "such" / "dir.json"
    assert call("psi", "--spec", "z2", "--params", "0.2", "--out", str(out))[0] == EXIT_IO


def test_limit_error():
    assert call("psi", "--spec", "z2", "--params", "0.3", "--radius", "3")[0] == EXIT_LIMIT


def test_json_round_trip_every_command(tmp_path):
    commands = [
        ("psi", "--spec", "tree3", "--params", "0.3", "--radius", "2"),
        ("certify", "--spec", "honeycomb", "--params", "0.3", "--max-radius", "2"),
        ("bound-q", "--spec", "z2-anisotropic", "--params", "0.3", "--max-radius", "1", "--tol", "0.01"),
        ("one-arm", "--spec", "z2", "--params", "0.5", "--k", "3", "--replicas", "500"),
        ("chi", "--spec", "tree3", "--params", "0.2", "--m", "5", "--replicas", "500"),
        ("russo-check", "--spec", "z1", "--params", "0.5", "--n", "2", "--replicas", "500"),
        ("sweep", "--spec", "z2-anisotropic", "--grid", "0.4", "--k", "3", "--replicas", "200",
         "--max-radius", "0", "--mc-tol", "0.05", "--cert-tol", "0.01"),
    ]
    for argv in commands:
        out = tmp_path / f"{argv[0]}.json"
        assert call(*argv, "--out", str(out))[0] == 0
        doc = json.loads(out.read_text())
        assert doc["command"] == argv[0]
        assert "spec_hash" in doc


def test_csv_format(tmp_path):
    code, out = call("one-arm", "--spec", "z2", "--params", "0.5", "--k", "2", "--replicas", "100", "--format", "csv")
    header, row = out.strip().splitlines()
    assert code == 0 and "mean" in header.split(",")
    target = tmp_path / "s.csv"
    code, _ = call("sweep", "--spec", "z2-anisotropic", "--grid", "0.4", "0.6", "--k", "3", "--replicas", "200",
                   "--max-radius", "0", "--mc-tol", "0.05", "--out", str(target), "--format", "csv")
    lines = target.read_text().splitlines()
    assert code == 0 and lines[0].startswith("p_1,q_certified,q_mc") and len(lines) == 3


@pytest.mark.parametrize("argv", [
    ("one-arm", "--spec", "z2", "--params", "0.5", "--k", "8", "--replicas", "40000", "--seed", "3"),
    ("chi", "--spec", "tree3", "--params", "0.3", "--m", "8", "--replicas", "20000", "--seed", "3"),
    ("russo-check", "--spec", "z2", "--params", "0.4", "--n", "3", "--replicas", "30000", "--seed", "3"),
])
def test_byte_identical_across_threads(argv):
    outputs = {t: call(*argv, "--threads", str(t))[1] for t in (1, 2, 8)}
    assert outputs[1] == outputs[2] == outputs[8]


def test_console_script_module():
    proc = subprocess.run([sys.executable, "-m", "qtperc.cli", "psi", "--spec", "z1", "--params", "0.5"],
                          capture_output=True, text=True, check=True)
    assert json.loads(proc.stdout)["psi"] == pytest.approx(1.0)
