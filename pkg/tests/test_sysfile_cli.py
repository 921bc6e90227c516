import json
import subprocess
import sys

import numpy as np
import pytest

from geozero.cli import main
from geozero.errors import ValidationError
from geozero.system import StateSpaceSystem
from geozero.sysfile import (
    dumps_system,
    example_path,
    load_example,
    load_system,
    system_to_dict,
    write_system,
)
from randsys import suite


def run_cli(*args):
    proc = subprocess.run(
        [sys.executable, "-m", "geozero.cli", *map(str, args)],
        capture_output=True,
        check=False,
    )
    return proc.returncode, proc.stdout, proc.stderr


def _write_json(path, data):
    path.write_text(json.dumps(data))
    return path


# --- system files ---------------------------------------------------------------------

def test_example1_dimensions():
    s = load_example(1)
    assert s.dims == (5, 4, 3)
    assert s.name == "example1"


@pytest.mark.parametrize("k", [1, 2, 3])
def test_round_trip_fixtures_bit_exact(tmp_path, k):
    s = load_example(k)
    write_system(s, tmp_path / "s.json")
    back = load_system(tmp_path / "s.json")
    for a, b in zip((s.A, s.B, s.C, s.D), (back.A, back.B, back.C, back.D)):
        np.testing.assert_array_equal(a, b)


def test_round_trip_random_bit_exact(tmp_path):
    for i, s in enumerate(suite(count=20, seed=1)):
        path = tmp_path / f"r{i}.json"
        write_system(s, path)
        back = load_system(path, check_rank=False)
        assert all(np.array_equal(a, b) for a, b in zip((s.A, s.B, s.C, s.D), (back.A, back.B, back.C, back.D)))
        assert dumps_system(back) == path.read_text()


def test_round_trip_empty_matrices(tmp_path):
    s = StateSpaceSystem(np.zeros((0, 0)), np.zeros((0, 2)), np.zeros((2, 0)), np.eye(2))
    write_system(s, tmp_path / "static.json")
    back = load_system(tmp_path / "static.json", check_rank=False)
    assert back.dims == (0, 2, 2)
    np.testing.assert_array_equal(back.D, np.eye(2))


def _ex1_dict():
    return system_to_dict(load_example(1))


def test_shape_mismatch(tmp_path):
    d = _ex1_dict()
    d["B"] = [row[:3] for row in d["B"]]
    with pytest.raises(ValidationError) as info:
        load_system(_write_json(tmp_path / "bad.json", d))
    assert info.value.kind == "shape"
    assert "B[0]" in str(info.value)


def test_nan_entry(tmp_path):
    d = _ex1_dict()
    d["A"][2][3] = float("nan")
    path = _write_json(tmp_path / "nan.json", d)
    assert "NaN" in path.read_text()
    with pytest.raises(ValidationError) as info:
        load_system(path)
    assert info.value.kind == "nonfinite"


def test_malformed_and_missing(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"n": 1,')
    with pytest.raises(ValidationError) as info:
        load_system(path)
    assert info.value.kind == "malformed" and ":1:" in str(info.value)
    with pytest.raises(ValidationError) as info:
        load_system(tmp_path / "absent.json")
    assert info.value.kind == "missing"
    d = _ex1_dict()
    del d["C"]
    with pytest.raises(ValidationError):
        load_system(_write_json(tmp_path / "noc.json", d))
    d = _ex1_dict()
    d["A"][0][0] = "x"
    with pytest.raises(ValidationError) as info:
        load_system(_write_json(tmp_path / "str.json", d))
    assert "A[0][0]" in str(info.value)


def test_rank_condition(tmp_path):
    d = _ex1_dict()
    for row in d["B"]:
        row[1] = row[0]
    with pytest.raises(ValidationError) as info:
        load_system(_write_json(tmp_path / "rank.json", d))
    assert info.value.kind == "rank"
    assert load_system(tmp_path / "rank.json", check_rank=False).m == 4


# --- analyze ------------------------------------------------------------------------

def test_analyze_example1_json(capsys):
    assert main(["analyze", str(example_path(1)), "--format", "json"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["reachable"] and rep["right_invertible"]
    mp = [z["re"] for z in rep["zeros"]["minimum_phase"]]
    nmp = [z["re"] for z in rep["zeros"]["non_minimum_phase"]]
    assert mp == pytest.approx([-1.2509], abs=5e-4)
    assert nmp == pytest.approx([0.7534], abs=5e-4)


def test_analyze_example2_text(capsys):
    assert main(["analyze", str(example_path(2))]) == 0
    out = capsys.readouterr().out
    assert "not reachable" in out and "not right-invertible" in out
    assert "{-1.0000, -1.0000, -1.0000}" in out


def test_analyze_example3(capsys):
    assert main(["analyze", str(example_path(3)), "--format=json"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert [z["re"] for z in rep["zeros"]["all"]] == pytest.approx([-0.5])


def test_analyze_tolerance_flags(capsys):
    assert main(["analyze", str(example_path(1)), "--format=json", "--tol-rank=1e-8", "--margin=0"]) == 0
    tol = json.loads(capsys.readouterr().out)["tolerances"]
    assert tol["rank_tol"] == 1e-8 and tol["stability_margin"] == 0.0


# --- cancel -------------------------------------------------------------------------

def test_cancel_example1(tmp_path, capsys):
    assert main(["cancel", str(example_path(1)), "--out", str(tmp_path), "--format=json"]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert [z["re"] for z in rep["cascade"]["zeros"]] == pytest.approx([0.7534], abs=5e-4)
    assert rep["passed"] and rep["compensator_order"] == 1
    assert json.loads(capsys.readouterr().out) == rep


def test_cancel_example3_selection(tmp_path):
    assert main(["cancel", str(example_path(3)), "--select=2,3", "--out", str(tmp_path)]) == 0
    comp = json.loads((tmp_path / "compensator.json").read_text())
    assert comp["D"][0] == [0.0, 0.0, 0.0]
    assert comp["D"][1:] == [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]


def test_cancel_example2_order(tmp_path):
    assert main(["cancel", str(example_path(2)), "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "report.json").read_text())["compensator_order"] == 3


@pytest.mark.parametrize("sel", ["0", "4", "2,2", "a"])
def test_cancel_bad_selection(tmp_path, sel):
    assert main(["cancel", str(example_path(3)), f"--select={sel}", "--out", str(tmp_path)]) == 1


# --- simulate --------------------------------------------------------------------------

def test_simulate_example3_cascade_kept_channel(tmp_path, capsys):
    main(["cancel", str(example_path(3)), "--select=2,3", "--out", str(tmp_path)])
    capsys.readouterr()
    csv = tmp_path / "y.csv"
    assert main(["simulate", str(tmp_path / "cascade.json"), "--input=2", "--out", str(csv)]) == 0
    summary = capsys.readouterr().out
    assert "overshoot (input 2)" in summary and "y2=0.000000" in summary
    data = np.loadtxt(csv, delimiter=",", skiprows=1)
    assert data.shape == (10001, 3)


def test_simulate_bad_dt():
    assert main(["simulate", str(example_path(1)), "--dt=0"]) == 1
    assert main(["simulate", str(example_path(1)), "--input=9"]) == 1


def test_simulate_stable_scalar_final_value(tmp_path, capsys):
    s = StateSpaceSystem([[-2.0]], [[1.0]], [[3.0]], [[0.5]])
    write_system(s, tmp_path / "s.json")
    assert main(["simulate", str(tmp_path / "s.json"), "--tf=20"]) == 0
    out = capsys.readouterr()
    last = out.out.strip().splitlines()[-1].split(",")
    assert float(last[1]) == pytest.approx(0.5 + 1.5, abs=1e-6)
    assert "overshoot" in out.err


# --- verify ----------------------------------------------------------------------------

def test_verify_round_trip(tmp_path, capsys):
    main(["cancel", str(example_path(1)), "--out", str(tmp_path)])
    capsys.readouterr()
    code = main(["verify", str(example_path(1)), str(tmp_path / "compensator.json"), str(tmp_path / "cascade.json")])
    out = capsys.readouterr().out
    assert code == 0
    assert "[FAIL]" not in out and "[PASS] markov" in out


def test_verify_perturbed_cascade(tmp_path, capsys):
    main(["cancel", str(example_path(1)), "--out", str(tmp_path)])
    d = json.loads((tmp_path / "cascade.json").read_text())
    d["B"][1][1] += 0.1
    _write_json(tmp_path / "cascade.json", d)
    capsys.readouterr()
    code = main(["verify", str(example_path(1)), str(tmp_path / "compensator.json"), str(tmp_path / "cascade.json")])
    out = capsys.readouterr()
    assert code == 3
    assert "[FAIL] markov" in out.out and "markov" in out.err


def test_verify_dimension_mismatch(tmp_path):
    main(["cancel", str(example_path(1)), "--out", str(tmp_path)])
    code = main(["verify", str(example_path(3)), str(tmp_path / "compensator.json"), str(tmp_path / "cascade.json")])
    assert code == 1


# --- exit codes, determinism ------------------------------------------------------------

def test_exit_codes_via_subprocess(tmp_path):
    assert run_cli("analyze", example_path(1))[0] == 0
    assert run_cli("analyze", tmp_path / "missing.json")[0] == 1
    assert run_cli("frobnicate")[0] == 1
    code, _, err = run_cli("analyze")
    assert code == 1 and b"usage" in err


def test_numerical_failure_exit_code(tmp_path):
    s = StateSpaceSystem([[50.0]], [[1.0]], [[1.0]], [[0.0]])
    write_system(s, tmp_path / "unstable.json")
    assert main(["simulate", str(tmp_path / "unstable.json"), "--tf=20"]) == 2


def test_repeated_runs_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    r1 = run_cli("cancel", example_path(1), "--out", a, "--format=json")
    r2 = run_cli("cancel", example_path(1), "--out", b, "--format=json")
    assert r1 == r2 and r1[0] == 0
    for name in ("compensator.json", "cascade.json", "report.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert run_cli("analyze", example_path(2)) == run_cli("analyze", example_path(2))
    assert run_cli("simulate", example_path(3), "--tf=1") == run_cli("simulate", example_path(3), "--tf=1")
