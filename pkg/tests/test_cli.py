import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from mcdlab.cli import load_sweep_config, main, run_sweep
from mcdlab.ensemble import load, save, save_operator
from mcdlab.linalg import identity, ket, partial_transpose, projector
from mcdlab.report import verify_report

XI = (ket((2, 3), (0, 0)) + ket((2, 3), (1, 2))) / np.sqrt(2)


@pytest.fixture
def example_file(tmp_path, example):
    path = tmp_path / "example.json"
    save(example, path)
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def error_of(err):
    return json.loads(err.strip().splitlines()[-1])["error"]


def test_analyze_example(capsys, example_file, example):
    code, out, _ = run(capsys, "analyze", example_file)
    assert code == 0
    rep = json.loads(out)
    assert rep["schema_version"] == 1
    s1, s2, s3 = rep["states"]
    assert abs(s1["C_j"] - 1) <= 1e-9 and abs(s1["Q_upper"] - 0.5) <= 1e-6
    assert s1["nonlocal"] is True and abs(s1["gap"] - 0.5) <= 1e-6
    assert s2["nonlocal"] is False and abs(s2["Q_lower"] - 1) <= 1e-6
    assert abs(s3["C_j"] - 2 / 3) <= 1e-9
    assert rep["problems"] == []
    assert verify_report(rep, load(example_file)) == []
    assert "timings" not in rep


def test_analyze_is_byte_identical(capsys, example_file):
    _, a, _ = run(capsys, "analyze", example_file, "--j", 1)
    _, b, _ = run(capsys, "analyze", example_file, "--j", 1)
    assert a == b


def test_analyze_numbers_have_12_digits(capsys, example_file):
    _, out, _ = run(capsys, "analyze", example_file, "--j", 3)
    c3 = json.loads(out)["states"][0]["C_j"]
    assert repr(c3) == "0.666666666667"


def test_analyze_json_and_timings(capsys, example_file, tmp_path):
    out_path = tmp_path / "r.json"
    code, out, _ = run(capsys, "analyze", example_file, "--j", 1, "--json", out_path, "--timings")
    assert code == 0
    assert "j=1" in out and "nonlocal" in out
    rep = json.loads(out_path.read_text())
    assert set(rep["timings"]) == {"confidence_j1", "crosscheck_j1"}


def test_analyze_seed_from_environment(capsys, example_file, monkeypatch):
    monkeypatch.setenv("MCDLAB_SEED", "7")
    _, out, _ = run(capsys, "analyze", example_file, "--j", 2)
    assert json.loads(out)["seed"] == 7
    _, out, _ = run(capsys, "analyze", example_file, "--j", 2, "--seed", 3)
    assert json.loads(out)["seed"] == 3
    monkeypatch.setenv("MCDLAB_SEED", "x")
    code, _, err = run(capsys, "analyze", example_file)
    assert code == 2 and error_of(err)["code"] == "config"


def test_analyze_tampered_report_fails_verification(capsys, example_file, example):
    _, out, _ = run(capsys, "analyze", example_file, "--j", 1)
    rep = json.loads(out)
    rep["states"][0]["probes"][0]["q"] = 0.45
    assert verify_report(rep, example)


@pytest.mark.parametrize(
    "content,code",
    [(None, "malformed"), ("{oops", "malformed"), ('{"dims": [2], "items": [{"prior": 0.5, "re": [[1, 0], [0, 0]]}]}', "prior_sum")],
)
def test_analyze_bad_input(capsys, tmp_path, content, code):
    path = tmp_path / "bad.json"
    if content is not None:
        path.write_text(content)
    rc, out, err = run(capsys, "analyze", path)
    assert rc == 2 and out == ""
    e = error_of(err)
    assert e["code"] == code and e["exit_code"] == 2


def test_analyze_bad_index(capsys, example_file):
    rc, _, err = run(capsys, "analyze", example_file, "--j", 4)
    assert rc == 2 and error_of(err)["code"] == "index"


def test_construct_single_xi(capsys, tmp_path):
    w = tmp_path / "w.json"
    save_operator(partial_transpose(projector(XI, (2, 3)), [1]), w)
    out = tmp_path / "e.json"
    rc, text, _ = run(capsys, "construct", "--mode", "single", w, "--out", out)
    assert rc == 0
    rep = json.loads(text)
    st = rep["states"][0]
    assert abs(st["C_j"] - 1) <= 1e-9 and st["Q_upper"] <= 0.5 + 1e-6
    assert load(out).n == 2


def test_construct_rejects_non_witness(capsys, tmp_path):
    w = tmp_path / "w.json"
    save_operator(identity((2, 2)), w)
    rc, _, err = run(capsys, "construct", "--mode", "single", w, "--out", tmp_path / "e.json")
    assert rc == 2 and error_of(err)["code"] == "construction"


def test_construct_family_single_member(capsys, tmp_path):
    phi = (ket((2, 2), (0, 0)) + ket((2, 2), (1, 1))) / np.sqrt(2)
    w = tmp_path / "w.json"
    save_operator(partial_transpose(projector(phi, (2, 2)), [1]), w)
    rc, _, err = run(capsys, "construct", "--mode", "family", w, "--out", tmp_path / "e.json")
    assert rc == 2 and "epsilon" in error_of(err)["message"]


def bell_witness_files(tmp_path):
    s = 1 / np.sqrt(2)
    d = (2, 2)
    vecs = [s * (ket(d, (0, 0)) + ket(d, (1, 1))), s * (ket(d, (0, 0)) - ket(d, (1, 1))), s * (ket(d, (0, 1)) + ket(d, (1, 0)))]
    paths = []
    for i, v in enumerate(vecs):
        p = tmp_path / f"w{i}.json"
        save_operator(partial_transpose(projector(v, d), [1]), p)
        paths.append(p)
    return paths


def test_construct_family_bell(capsys, tmp_path):
    paths = bell_witness_files(tmp_path)
    rc, text, _ = run(capsys, "construct", "--mode", "family", *paths, "--out", tmp_path / "e.json")
    assert rc == 0
    rep = json.loads(text)
    for st, pred in zip(rep["states"], rep["construction"]["predicted"]):
        assert abs(st["C_j"] - pred["C_j"]) <= 1e-8
        assert abs(st["Q_upper"] - pred["Q_j"]) <= 1e-6


def test_crosscheck(capsys, example_file, tmp_path):
    rc, out, _ = run(capsys, "crosscheck", example_file, "--j", 1)
    assert rc == 0
    c = json.loads(out)["crosscheck"]
    assert c["certified"] and abs(c["r"] - 0.6) <= 1e-6 and abs(c["p_G"] - 0.7) <= 1e-8
    rc, out, _ = run(capsys, "crosscheck", example_file, "--j", 2)
    c = json.loads(out)["crosscheck"]
    assert rc == 0 and not c["certified"] and c["skipped"]
    rc, _, err = run(capsys, "crosscheck", tmp_path / "missing.json", "--j", 1)
    assert rc == 2


def write_config(tmp_path, **cfg):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def test_sweep_100_two_state_2x2(capsys, tmp_path):
    cfg = write_config(tmp_path, dims=[2, 2], samples=100, n=2, seed=11)
    out = tmp_path / "s.csv"
    rc, text, _ = run(capsys, "sweep", cfg, "--out", out, "--workers", 4)
    assert rc == 0 and "200 rows" in text
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    assert len(rows) == 200
    assert all(r["ordering_ok"] == "true" and r["exact"] == "true" for r in rows)
    assert [int(r["sample"]) for r in rows] == sorted(int(r["sample"]) for r in rows)


def test_sweep_is_deterministic(tmp_path):
    cfg = load_sweep_config(write_config(tmp_path, dims=[2, 3], samples=4, n=[2, 3], seed=5))
    a = run_sweep(cfg, workers=1)
    b = run_sweep(cfg, workers=2)
    assert a == b


def test_sweep_3x3_not_exact(tmp_path):
    cfg = load_sweep_config(write_config(tmp_path, dims=[3, 3], samples=2, n=2, seed=0))
    rows = list(csv.DictReader(io.StringIO(run_sweep(cfg))))
    assert rows and all(r["exact"] == "false" for r in rows)
    assert all(float(r["Q_lower"]) <= float(r["Q_upper"]) + 1e-8 for r in rows)


def test_sweep_timings_column(tmp_path):
    cfg = load_sweep_config(write_config(tmp_path, dims=[2, 2], samples=1, n=2, law="pure"))
    header = run_sweep(cfg, timings=True).splitlines()[0]
    assert header.endswith(",seconds")


@pytest.mark.parametrize(
    "cfg",
    [{"samples": 3}, {"dims": [2, 2], "samples": 0}, {"dims": [2, 2], "samples": 1, "law": "gaussian"},
     {"dims": [2, 2], "samples": 1, "n": [3, 2]}, {"dims": [2, 2], "samples": 1, "seed": -1}],
)
def test_sweep_config_errors(capsys, tmp_path, cfg):
    rc, _, err = run(capsys, "sweep", write_config(tmp_path, **cfg), "--out", tmp_path / "s.csv")
    assert rc == 2 and error_of(err)["code"] == "config"


def test_module_entry_point(example_file):
    proc = subprocess.run([sys.executable, "-m", "mcdlab", "analyze", str(example_file), "--j", "2"],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["states"][0]["j"] == 2
