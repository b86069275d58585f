import json
import subprocess
import sys

import numpy as np
import pytest

from advprec.cli import main
from advprec.estimator_linf import fit_linf
from advprec.experiments import read_csv_rows
from advprec.synth import make_model, sample_gaussian


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def data_csv(tmp_path):
    X = sample_gaussian(make_model("ar2", 5).covariance, 60, 1)
    p = tmp_path / "x.csv"
    p.write_text("a,b,c,d,e\n" + "\n".join(",".join(repr(float(v)) for v in row) for row in X) + "\n")
    return p, X


def test_estimate_both_norms(data_csv, capsys):
    path, X = data_csv
    code, out, _ = run(["estimate", "--input", str(path), "--delta", "0", "--format", "json"], capsys)
    assert code == 0
    est = np.array(json.loads(out)["estimate"])
    np.testing.assert_array_equal(est, fit_linf(X, 0.0).estimate)
    code, out, _ = run(["estimate", "--input", str(path), "--delta", "0.3", "--norm", "l2"], capsys)
    assert code == 0 and out.splitlines()[0] == "row,c0,c1,c2,c3,c4"


def test_estimate_errors(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2\n3,x\n")
    code, _, err = run(["estimate", "--input", str(bad), "--delta", "0.1"], capsys)
    assert code == 2 and "non-numeric" in err
    code, _, err = run(["estimate", "--input", str(tmp_path / "none.csv"), "--delta", "0.1"], capsys)
    assert code == 2


def test_simulate_writes_schema(tmp_path, capsys):
    out = tmp_path / "sim.csv"
    code, _, _ = run(["simulate", "--model", "ar2", "--d", "8", "--n", "30,40", "--reps", "2",
                      "--grid-points", "3", "--out", str(out)], capsys)
    assert code == 0
    rows = read_csv_rows(out)
    assert list(rows[0]) == ["method", "n", "metric", "mean", "stderr"]
    assert len(rows) == 2 * 2 * 4


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("model = ar3\nd = 6\nreps = 1\ngrid-points = 2\nmethods = perturbed\n")
    code, out, _ = run(["simulate", "--config", str(cfg), "--format", "json"], capsys)
    assert code == 0 and {r["method"] for r in json.loads(out)} == {"perturbed"}
    code, out, _ = run(["simulate", "--config", str(cfg), "--methods", "l1", "--format", "json"], capsys)
    assert {r["method"] for r in json.loads(out)} == {"l1"}
    cfg.write_text("bogus = 1\n")
    with pytest.raises(SystemExit):
        main(["simulate", "--config", str(cfg)])


def test_config_satisfies_required_flag(tmp_path, data_csv, capsys):
    path, _ = data_csv
    cfg = tmp_path / "e.cfg"
    cfg.write_text(f"input = {path}\ndelta = 0.2\nnorm = l2\n")
    code, out, _ = run(["estimate", "--config", str(cfg), "--format", "json"], capsys)
    assert code == 0 and json.loads(out)["norm"] == "l2"


def test_diagnose(capsys):
    code, out, _ = run(["diagnose", "--model", "ar2", "--d", "8", "--format", "json"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["mu_star"] == pytest.approx(2.4048, abs=1e-4)


def test_asymptotics(tmp_path, capsys):
    out = tmp_path / "asy.csv"
    code, _, _ = run(["asymptotics", "--gamma", "0.6", "--n-list", "100,200", "--reps", "3", "--out", str(out)], capsys)
    assert code == 0
    rows = read_csv_rows(out)
    assert len(rows) == 2 * 3 * 6
    summary = json.loads(out.with_suffix(".summary.json").read_text())
    assert [s["n"] for s in summary["samples"]] == [100, 200]
    code, _, err = run(["asymptotics", "--gamma", "0.6", "--p", "inf", "--estimator", "exact"], capsys)
    assert code == 2 and "p = 2" in err


def test_lda_on_fixture(capsys):
    code, out, err = run(["lda", "--genes", "10", "--reps", "1", "--grid-points", "3"], capsys)
    assert code == 0 and "ALL=47, AML=25" in err
    acc = [r for r in out.splitlines() if ",acc," in r][0]
    assert float(acc.split(",")[3]) >= 0.99


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "advprec", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("estimate", "simulate", "diagnose", "asymptotics", "lda"):
        assert cmd in res.stdout


def test_byte_identical_reruns(tmp_path, capsys):
    argv = ["simulate", "--d", "6", "--n", "20", "--reps", "2", "--grid-points", "3", "--seed", "11"]
    _, a, _ = run(argv, capsys)
    _, b, _ = run(argv, capsys)
    assert a == b
