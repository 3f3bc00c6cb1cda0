import csv
import json
import os
import subprocess

import jsonschema
import numpy as np
import pytest

CLI = os.environ.get("VSEM_CLI", "vsem")
ROOT = os.environ.get("VSEM_ROOT", os.path.join(os.path.dirname(__file__), "..", ".."))
MODELS = os.path.join(ROOT, "models")


def run(*args):
    return subprocess.run([CLI, *map(str, args)], capture_output=True, text=True)


@pytest.fixture(scope="module")
def two_factor_csv(tmp_path_factory):
    rng = np.random.default_rng(11)
    n = 300
    f = rng.multivariate_normal([0, 0], [[1, 0.3], [0.3, 1]], size=n)
    load = np.array([[0.9, 0], [0.8, 0], [0.7, 0], [0.6, 0.9], [0, 0.8], [0, 0.7]])
    resid = np.sqrt([0.19, 0.36, 0.51, 0.19, 0.36, 0.51])
    x = f @ load.T + rng.standard_normal((n, 6)) * resid
    path = tmp_path_factory.mktemp("data") / "fig1.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"X{i}" for i in range(1, 7)])
        w.writerows(x.tolist())
    return path


@pytest.fixture(scope="module")
def schema():
    with open(os.path.join(ROOT, "schema", "compare_report.schema.json")) as f:
        return json.load(f)


def test_fit(two_factor_csv, tmp_path):
    out = tmp_path / "fit.json"
    r = run("fit", os.path.join(MODELS, "two_factor_a.txt"), two_factor_csv, "-o", out)
    assert r.returncode == 0, r.stderr
    rep = json.loads(out.read_text())
    assert rep["converged"] is True


def test_compare_matches_schema(two_factor_csv, tmp_path, schema):
    out = tmp_path / "cmp.json"
    r = run("compare", os.path.join(MODELS, "two_factor_a.txt"), os.path.join(MODELS, "two_factor_b.txt"),
            two_factor_csv, "-o", out, "--bootstrap", 100, "--seed", 3)
    assert r.returncode == 0, r.stderr
    rep = json.loads(out.read_text())
    jsonschema.validate(rep, schema)
    assert rep["n"] == 300
    assert rep["ic"]["bootstrap"]["reps"] == 100
    assert rep["p_distinguish"] < 0.05
    assert rep["decision"] == "prefer-A"


def test_compare_nested(two_factor_csv, schema):
    restricted = "F1 =~ X1 + X2 + X3 + X4\nF2 =~ X4 + X5 + X6\nF1 ~~ 0*F2\n"
    path = os.path.join(os.path.dirname(two_factor_csv), "restricted.txt")
    with open(path, "w") as f:
        f.write(restricted)
    r = run("compare", os.path.join(MODELS, "two_factor_a.txt"), path, two_factor_csv, "--nested")
    assert r.returncode == 0, r.stderr
    rep = json.loads(r.stdout)
    jsonschema.validate(rep, schema)
    assert rep["nested"]["p_classical"] < 0.05


def test_identical_models_are_indistinguishable(two_factor_csv, schema):
    a = os.path.join(MODELS, "two_factor_a.txt")
    r = run("compare", a, a, two_factor_csv)
    assert r.returncode == 0, r.stderr
    rep = json.loads(r.stdout)
    jsonschema.validate(rep, schema)
    assert rep["decision"] == "equivalent-fit-indistinguishable"
    assert rep["z"] is None
    assert rep["warnings"]


def test_wchisq():
    r = run("wchisq", "--weights", "1,1", "--x", "2")
    assert r.returncode == 0, r.stderr
    rep = json.loads(r.stdout)
    assert abs(rep["cdf"] - (1 - np.exp(-1))) < 1e-8


def test_errors(two_factor_csv, tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("F1 =~ \n")
    r = run("fit", bad, two_factor_csv)
    assert r.returncode == 1
    assert "parse error" in r.stderr
    missing = tmp_path / "missing.txt"
    missing.write_text("F =~ X1 + X2 + Q9\n")
    assert run("fit", missing, two_factor_csv).returncode == 1
    assert run("compare").returncode != 0


def test_simulate_writes_outputs(tmp_path):
    r = run("simulate", 3, "--reps", 10, "--n", 200, "--d", 0, "--threads", 1, "--out-dir", tmp_path)
    assert r.returncode == 0, r.stderr
    table = (tmp_path / "sim3_table.tsv").read_text().splitlines()
    assert table[0].startswith("study\tpair\tn\td")
    assert len(table) == 2
    manifest = json.loads((tmp_path / "sim3_manifest.json").read_text())
    assert manifest["manifest"]["seed"] == 1
    assert manifest["summaries"][0]["pair"] == "full-restricted"
    again = tmp_path / "again"
    run("simulate", 3, "--reps", 10, "--n", 200, "--d", 0, "--threads", 1, "--out-dir", again)
    assert (again / "sim3_table.tsv").read_text() == (tmp_path / "sim3_table.tsv").read_text()
