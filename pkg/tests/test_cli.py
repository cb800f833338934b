import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from threshreg.cli import main
from threshreg.dataio import load_model, write_dataset
from threshreg.regression import RegressionSpec, sample_loglik, simulate_survival

FIX = Path(__file__).parent / "fixtures"


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def cohort(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    rng = np.random.default_rng(3)
    n = 400
    z = np.c_[rng.normal(size=n), rng.integers(0, 2, n)]
    spec = RegressionSpec(n_covariates=2)
    data = simulate_survival(spec, [-0.6, 0.2, 0.0, 0.1, 0.1, -0.2], z, rng.exponential(6.0, n), seed=3)
    path = d / "cohort.csv"
    write_dataset(path, [f"p{i}" for i in range(n)], data.time, data.event.astype(int), z, ("age", "arm"))
    return d, path


@pytest.mark.parametrize("extra", [
    [],
    ["--method", "path", "--dt", "0.01", "--t-max", "20"],
    ["--readings", "5"],
    ["--process", "competing", "--mu=-1,-0.5", "--rho", "0.3", "--dt", "0.01", "--t-max", "20"],
    ["--process", "gamma", "--x0", "2", "--dt", "0.1", "--t-max", "10"],
])
def test_simulate_byte_reproducible(tmp_path, capsys, extra):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        code, _, _ = run(["simulate", "--n", 50, "--seed", 9, "--out", p] + extra, capsys)
        assert code == 0
    assert a.read_bytes() == b.read_bytes()
    code, _, _ = run(["simulate", "--n", 50, "--seed", 10, "--out", b] + extra, capsys)
    assert a.read_bytes() != b.read_bytes()


def test_simulate_output_loads(tmp_path, capsys):
    from threshreg.dataio import load_dataset

    p = tmp_path / "l.csv"
    run(["simulate", "--n", 30, "--readings", 4, "--out", p], capsys)
    ds = load_dataset(p)
    assert len(ds) == 30 and all(r.observed for r in ds.records)
    p2 = tmp_path / "c.csv"
    run(["simulate", "--process", "competing", "--mu=-1,-1", "--n", 30, "--dt", 0.01, "--out", p2], capsys)
    assert set(load_dataset(p2).causes.tolist()) <= {0, 1, 2}


def test_seed_from_environment(tmp_path, capsys, monkeypatch):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    monkeypatch.setenv("THRESHREG_SEED", "21")
    run(["simulate", "--n", 20, "--out", a], capsys)
    run(["simulate", "--n", 20, "--seed", 21, "--out", b], capsys)
    assert a.read_bytes() == b.read_bytes()


def test_fit_then_loglik_agree(cohort, capsys):
    d, path = cohort
    model = d / "m.json"
    code, out, _ = run(["fit", "--data", path, "--model-out", model], capsys)
    assert code == 0
    fit_ll = float(out.strip().splitlines()[-1].split("=")[1])
    code, out, _ = run(["loglik", "--data", path, "--model", model], capsys)
    assert code == 0
    assert abs(float(out) - fit_ll) <= 1e-12 * max(1.0, abs(fit_ll))
    art = load_model(model)
    code, out, _ = run(["loglik", "--data", path, "--params=" + ",".join(repr(float(v)) for v in art.params)], capsys)
    assert float(out) == fit_ll
    code, out, _ = run(["loglik", "--data", path, "--covariates", "age,arm", "--params=-0.6,0.2,0,0.1,0.1,-0.2"],
                       capsys)
    from threshreg.dataio import load_dataset

    data = load_dataset(path).to_survival()
    assert float(out) == sample_loglik(data, RegressionSpec(n_covariates=2, covariate_names=("age", "arm")),
                                       np.array([-0.6, 0.2, 0, 0.1, 0.1, -0.2]))


def test_fit_reproducible(cohort, capsys, tmp_path):
    d, path = cohort
    outs = []
    for name in ("x.json", "y.json"):
        code, out, _ = run(["fit", "--data", path, "--n-starts", 3, "--seed", 2, "--model-out", tmp_path / name],
                           capsys)
        outs.append(out)
    assert outs[0] == outs[1]
    assert (tmp_path / "x.json").read_bytes() == (tmp_path / "y.json").read_bytes()


def test_predict_and_validate_reproducible(cohort, capsys, tmp_path):
    d, path = cohort
    model = tmp_path / "m.json"
    run(["fit", "--data", path, "--model-out", model], capsys)
    a, b = tmp_path / "p1.csv", tmp_path / "p2.csv"
    for p in (a, b):
        code, _, _ = run(["predict", "--model", model, "--z=0.5,1", "--r-grid", "0:4:0.5", "--out", p], capsys)
        assert code == 0
    assert a.read_bytes() == b.read_bytes()
    rows = a.read_text().splitlines()
    assert rows[0] == "row,r,survival" and len(rows) == 10 and rows[1] == "0,0.0,1.0"
    code, _, _ = run(["predict", "--model", model, "--data", path, "--r-grid", "1,2", "--out", a], capsys)
    assert code == 0 and len(a.read_text().splitlines()) == 1 + 2 * 400

    outs = []
    for tag in ("1", "2"):
        code, out, _ = run(["validate", "--model", model, "--data", path, "--by", "arm", "--n-boot", 8, "--seed", 5,
                            "--report", tmp_path / f"r{tag}.json", "--curves", tmp_path / f"c{tag}.csv"], capsys)
        assert code == 0
        outs.append(out)
    assert outs[0] == outs[1]
    assert (tmp_path / "r1.json").read_bytes() == (tmp_path / "r2.json").read_bytes()
    assert (tmp_path / "c1.csv").read_bytes() == (tmp_path / "c2.csv").read_bytes()
    rep = json.loads((tmp_path / "r1.json").read_text())
    assert [g["name"] for g in rep["subgroups"]] == ["arm=0.0", "arm=1.0"]
    code, _, _ = run(["validate", "--model", model, "--data", path, "--by", "age", "--n-boot", 2], capsys)
    assert code == 0


def test_loglik_uncoupled_modes(tmp_path, capsys):
    p = tmp_path / "l.csv"
    run(["simulate", "--n", 40, "--readings", 6, "--seed", 1, "--out", p], capsys)
    code, out, _ = run(["loglik", "--data", p, "--mode", "uncoupled", "--params=-1.0,0.0"], capsys)
    assert code == 0 and np.isfinite(float(out))
    code2, out2, _ = run(["loglik", "--data", p, "--mode", "uncoupled", "--params=-1.0,0.0"], capsys)
    assert out2 == out
    code, out, _ = run(["loglik", "--data", FIX / "valid_latent_exposures.csv", "--mode", "uncoupled",
                        "--covariates", "age", "--params=-0.5,0.1,0.2,0.0"], capsys)
    assert code == 0 and np.isfinite(float(out))


def test_validate_prints_residual_correlation(tmp_path, capsys):
    p, m = tmp_path / "l.csv", tmp_path / "m.json"
    run(["simulate", "--n", 200, "--readings", 6, "--t-max", "3", "--seed", 4, "--out", p], capsys)
    run(["fit", "--data", p, "--model-out", m], capsys)
    code, out, _ = run(["validate", "--model", m, "--data", p, "--n-boot", 3], capsys)
    assert code == 0 and "lag-1 residual correlation" in out


def test_cure_no_events_exits_nonzero(tmp_path, capsys):
    p = tmp_path / "c.csv"
    write_dataset(p, ["a", "b", "c"], [1.0, 2.0, 3.0], [0, 0, 0], [[0.1], [0.2], [0.3]], ("age",))
    code, _, err = run(["fit", "--data", p, "--cure"], capsys)
    assert code == 4 and "no events" in err


def test_error_exit_codes(tmp_path, capsys):
    code, _, err = run(["fit", "--data", FIX / "bad_accounting.csv", "--exposures"], capsys)
    assert code == 2 and "line 3" in err and "accounting" in err
    code, _, err = run(["loglik", "--data", FIX / "valid_survival.csv"], capsys)
    assert code == 2 and "--params" in err
    code, _, err = run(["loglik", "--data", FIX / "valid_survival.csv", "--params=1,2"], capsys)
    assert code == 2 and "parameters" in err
    bad = tmp_path / "m.json"
    bad.write_text("{")
    code, _, err = run(["predict", "--model", bad], capsys)
    assert code == 2 and "corrupt" in err
    code, _, _ = run(["nonsense"], capsys)
    assert code == 2


def test_module_entry_point(tmp_path):
    p = tmp_path / "a.csv"
    r = subprocess.run([sys.executable, "-m", "threshreg.cli", "simulate", "--n", "5", "--out", str(p)],
                       capture_output=True, text=True)
    assert r.returncode == 0 and p.read_text().startswith("id,time,event")
