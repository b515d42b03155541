import json
import os

import pytest

from tempderiv import cli
from tempderiv.ingest import read_series_csv
from tempderiv.model import ModelParams

from conftest import CLI_RUNS, write_cli_fixtures


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    write_cli_fixtures(root)
    return root


def run(workdir, argv, capsys):
    cwd = os.getcwd()
    os.chdir(workdir)
    try:
        code = cli.run(argv)
    finally:
        os.chdir(cwd)
    return code, capsys.readouterr().out


def test_ingest_then_fit_and_calibrate(workdir, capsys):
    code, _ = run(workdir, CLI_RUNS["ingest"] + ["--out", "series.csv"], capsys)
    assert code == 0
    s = read_series_csv(workdir / "series.csv")
    assert len(s) == 4 * 365 and s.station_id == "series"
    first = (workdir / "series.csv").read_text().splitlines()[0]
    assert first.startswith("# config=") and '"k": 3' in first
    code, out = run(workdir, ["fit", "--input", "series.csv"], capsys)
    doc = json.loads(out)
    assert code == 0 and set(doc["seasonal"]) == {"a", "b", "c", "d"} and doc["rmse"] > 0
    assert doc["seasonal"]["a"] == pytest.approx(22.15, abs=0.2)
    assert doc["config"]["command"] == "fit"
    code, _ = run(workdir, ["calibrate", "--input", "series.csv", "--out", "cal.json"], capsys)
    params = ModelParams.load(workdir / "cal.json")
    assert code == 0 and params.sigma == pytest.approx(0.01, rel=0.2)


def test_decompose_csv(workdir, capsys):
    code, out = run(workdir, CLI_RUNS["decompose"], capsys)
    lines = out.splitlines()
    assert code == 0 and lines[1] == "date,observed,trend,seasonal,residual"
    assert lines[2].split(",")[2] == ""  # trend undefined at the edge


def test_simulate_csv(workdir, capsys):
    code, out = run(workdir, CLI_RUNS["simulate"], capsys)
    lines = out.splitlines()
    assert code == 0 and lines[1].startswith("# seed=4 measure=Q")
    assert lines[3].startswith("t,path_0") and len(lines) == 4 + 41


@pytest.mark.parametrize("spec,method", [("cat.toml", "closed-form"), ("catopt.toml", "closed-form"),
                                         ("gdd.toml", "closed-form"), ("gddopt.toml", "mc")])
def test_price(workdir, capsys, spec, method):
    code, out = run(workdir, ["price", "--params", "p.json", "--spec", spec, "--paths", "2000"], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["method"] == method and doc["value"] > 0
    assert doc["config"]["spec"] == spec
    if spec == "gdd.toml":
        assert doc["inputs"]["params"]["lambda"] == 0.05


def test_oracle_and_basket(workdir, capsys):
    code, out = run(workdir, CLI_RUNS["oracle"], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["estimate"]["n_paths"] == 9000 and doc["std_error"] > 0
    code, out = run(workdir, CLI_RUNS["basket"], capsys)
    doc = json.loads(out)
    assert code == 0 and len(doc["inputs"]["attribution"]) == 2
    code, out = run(workdir, ["oracle", "--spec", "basket.toml", "--paths", "20000"], capsys)
    mc = json.loads(out)
    assert abs(mc["value"] - doc["value"]) <= 3 * mc["std_error"]


def test_classify(workdir, capsys):
    code, out = run(workdir, CLI_RUNS["classify"] + ["--importance", "imp.csv"], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["importance_method"].startswith("permutation")
    assert doc["n_rows"] == 40 and (workdir / "imp.csv").exists()
    code, out = run(workdir, ["classify", "--synthetic", "200", "--repeats", "3"], capsys)
    assert code == 0 and json.loads(out)["metrics"]["accuracy"] >= 0.9


def test_module_error_exit_1(workdir, capsys):
    code, out = run(workdir, ["price", "--params", "p.json", "--spec", "missing.toml"], capsys)
    assert code == 1 and json.loads(out)["error"]["type"] == "FileNotFoundError"
    (workdir / "bad.toml").write_text('index = "CAT"\nt1 = 60\nt2 = 30\n')
    code, out = run(workdir, ["price", "--params", "p.json", "--spec", "bad.toml"], capsys)
    assert code == 1 and "t1 < t2" in json.loads(out)["error"]["message"]
    code, out = run(workdir, ["classify"], capsys)
    assert code == 1


def test_usage_error_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.run(["bogus"])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        cli.run(["simulate", "--dynamics", "wobbly"])
    assert exc.value.code == 2
