import csv
import json

import numpy as np
import pytest

from fqsearch import cli
from fqsearch.errors import EmptyInput
from fqsearch.io import read_json, read_series
from fqsearch.pipeline import (ExperimentConfig, export_plot_data, run_pipeline,
                               search_until_periodic, verify_manifest)
from fqsearch.lattice import FractalSpec, generate


@pytest.fixture(scope="module")
def sc42_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("sc42")
    cfg = ExperimentConfig(family="carpet", s=4, s_prime=2, stages=[1, 3], d_s=1.62, out=str(out))
    return cfg, run_pipeline(cfg)


def test_pipeline_three_stages(sc42_run):
    cfg, m = sc42_run
    assert [m["stages"][s]["N"] for s in ("1", "2", "3")] == [12, 144, 1728]
    series = [m["stages"][s]["files"]["series"]["path"] for s in ("1", "2", "3")]
    assert series == [f"stage_{s}/series.csv" for s in (1, 2, 3)]
    assert m["scaling"]["status"] == "ok"
    rep = read_json(f"{cfg.out}/scaling.json")
    assert 0.5 < rep["betaFit"]["exponent"] < 0.75
    assert rep["report"]["label"] == "SC(4,2)"
    # each record holds at least eight periods
    for s in ("1", "2", "3"):
        rec = m["stages"][s]
        assert rec["steps"] >= 8 * rec["Q"]
        p = read_series(f"{cfg.out}/stage_{s}/series.csv")
        assert len(p) == rec["steps"] + 1


def test_manifest_verifies(sc42_run):
    cfg, m = sc42_run
    assert verify_manifest(f"{cfg.out}/manifest.json") == []


def test_rerun_is_idempotent(sc42_run, monkeypatch):
    cfg, m = sc42_run
    import fqsearch.pipeline as pl

    def boom(*a, **k):
        raise AssertionError("stage recomputed")

    monkeypatch.setattr(pl, "run_stage", boom)
    again = run_pipeline(cfg)
    assert again["manifestHash"] == m["manifestHash"]


def test_single_stage_reports_insufficient_points(tmp_path):
    cfg = ExperimentConfig(family="carpet", s=4, s_prime=2, stages=[2, 2], out=str(tmp_path))
    m = run_pipeline(cfg)
    assert m["stages"]["2"]["status"] == "ok"
    assert m["stages"]["2"]["Q"] > 0 and 0 < m["stages"]["2"]["Pmax"] <= 1
    assert m["scaling"]["status"] == "failed"
    assert m["scaling"]["error"]["error"] == "InsufficientPoints"


def test_tampered_file_is_reported_and_recomputed(tmp_path):
    cfg = ExperimentConfig(family="carpet", s=3, s_prime=1, stages=[1, 2], out=str(tmp_path))
    m = run_pipeline(cfg)
    path = tmp_path / "stage_1" / "series.csv"
    path.write_text(path.read_text() + "999,0\n")
    problems = verify_manifest(tmp_path / "manifest.json")
    assert problems == ["stage 1: checksum mismatch for stage_1/series.csv"]
    again = run_pipeline(cfg)
    assert verify_manifest(tmp_path / "manifest.json") == []
    assert again["manifestHash"] == m["manifestHash"]


def test_outputs_are_bit_identical(tmp_path):
    def run(d):
        cfg = ExperimentConfig(family="sponge", s=3, s_prime=1, stages=[1, 1],
                               allow_two_point=True, out=str(d))
        run_pipeline(cfg)
        return (d / "stage_1" / "series.csv").read_bytes()

    assert run(tmp_path / "a") == run(tmp_path / "b")


def test_config_from_dict():
    cfg = ExperimentConfig.from_dict({"family": "sponge", "s": 3, "sPrime": 1, "stages": [1, 2],
                                      "classical": {"trials": 100}})
    assert cfg.s_prime == 1 and cfg.classical.trials == 100
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"family": "sponge", "s": 3, "sPrime": 1, "stages": [1, 2], "bogus": 1})
    with pytest.raises(ValueError):
        ExperimentConfig(family="carpet", s=4, s_prime=2, stages=[3, 1])
    a = ExperimentConfig(family="carpet", s=4, s_prime=2, stages=[1, 2], out="x", threads=4)
    b = ExperimentConfig(family="carpet", s=4, s_prime=2, stages=[1, 2], out="y")
    assert a.content_hash() == b.content_hash()


def test_search_doubles_until_enough_periods():
    lat = generate(FractalSpec("carpet", 4, 2, 2))
    walk, q = search_until_periodic(lat, 0, min_periods=8)
    assert walk.t >= 8 * q.Q
    # the first budget is 8 ceil(sqrt 144) = 96, then doublings
    assert walk.t in {96 * 2**j for j in range(12)}


def test_pipeline_with_classical(tmp_path):
    cfg = ExperimentConfig(family="carpet", s=3, s_prime=1, stages=[1, 3], out=str(tmp_path),
                           classical={"stage": 3, "trials": 4000, "horizon": 200, "starts": 4})
    m = run_pipeline(cfg)
    assert m["classical"]["status"] == "ok"
    assert (tmp_path / "classical" / "return.csv").is_file()
    rep = read_json(tmp_path / "scaling.json")["report"]
    assert rep["d_s"] == m["classical"]["dS"]
    assert verify_manifest(tmp_path / "manifest.json") == []


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_export_plot_data(sc42_run, tmp_path):
    cfg, _ = sc42_run
    path = export_plot_data([f"{cfg.out}/manifest.json"], tmp_path / "fig.csv")
    rows = _rows(path)
    data = [r for r in rows if r["kind"] == "data"]
    ref = [r for r in rows if r["kind"] == "reference"]
    assert len(data) == 1 and data[0]["label"] == "SC(4,2)" and data[0]["source"] == "this-work"
    assert float(data[0]["ref_inv_ds"]) == pytest.approx(1 / 1.62)
    at2 = [r for r in ref if float(r["d_s"]) == 2.0]
    assert len(at2) == 1
    assert float(at2[0]["ref_inv_ds"]) == float(at2[0]["ref_half"]) == 0.5

    lit = tmp_path / "lit.csv"
    lit.write_text("label,d_s,beta,beta_err\nSG,1.365,0.73,0.01\n")
    rows = _rows(export_plot_data([f"{cfg.out}/manifest.json"], tmp_path / "fig2.csv", literature=lit))
    sources = {r["label"]: r["source"] for r in rows if r["kind"] == "data"}
    assert sources == {"SC(4,2)": "this-work", "SG": "literature"}


def test_export_plot_data_empty(tmp_path):
    cfg = ExperimentConfig(family="carpet", s=4, s_prime=2, stages=[1, 1], out=str(tmp_path / "r"))
    run_pipeline(cfg)
    with pytest.raises(EmptyInput):
        export_plot_data([tmp_path / "r" / "manifest.json"], tmp_path / "fig.csv")


# CLI

def run_cli(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_cli_lattice(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "lattice", "--family", "sponge", "--s", 3, "--s-prime", 1,
                           "--stage", 2, "--dump", tmp_path / "m.rle")
    assert code == 0
    d = json.loads(out)
    assert d["N"] == 400 and d["L"] == 9 and round(d["dF"], 3) == 2.727
    assert (tmp_path / "m.rle").read_text().count("\n\n") == 8


def test_cli_qsearch_and_analyze(capsys, tmp_path):
    series = tmp_path / "p.csv"
    code, out, _ = run_cli(capsys, "qsearch", "--family", "carpet", "--s", 4, "--s-prime", 2,
                           "--stage", 2, "--steps", 1000, "--csv", series)
    assert code == 0
    d = json.loads(out)
    assert d["target"] == 0 and d["steps"] == 1000 and d["N"] == 144
    code, out, _ = run_cli(capsys, "analyze", series, "--out", tmp_path / "a.json")
    assert code == 0
    a = json.loads(out)
    assert a == read_json(tmp_path / "a.json")
    assert 30 < a["Q"] < 60 and a["groups"] >= 3


def test_cli_crw(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "crw", "--family", "carpet", "--s", 3, "--s-prime", 1,
                           "--stage", 3, "--trials", 2000, "--horizon", 100, "--start", "random:2",
                           "--csv", tmp_path / "c.csv")
    assert code == 0
    d = json.loads(out)
    assert d["boundary"] == "fixed" and len(d["starts"]) == 2 and d["dS"] > 0
    head = (tmp_path / "c.csv").read_text().splitlines()[0]
    assert head == "t,count,probability"


def test_cli_scaling(capsys, tmp_path):
    pts = [{"stage": s, "N": 12**s, "Q": 3 * 12 ** (0.6 * s), "Pmax": 0.8 * 12 ** (-0.24 * s)}
           for s in (1, 2, 3, 4)]
    (tmp_path / "pts.json").write_text(json.dumps(pts))
    (tmp_path / "meta.json").write_text(json.dumps({"family": "carpet", "s": 4, "sPrime": 2}))
    code, out, _ = run_cli(capsys, "scaling", tmp_path / "pts.json", tmp_path / "meta.json",
                           "--ds", 1.62, "--alpha-stages", 2, 4, "--csv", tmp_path / "b.csv")
    assert code == 0
    d = json.loads(out)
    assert d["betaFit"]["exponent"] == pytest.approx(0.6)
    assert d["report"]["alpha"] == pytest.approx(0.24)
    assert len(d["alphaFit"]["points"]) == 3
    assert (tmp_path / "b.csv").is_file()


def test_cli_pipeline_and_plotdata(capsys, tmp_path):
    conf = tmp_path / "exp.json"
    conf.write_text(json.dumps({"family": "carpet", "s": 4, "sPrime": 2, "stages": [1, 3], "d_s": 1.62}))
    code, out, _ = run_cli(capsys, "pipeline", "--config", conf, "--out", tmp_path / "run")
    assert code == 0 and json.loads(out)["scaling"] == "ok"
    code, out, _ = run_cli(capsys, "plotdata", tmp_path / "run" / "manifest.json",
                           "--out", tmp_path / "beta_vs_ds_plot.csv")
    assert code == 0 and (tmp_path / "beta_vs_ds_plot.csv").is_file()


@pytest.mark.parametrize("argv,code,error", [
    (["lattice", "--family", "carpet", "--s", "4", "--s-prime", "3"], 2, "InvalidSpec"),
    (["qsearch", "--family", "carpet", "--s", "3", "--s-prime", "1", "--stage", "1",
      "--target", "8"], 2, "InvalidTarget"),
    (["analyze", "missing.csv"], 1, "FileNotFoundError"),
])
def test_cli_errors(capsys, tmp_path, monkeypatch, argv, code, error):
    monkeypatch.chdir(tmp_path)
    rc, out, err = run_cli(capsys, *argv)
    assert rc == code
    assert json.loads(err)["error"] == error


def test_cli_flags_override_config(capsys, tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"family": "carpet", "s": 4, "s_prime": 2, "stage": 3}))
    code, out, _ = run_cli(capsys, "lattice", "--config", conf, "--stage", 1)
    assert json.loads(out)["N"] == 12
    code, out, _ = run_cli(capsys, "lattice", "--config", conf)
    assert json.loads(out)["N"] == 1728
