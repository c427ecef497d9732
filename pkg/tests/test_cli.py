import json
import shutil

import pytest

from tailcast.cli import main


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--out", str(d), "--n", "3000", "--seed", "5"]) == 0
    cfg = d / "config.toml"
    text = cfg.read_text().replace('L = 100', 'L = 100\nfamilies = ["GumbelT", "RevExpT"]')
    cfg.write_text(text.replace('regressors = ["ols", "forest"]',
                                'regressors = ["ols", "forest"]\n[roxane.forest]\nn_trees = 30'))
    return d


@pytest.fixture(scope="module")
def trained(run_dir):
    cfg = str(run_dir / "config.toml")
    assert main(["fit-marginals", "--config", cfg]) == 0
    assert main(["train", "--config", cfg]) == 0
    return run_dir


def test_pipeline_outputs(trained):
    cfg = str(trained / "config.toml")
    out = trained / "out"
    assert main(["evaluate", "--config", cfg, "--dump-mc"]) == 0
    report = json.loads((out / "evaluate" / "report.json").read_text())
    assert set(report["methods"]) == {"mgpred", "roxane_ols", "roxane_forest"}
    cov = report["methods"]["mgpred"]["coverage_95"]
    assert 0.8 <= cov <= 1.0
    for name in ("predictions_mgpred.csv", "predictions_roxane_ols.csv", "qq_mgpred.csv",
                 "mc_mgpred.csv", "yearly_max.csv"):
        assert (out / "evaluate" / name).is_file()
    header = (out / "evaluate" / "predictions_mgpred.csv").read_text().splitlines()[0]
    assert header == "timestamp,observed,point,lo95,hi95"
    for name in ("brest.json", "summary.json", "egp_vs_gp.csv", "histogram.csv"):
        assert (out / "marginals" / name).is_file()
    log = json.loads((out / "models" / "train_log.json").read_text())
    assert log["family"] in ("GumbelT", "RevExpT")


def test_reruns_are_byte_identical(trained):
    cfg = str(trained / "config.toml")
    path = trained / "out" / "evaluate" / "report.json"
    assert main(["evaluate", "--config", cfg]) == 0
    first = path.read_bytes()
    preds = (trained / "out" / "evaluate" / "predictions_mgpred.csv").read_bytes()
    assert main(["evaluate", "--config", cfg]) == 0
    assert path.read_bytes() == first
    assert (trained / "out" / "evaluate" / "predictions_mgpred.csv").read_bytes() == preds


def test_reconstruct(trained):
    assert main(["reconstruct", "--config", str(trained / "config.toml")]) == 0
    lines = (trained / "out" / "reconstruction.csv").read_text().splitlines()
    assert lines[0] == "timestamp,method,point,lo95,hi95"
    assert len(lines) > 1


def test_report_format_flags(trained, tmp_path):
    cfg = str(trained / "config.toml")
    assert main(["evaluate", "--config", cfg, "--paper-format", "--se-form", "corrected"]) == 0
    rep = json.loads((trained / "out" / "evaluate" / "report.json").read_text())
    m = rep["methods"]["mgpred"]
    assert m["units"] == "meters x 100" and m["se_form"] == "corrected"
    assert m["rmse"] == round(m["rmse"], 1)
    main(["evaluate", "--config", cfg])  # restore the default report for other tests


def test_missing_config_exit_2(tmp_path, capsys):
    assert main(["train", "--config", str(tmp_path / "nope.toml")]) == 2
    assert "error" in capsys.readouterr().err


def test_missing_station_file_exit_2(tmp_path):
    (tmp_path / "c.toml").write_text('[[stations]]\nid = "a"\npath = "a.csv"\nrole = "covariate"\n'
                                     '[[stations]]\nid = "b"\npath = "b.csv"\nrole = "target"\n')
    assert main(["fit-marginals", "--config", str(tmp_path / "c.toml")]) == 2


def test_insufficient_data_exit_3(tmp_path):
    for name in ("a", "b"):
        rows = "".join(f"2000-01-{d:02d}T00:00:00Z,{0.1 * d}\n" for d in range(1, 21))
        (tmp_path / f"{name}.csv").write_text("timestamp,value\n" + rows)
    (tmp_path / "c.toml").write_text('[[stations]]\nid = "a"\npath = "a.csv"\nrole = "covariate"\n'
                                     '[[stations]]\nid = "b"\npath = "b.csv"\nrole = "target"\n')
    assert main(["fit-marginals", "--config", str(tmp_path / "c.toml")]) == 3


def test_model_mismatch_exit_4(trained, tmp_path):
    d = tmp_path / "copy"
    shutil.copytree(trained, d)
    text = (d / "config.toml").read_text()
    # swap the covariate order: trained models no longer match
    a, b = text.index('id = "brest"'), text.index('id = "saint_nazaire"')
    text = text.replace('id = "brest"', "@@").replace('id = "saint_nazaire"', 'id = "brest"')
    text = text.replace("@@", 'id = "saint_nazaire"')
    text = text.replace('path = "brest.csv"', "@@").replace('path = "saint_nazaire.csv"', 'path = "brest.csv"')
    text = text.replace("@@", 'path = "saint_nazaire.csv"')
    (d / "config.toml").write_text(text)
    assert a < b
    assert main(["evaluate", "--config", str(d / "config.toml")]) == 4


def test_evaluate_without_models_exit_4(run_dir, tmp_path):
    assert main(["evaluate", "--config", str(run_dir / "config.toml"), "--out", str(tmp_path)]) == 4
