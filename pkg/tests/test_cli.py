import json

import pandas as pd
import pytest
import yaml

from minprof import pipeline
from minprof.cli import main
from minprof.exceptions import NumericalError


@pytest.fixture(scope="module")
def run_out(fixture_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["run", "--config", str(fixture_dir / "config.yaml"), "--out", str(out)]) == 0
    return out


def test_run_outputs(run_out):
    expected = ["outcomes_clean.csv", "design_raw.csv", "validation_report.json",
                "design.csv", "imputation_report.json", "design_report.json",
                "growth/boys_reading_M1.npz", "growth/boys_reading_summary.csv",
                "model_comparison_boys_reading.csv", "loo/boys_reading_M0.json",
                "bma/boys_reading.json", "bma/boys_reading_pip.csv",
                "projection/boys_reading.csv", "projection/changes.csv",
                "plots/boys_reading/trajectory_ALL.svg", "manifest.json"]
    for rel in expected:
        assert (run_out / rel).is_file(), rel
    assert not (run_out / ".staging").exists() and not (run_out / ".minprof.lock").exists()


def test_run_reports(run_out):
    imp = json.loads((run_out / "imputation_report.json").read_text())
    assert imp["n_missing_before"] > 0 and imp["n_missing_after"] == 0
    val = json.loads((run_out / "validation_report.json").read_text())
    assert val["n_countries"] == 20
    design = pd.read_csv(run_out / "design.csv")
    assert len(design) == 20 and len(design.columns) - 1 == 29
    comparison = pd.read_csv(run_out / "model_comparison_boys_reading.csv")
    assert list(comparison.model) == ["M0", "M1", "M2"]
    assert (comparison.loo_ic - (-2 * comparison.elpd_loo)).abs().max() < 1e-6
    loo = json.loads((run_out / "loo/boys_reading_M1.json").read_text())
    assert loo["loo_ic"] == -2 * loo["elpd_loo"] and loo["scale"] == "logit"
    manifest = json.loads((run_out / "manifest.json").read_text())
    files = manifest["commands"]["run"]["files"]
    assert files["design.csv"] and files["plots/boys_reading/trajectory_ALL.svg"] is None


def test_default_model_drives_projection(run_out):
    doc = json.loads((run_out / "growth/boys_reading_M1.json").read_text())
    assert doc["model"] == "M1"
    proj = pd.read_csv(run_out / "projection/boys_reading.csv")
    assert set(proj.kind) == {"observed", "fitted", "forecast"}
    assert ((proj.lo95.isna()) | ((proj.lo95 >= 0) & (proj.hi95 <= 100))).all()
    assert (proj[proj.kind == "forecast"].year.unique() == [2029, 2033]).all()


def test_stages_reuse_outputs(fixture_dir, run_out):
    # a later stage alone reads what `run` left behind
    assert main(["sensitivity", "--config", str(fixture_dir / "config.yaml"),
                 "--out", str(run_out)]) == 0
    sens = pd.read_csv(run_out / "sensitivity/boys_reading.csv")
    assert len(sens) == 15
    manifest = json.loads((run_out / "manifest.json").read_text())
    assert {"run", "sensitivity"} <= set(manifest["commands"])


def test_example_config(capsys):
    assert main(["--example-config"]) == 0
    assert yaml.safe_load(capsys.readouterr().out)["seed"]


def test_config_errors(tmp_path, fixture_dir):
    bad = tmp_path / "bad.yaml"
    bad.write_text("seed: [\n")
    assert main(["run", "--config", str(bad)]) == 2
    noseed = tmp_path / "noseed.yaml"
    noseed.write_text("paths: {out: x}\n")
    assert main(["ingest", "--config", str(noseed)]) == 2
    assert main(["run", "--config", str(fixture_dir / "config.yaml"), "--model", "m9"]) == 2
    assert main(["frobnicate"]) == 2
    assert main([]) == 2


def test_lock_is_respected(tmp_path, fixture_dir):
    (tmp_path / ".minprof.lock").write_text("12345\n")
    assert main(["ingest", "--config", str(fixture_dir / "config.yaml"),
                 "--out", str(tmp_path)]) == 2


def test_data_errors(tmp_path, fixture_dir):
    # a later stage without its prerequisites
    assert main(["impute", "--config", str(fixture_dir / "config.yaml"),
                 "--out", str(tmp_path / "empty")]) == 3
    doc = yaml.safe_load((fixture_dir / "config.yaml").read_text())
    bad_csv = tmp_path / "o.csv"
    bad_csv.write_text("country,year,group\nAlbania,2009,boys\n")
    doc["paths"]["outcomes"] = str(bad_csv)
    for key in ("indicators", "metadata"):
        doc["paths"][key] = str(fixture_dir / doc["paths"][key])
    (tmp_path / "c.yaml").write_text(yaml.safe_dump(doc))
    assert main(["ingest", "--config", str(tmp_path / "c.yaml"),
                 "--out", str(tmp_path / "o")]) == 3


def test_numerical_failure_leaves_no_partial_outputs(tmp_path, fixture_dir, monkeypatch):
    def boom(ctx):
        raise NumericalError("sampler diverged")

    monkeypatch.setitem(pipeline.STAGES, "run",
                        [pipeline.stage_ingest, pipeline.stage_impute, boom])
    out = tmp_path / "o"
    assert main(["run", "--config", str(fixture_dir / "config.yaml"), "--out", str(out)]) == 4
    assert sorted(p.name for p in out.iterdir()) == []
