import csv
import json
import math

import numpy as np
import pytest

from integrated_quantiles.cli import EstimateRequest, cmd_estimate, cmd_variance, main
from integrated_quantiles.dataio import DatasetError, ResultDocument, parse_dataset, write_dataset
from integrated_quantiles.simulation import (
    DesignSpec,
    ProbabilityModel,
    SimConfig,
    SuperpopulationSpec,
    design_variances,
    generate_frame,
)
from integrated_quantiles.weights import EstimatorKind, PopulationFrame, survey_weights


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_bytes(text.encode())
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


class TestParse:
    def test_survey_unit(self, tmp_path):
        frame = parse_dataset(write(tmp_path, "value,pi,alpha,delta\n3.2,0.25,1,0\n"))
        assert survey_weights(frame).tolist() == [4.0]

    def test_pure_big_data_unit(self, tmp_path):
        frame = parse_dataset(write(tmp_path, "value,pi,alpha,delta\n1.0,,0,1\n"))
        assert math.isnan(frame.pi[0]) and frame.delta.tolist() == [1]

    def test_survey_unit_without_pi(self, tmp_path):
        path = write(tmp_path, "value,pi,alpha,delta\n2.0,0.5,1,0\n1.0,,1,0\n")
        with pytest.raises(DatasetError) as info:
            parse_dataset(path)
        assert info.value.line == 3 and "pi" in str(info.value)

    @pytest.mark.parametrize(
        "text, line",
        [
            ("value,pi,alpha\n1.0,0.5,2\n", 2),
            ("value,pi,alpha,delta\n1.0,0.5,1,0\n1.0,1.5,1,0\n", 3),
            ("value,pi,alpha,delta\n1.0,0.0,1,0\n", 2),
            ("value,pi,alpha,delta\nabc,0.5,1,0\n", 2),
            ("value,pi,alpha,delta\n1.0,0.5,1\n", 2),
            ("value,pi,alpha,delta\n1.0,0.5,1,0.5\n", 2),
            ("value,pi,delta\n1.0,0.5,0\n", 1),
        ],
    )
    def test_errors_name_line(self, tmp_path, text, line):
        with pytest.raises(DatasetError) as info:
            parse_dataset(write(tmp_path, text))
        assert info.value.line == line

    def test_crlf_and_bom(self, tmp_path):
        lf = parse_dataset(write(tmp_path, "value,pi,alpha,delta\n1,0.5,1,0\n2,,0,1\n", "a.csv"))
        crlf = parse_dataset(write(tmp_path, "﻿value,pi,alpha,delta\r\n1,0.5,1,0\r\n2,,0,1\r\n", "b.csv"))
        assert lf == crlf

    def test_missing_delta_warns(self, tmp_path, caplog):
        frame = parse_dataset(write(tmp_path, "value,pi,alpha\n1,0.5,1\n"))
        assert frame.delta.tolist() == [0] and "delta" in caplog.text

    def test_population_size(self, tmp_path):
        path = write(tmp_path, "value,pi,alpha,delta\n1,0.5,1,0\n2,0.5,1,0\n")
        assert parse_dataset(path, n=10).n == 10
        with pytest.raises(DatasetError):
            parse_dataset(path, n=1)

    def test_roundtrip(self, tmp_path):
        cfg = SimConfig(SuperpopulationSpec.lognormal(),
                        DesignSpec(ProbabilityModel.logistic(-1, 0.7), ProbabilityModel.constant(0.4)), n=400)
        frame = generate_frame(cfg, 0)
        # Drop pi for unsampled units to exercise blank fields.
        pi = np.where(frame.alpha == 1, frame.pi, np.nan)
        frame = PopulationFrame(frame.x, pi, frame.alpha, frame.delta)
        path = tmp_path / "rt.csv"
        write_dataset(frame, path)
        assert parse_dataset(path) == frame


class TestResultDocument:
    def test_roundtrip(self):
        doc = ResultDocument("estimate", {"value": 0.1 + 0.2, "ci": [1 / 3, 2 / 3], "n": 7},
                             {"seed": 3, "config_hash": "ab"})
        back = ResultDocument.from_json(doc.to_json())
        assert back == doc
        assert back.body["value"] == 0.1 + 0.2

    def test_rejects_other_format(self):
        with pytest.raises(ValueError):
            ResultDocument.from_json(json.dumps({"format": "x", "command": "c", "body": {}, "metadata": {}}))


CENSUS = "value,pi,alpha,delta\n" + "".join(f"{v},1,1,{i % 2}\n" for i, v in enumerate([5, 1, 4, 2, 8, 3]))


class TestEstimate:
    def test_census_all_identical(self, tmp_path):
        doc = cmd_estimate(EstimateRequest(str(write(tmp_path, CENSUS))))
        values = {e["estimate"]["value"] for e in doc.body["estimators"].values()}
        assert values == {3.5}

    def test_survey_only(self, tmp_path):
        text = "value,pi,alpha,delta\n1,0.5,1,0\n2,0.25,1,0\n3,0.5,0,0\n6,0.5,1,0\n7,0.2,1,0\n"
        doc = cmd_estimate(EstimateRequest(str(write(tmp_path, text)), kinds=("survey", "integrated")))
        est = doc.body["estimators"]
        assert est["survey"]["estimate"] == est["integrated"]["estimate"]

    def test_lognormal_within_band(self, tmp_path):
        cfg = SimConfig(SuperpopulationSpec.lognormal(),
                        DesignSpec(ProbabilityModel.constant(0.1), ProbabilityModel.constant(0.3)),
                        n=100_000, seed=17)
        path = tmp_path / "ln.csv"
        write_dataset(generate_frame(cfg, 0), path)
        doc = cmd_estimate(EstimateRequest(str(path), kinds=("integrated",)))
        theta = doc.body["estimators"]["integrated"]["estimate"]["value"]
        band = 4 * math.sqrt(design_variances(cfg).V_DI / cfg.n)
        assert abs(theta - 1.0) < band

    def test_cli_success(self, tmp_path, capsys):
        code, out, _ = run(capsys, "estimate", "--input", write(tmp_path, CENSUS))
        doc = ResultDocument.from_json(out)
        assert code == 0 and doc.command == "estimate"
        assert len(doc.metadata["config_hash"]) == 64

    def test_cli_csv(self, tmp_path, capsys):
        code, out, _ = run(capsys, "estimate", "--input", write(tmp_path, CENSUS), "--format", "csv")
        rows = list(csv.reader(out.splitlines()))
        assert code == 0 and rows[0][0] == "kind" and len(rows) == 4
        assert float(rows[1][1]) == 3.5

    def test_cli_input_error(self, tmp_path, capsys):
        code, _, err = run(capsys, "estimate", "--input", write(tmp_path, "value,pi,alpha\n1,,1\n"))
        assert code == 2
        assert json.loads(err)["error"]["line"] == 2

    def test_cli_missing_file(self, tmp_path, capsys):
        code, _, _ = run(capsys, "estimate", "--input", tmp_path / "nope.csv")
        assert code == 2

    def test_cli_unavailable(self, tmp_path, capsys):
        # A partial frame cannot give the population estimate.
        code, out, err = run(capsys, "estimate", "--input", write(tmp_path, CENSUS), "--n", 20)
        assert code == 3
        body = json.loads(out)["body"]["estimators"]
        assert body["population"]["estimate"].startswith("unavailable:")
        assert isinstance(body["survey"]["estimate"]["value"], float)
        assert json.loads(err)["error"]["code"] == 3

    def test_variance_missing_reported(self, tmp_path):
        text = ("value,pi,alpha,delta\n0.1,0.5,1,0\n0.5,0.5,1,0\n0.9,,0,1\n"
                "1.3,,0,1\n2.0,0.5,1,0\n2.2,0.5,0,0\n")
        doc = cmd_estimate(EstimateRequest(str(write(tmp_path, text)), kinds=("survey", "integrated")))
        est = doc.body["estimators"]
        assert isinstance(est["survey"]["variance"], float)
        assert est["integrated"]["variance"].startswith("unavailable:")
        assert isinstance(est["integrated"]["estimate"]["value"], float)


class TestVariance:
    def test_census(self, tmp_path):
        body = cmd_variance(EstimateRequest(str(write(tmp_path, CENSUS)))).body
        assert body["delta_A"] == 0.0 and body["delta_DI"] == 0.0
        assert body["bandwidth"] > 0

    def test_missing_pi_blocks_di(self, tmp_path, capsys):
        text = "value,pi,alpha,delta\n0.1,0.5,1,0\n0.5,0.5,1,0\n0.9,,0,1\n2.0,0.5,1,0\n"
        code, out, _ = run(capsys, "variance", "--input", write(tmp_path, text))
        body = json.loads(out)["body"]
        assert code == 0
        assert body["V_DI"].startswith("unavailable:") and "pi" in body["V_DI"]
        assert isinstance(body["V_A"], float)


def _config(tmp_path, **extra):
    doc = {"format": "integrated-quantiles/config@1",
           "superpopulation": {"family": "exponential", "params": {"rate": 1.0}},
           "design": {"pi_model": {"kind": "logistic", "params": {"a": -1.0, "b": 0.5}},
                      "delta_model": {"kind": "constant", "params": {"value": 0.4}}},
           "n": 800, "replications": 12, "seed": 42, **extra}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    return path


class TestSimulate:
    def test_repeatable(self, tmp_path, capsys):
        cfg = _config(tmp_path)
        outs = [run(capsys, "simulate", "--config", cfg, "--workers", w)[1] for w in (1, 1, 3)]
        assert outs[0] == outs[1] == outs[2]
        doc = json.loads(outs[0])
        assert doc["metadata"]["seed"] == 42
        assert doc["metadata"]["config"]["n"] == 800

    def test_flags_override_config(self, tmp_path, capsys):
        code, out, _ = run(capsys, "simulate", "--config", _config(tmp_path), "--reps", 3, "--seed", 7)
        doc = json.loads(out)
        assert code == 0 and doc["body"]["replications"] == 3 and doc["metadata"]["seed"] == 7

    def test_single_replication_nulls(self, tmp_path, capsys):
        _, out, _ = run(capsys, "simulate", "--config", _config(tmp_path), "--reps", 1)
        body = json.loads(out)["body"]
        assert body["estimators"]["survey"]["var_scaled_error"] is None
        assert body["variance_ordering_DI_le_A"] is None

    def test_unknown_field_named(self, tmp_path, capsys):
        code, _, err = run(capsys, "simulate", "--config", _config(tmp_path, replicates=5))
        assert code == 2 and "replicates" in err

    def test_dump(self, tmp_path, capsys):
        dump = tmp_path / "draws.csv"
        code, _, _ = run(capsys, "simulate", "--config", _config(tmp_path), "--dump-replications", dump)
        rows = list(csv.DictReader(dump.open()))
        assert code == 0 and len(rows) == 36
        assert {r["kind"] for r in rows} == {k.value for k in EstimatorKind}
        overlay = list(csv.DictReader((tmp_path / "draws_overlay.csv").open()))
        assert len(overlay) == 3 * 201 and all(float(r["density"]) > 0 for r in overlay)

    def test_out_file(self, tmp_path, capsys):
        out = tmp_path / "res.json"
        code, stdout, _ = run(capsys, "simulate", "--config", _config(tmp_path), "--reps", 2, "--out", out)
        assert code == 0 and stdout == ""
        assert ResultDocument.from_json(out.read_text()).command == "simulate"


class TestSweep:
    def test_grid_flag(self, tmp_path, capsys):
        code, out, _ = run(capsys, "sweep", "--config", _config(tmp_path), "--n-grid", "200,800",
                           "--with-gap")
        body = json.loads(out)["body"]
        assert code == 0 and [r["n"] for r in body["consistency"]] == [200, 800]
        assert all(r["median_gap"] == 0.0 for r in body["suboptimality"])

    def test_grid_from_config(self, tmp_path, capsys):
        code, out, _ = run(capsys, "sweep", "--config", _config(tmp_path, n_grid=[100, 300]))
        assert code == 0 and len(json.loads(out)["body"]["consistency"]) == 2

    def test_grid_required(self, tmp_path, capsys):
        code, _, _ = run(capsys, "sweep", "--config", _config(tmp_path))
        assert code == 2

    def test_grid_increasing(self, tmp_path, capsys):
        code, _, _ = run(capsys, "sweep", "--config", _config(tmp_path), "--n-grid", "800,200")
        assert code == 2
