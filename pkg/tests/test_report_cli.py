import hashlib
import json

import pytest

from modridge.cli import main
from modridge.core import ExperimentSpec, save_dataset
from modridge.report import (
    ReportNumericError,
    SuiteConfig,
    SuiteReport,
    lattice_payload,
    ridge_payload,
    run_suite,
    stage_seeds,
)
from modridge.simulate import NoiseModel, sample_dataset
from modridge.stats import permutation_test, reliability_sweep

SMALL = dict(bootstrap_replicates=200, n_perm_accuracy=20, n_perm_cps=5, reliability_replicates=50, budgets=(64,))
SMALL_FLAGS = ["--bootstrap", "200", "--n-perm-accuracy", "20", "--n-perm-cps", "5", "--replicates", "50", "--budgets", "64"]


@pytest.fixture(scope="module")
def small_dataset():
    return sample_dataset(ExperimentSpec(shots_per_key=128), NoiseModel(0.3, 0.02), seed=5)


@pytest.fixture(scope="module")
def shots_file(tmp_path_factory, small_dataset):
    path = tmp_path_factory.mktemp("shots") / "shots.csv"
    save_dataset(small_dataset, path)
    return path


@pytest.fixture(scope="module")
def small_report(shots_file):
    return run_suite(shots_file, SuiteConfig(seed=3, **SMALL))


def test_report_sections(small_report, shots_file):
    rep = small_report
    assert rep.ridge["p_hit"] > 1 / 16
    assert set(rep.key_recovery) >= {"key_accuracy", "key_accuracy_ci", "dictionary_predictions"}
    assert rep.lattice["unit"] == "bits" and len(rep.lattice["f_table"]) == 92
    assert "odd" in rep.lattice["key_slices"]
    assert {"accuracy", "cps"} == set(rep.permutation)
    assert rep.permutation["cps"]["n_perm"] == 5
    assert rep.reliability[0]["shots_per_key"] == 64
    assert rep.uniformity["tag_counts"]["cross"] == 16
    assert set(rep.ablation["models"]) == {"marginals_only", "pairwise", "full_bitstring"}
    prov = rep.provenance
    assert prov["input_sha256"] == hashlib.sha256(shots_file.read_bytes()).hexdigest()
    assert prov["input_name"] == "shots.csv" and prov["master_seed"] == 3


def test_report_round_trip(small_report):
    text = small_report.to_json()
    assert SuiteReport.from_json(text) == small_report
    assert SuiteReport.from_json(text).to_json() == text
    with pytest.raises(ValueError):
        SuiteReport.from_json(json.dumps({"schema_version": 1}))


def test_non_finite_rejected(small_report):
    bad = SuiteReport.from_json(small_report.to_json())
    bad.ridge["p_hit"] = float("nan")
    with pytest.raises(ReportNumericError):
        bad.to_json()


def test_stage_seeds_reproduce_isolated_calls(small_report, small_dataset):
    seeds = small_report.provenance["stage_seeds"]
    assert seeds == stage_seeds(3)
    assert ridge_payload(small_dataset, 200, seeds["ridge_bootstrap"]) == small_report.ridge
    perm = permutation_test(small_dataset, "cps", 5, seeds["permutation_cps"])
    assert perm.null_values == small_report.permutation["cps"]["null_values"]
    rel = reliability_sweep(small_dataset, [64], 50, 3, seeds["reliability"])
    assert rel[0].as_dict() == small_report.reliability[0]
    assert lattice_payload(small_dataset, 3, {"odd": [1, 3, 5, 7]}) == small_report.lattice


def test_cli_suite_byte_identical(tmp_path, shots_file):
    outs = []
    for i, threads in enumerate(["1", "1", "3"]):
        out = tmp_path / f"r{i}.json"
        argv = ["suite", "--in", str(shots_file), "--seed", "4", "--threads", threads, "--report", str(out)]
        assert main(argv + SMALL_FLAGS) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1] == outs[2]
    assert not list(tmp_path.glob(".*.tmp"))


def test_corrupt_input_exit_code(tmp_path, caplog):
    bad = tmp_path / "bad.csv"
    bad.write_text("key,bits\n1,00000000\n3,0000x000\n")
    out = tmp_path / "report.json"
    assert main(["suite", "--in", str(bad), "--report", str(out)] + SMALL_FLAGS) == 2
    assert not out.exists()
    assert "line 3" in caplog.text
    assert main(["metrics", "--in", str(tmp_path / "missing.csv")]) == 2


def test_missing_key_group_exit_code(tmp_path):
    path = tmp_path / "partial.csv"
    path.write_text("1,00000000\n3,10000000\n")
    assert main(["uniformity", "--in", str(path), "--report", str(tmp_path / "u.json")]) == 2
    assert not (tmp_path / "u.json").exists()


def test_simulate_verb(tmp_path):
    out = tmp_path / "sim.csv"
    args = ["simulate", "--calibrate-p-hit", "0.183", "--shots-per-key", "32", "--seed", "1", "--out", str(out)]
    assert main(args) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "key,bits" and len(lines) == 1 + 8 * 32
    again = tmp_path / "again.csv"
    assert main(args[:-1] + [str(again)]) == 0
    assert again.read_bytes() == out.read_bytes()
    assert main(["simulate", "--calibrate-p-hit", "0.01", "--out", str(out)]) == 2
    assert main(["simulate", "--out", str(out)]) == 2


@pytest.mark.parametrize(
    "argv, section",
    [
        (["metrics", "--bootstrap", "100"], "ridge"),
        (["mobius", "--keys-slice", "1,3"], "lattice"),
        (["permtest", "--statistic", "cps", "--n-perm", "3"], "permutation"),
        (["reliability", "--budgets", "32", "--replicates", "50"], "reliability"),
        (["uniformity"], "uniformity"),
        (["ablation"], "ablation"),
    ],
)
def test_each_verb(argv, section, shots_file, capsys):
    assert main(argv + ["--in", str(shots_file)]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["command"] == argv[0] and section in payload


def test_metrics_heatmaps(tmp_path, shots_file, capsys):
    assert main(["metrics", "--in", str(shots_file), "--bootstrap", "100", "--heatmaps", str(tmp_path / "hm")]) == 0
    assert len(list((tmp_path / "hm").iterdir())) == 24
    assert json.loads(capsys.readouterr().out)["dictionary_accuracy"] >= 0


def _suite_seed(argv, tmp_path):
    out = tmp_path / "seed.json"
    assert main(argv + ["--report", str(out)]) == 0
    return json.loads(out.read_text())["provenance"]["master_seed"]


def test_config_precedence(tmp_path, shots_file, monkeypatch):
    config = tmp_path / "cfg.json"
    config.write_text(
        json.dumps(
            {"seed": 5, "bootstrap": 200, "n_perm_accuracy": 20, "n_perm_cps": 5, "replicates": 50, "budgets": [64]}
        )
    )
    base = ["suite", "--in", str(shots_file)]
    monkeypatch.setenv("MODRIDGE_SEED", "9")
    assert _suite_seed(base + ["--config", str(config), "--seed", "7"], tmp_path) == 7
    assert _suite_seed(base + ["--config", str(config)], tmp_path) == 5
    assert _suite_seed(base + SMALL_FLAGS, tmp_path) == 9
    monkeypatch.delenv("MODRIDGE_SEED")
    assert _suite_seed(base + SMALL_FLAGS, tmp_path) == 0


def test_bad_config_exit_code(tmp_path, shots_file):
    config = tmp_path / "cfg.json"
    config.write_text("[1, 2]")
    assert main(["uniformity", "--in", str(shots_file), "--config", str(config)]) == 2
