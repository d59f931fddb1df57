import json
import subprocess
import sys

import numpy as np
import pytest

from pitetest import Schema, pite_effect_size, read_csv
from pitetest.cli import main


@pytest.fixture
def trial_csv(tmp_path):
    out = tmp_path / "trial.csv"
    assert main(["generate", "--design", "null", "--n", "80", "--ate", "0.5", "--nuisance-cont", "2",
                 "--nuisance-bin", "1", "--seed", "3", "--out", str(out)]) == 0
    return out


def _read(path):
    return json.loads(path.read_text())


def test_generate_round_trip(trial_csv):
    d = read_csv(trial_csv, Schema("y", "treatment"))
    assert d.n == 80 and d.p == 8 and d.n_treated == 40
    side = _read(trial_csv.with_suffix(".csv.json"))
    assert side["seed"] == 3 and side["design"]["ate"] == 0.5
    assert side["tool_version"] and side["format_version"] == 1
    assert side["true_effect"] == [0.5] * 80


def test_generate_als_columns_and_sidecar(tmp_path):
    out, side = tmp_path / "als.csv", tmp_path / "audit.json"
    assert main(["generate", "--design", "als", "--n", "20000", "--nuisance", "3", "--effect-size", "0.19",
                 "--spread", "Cont75_25", "--seed", "1", "--out", str(out), "--sidecar", str(side)]) == 0
    d = read_csv(out, Schema("y", "treatment"))
    assert d.p == 10
    doc = _read(side)
    assert len(doc["delta"]) == 7 and doc["design"]["spread"] == "Cont75_25"
    assert pite_effect_size(np.array(doc["true_effect"]), d) == pytest.approx(0.19, abs=0.01)


def test_generate_requires_seed(tmp_path):
    assert main(["generate", "--out", str(tmp_path / "x.csv")]) == 2


def test_test_command_report_and_histogram(trial_csv, tmp_path):
    out, hist = tmp_path / "r.json", tmp_path / "h.txt"
    argv = ["test", "--data", str(trial_csv), "--outcome", "y", "--treatment", "treatment", "--model", "lm",
            "--permutations", "200", "--alpha", "0.05", "--seed", "7", "--out", str(out), "--histogram", str(hist)]
    assert main(argv) == 0
    doc = _read(out)
    rep = doc["report"]
    assert 0 <= rep["p_value"] <= 1 and rep["n_permutations"] == 200 and rep["seed"] == 7
    assert doc["config"]["seed"] == 7 and doc["config"]["model"] == "lm"
    lines = hist.read_text().splitlines()
    assert lines[0].startswith("# observed_sd=")
    assert [float(v) for v in lines[1:]] == rep["permuted_sds"]
    first = out.read_bytes()
    assert main(argv) == 0
    assert out.read_bytes() == first


def test_forest_options(trial_csv, tmp_path):
    out = tmp_path / "rf.json"
    assert main(["test", "--data", str(trial_csv), "--outcome", "y", "--treatment", "treatment", "--model", "rf",
                 "--trees", "500", "--max-depth", "10", "--nsplit", "10", "--permutations", "2",
                 "--out", str(out)]) == 0
    forest = _read(out)["report"]["predictor"]["forest"]
    assert (forest["n_trees"], forest["max_depth"], forest["n_split_points"]) == (500, 10, 10)


def test_threads_give_identical_documents(trial_csv, tmp_path):
    docs = []
    for k in (1, 3):
        out = tmp_path / f"r{k}.json"
        assert main(["test", "--data", str(trial_csv), "--outcome", "y", "--treatment", "treatment",
                     "--model", "rf", "--trees", "5", "--permutations", "12", "--seed", "2",
                     "--threads", str(k), "--out", str(out)]) == 0
        docs.append(out.read_bytes())
    assert docs[0] == docs[1]


def test_config_file_and_override(trial_csv, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"data": str(trial_csv), "outcome": "y", "treatment": "treatment",
                               "permutations": 30, "seed": 4}))
    out = tmp_path / "r.json"
    assert main(["test", "--config", str(cfg), "--out", str(out)]) == 0
    assert _read(out)["report"]["n_permutations"] == 30
    assert main(["test", "--config", str(cfg), "--permutations", "40", "--out", str(out)]) == 0
    assert _read(out)["report"]["n_permutations"] == 40
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["test", "--config", str(cfg)]) == 2


def test_exit_codes(trial_csv, tmp_path):
    base = ["--outcome", "y", "--treatment", "treatment", "--out", str(tmp_path / "r.json")]
    # configuration: missing file, bad flag value, bad alpha
    assert main(["test", "--data", str(tmp_path / "missing.csv"), *base]) == 2
    assert main(["test", "--data", str(trial_csv), "--model", "svm", *base]) == 2
    assert main(["test", "--data", str(trial_csv), "--alpha", "2", *base]) == 2
    assert main([]) == 2
    # data: non-binary treatment
    bad = tmp_path / "bad.csv"
    bad.write_text("y,treatment,x\n1,1,0.1\n2,2,0.3\n3,0,0.2\n4,0,0.5\n")
    assert main(["test", "--data", str(bad), *base]) == 3
    # numerical: too many covariates for the arm sizes
    wide = tmp_path / "wide.csv"
    rng = np.random.default_rng(0)
    rows = ["y,treatment," + ",".join(f"x{j}" for j in range(6))]
    for i in range(10):
        rows.append(f"{rng.normal()},{i % 2}," + ",".join(str(v) for v in rng.normal(size=6)))
    wide.write_text("\n".join(rows) + "\n")
    assert main(["test", "--data", str(wide), "--permutations", "5", *base]) == 4


def test_screen_command(tmp_path):
    out = tmp_path / "als.csv"
    assert main(["generate", "--design", "als", "--n", "3000", "--effect-size", "0.38", "--spread", "Cont90_10",
                 "--seed", "5", "--out", str(out)]) == 0
    doc_path = tmp_path / "s.json"
    assert main(["screen", "--data", str(out), "--outcome", "y", "--treatment", "treatment",
                 "--out", str(doc_path)]) == 0
    doc = _read(doc_path)
    assert "respiratory_rate" in doc["selected"]
    assert len(doc["interactions"]) == 7


def test_simulate_commands(tmp_path):
    for kind, extra in (("simulate-type1", ["--sizes", "100"]),
                        ("simulate-power", ["--sizes", "1000", "--nuisance", "0", "--spreads", "Spread"])):
        outs = []
        for k in (1, 2):
            out, table = tmp_path / f"{kind}{k}.json", tmp_path / f"{kind}{k}.csv"
            assert main([kind, "--seed", "9", "--replications", "3", "--permutations", "10", *extra,
                         "--threads", str(k), "--out", str(out), "--csv", str(table)]) == 0
            outs.append((out.read_bytes(), table.read_bytes()))
        assert outs[0] == outs[1]
        doc = json.loads(outs[0][0])
        assert doc["config"]["seed"] == 9 and doc["grid"]["master_seed"] == 9
    assert main(["simulate-type1", "--out", str(tmp_path / "x.json")]) == 2


def test_simulate_from_grid_file(tmp_path):
    grid = {"master_seed": 1, "cells": [{"design": {"type": "null", "n": 40}, "replications": 2,
                                         "permutations": 5, "label": "tiny"}]}
    g = tmp_path / "grid.json"
    g.write_text(json.dumps(grid))
    out = tmp_path / "o.json"
    assert main(["simulate-type1", "--grid", str(g), "--out", str(out)]) == 0
    assert _read(out)["cells"][0]["replications"] == 2


def test_module_entry_point(trial_csv, tmp_path):
    out = tmp_path / "r.json"
    res = subprocess.run([sys.executable, "-m", "pitetest", "test", "--data", str(trial_csv), "--outcome", "y",
                          "--treatment", "treatment", "--permutations", "10", "--out", str(out)],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert "p =" in res.stdout
