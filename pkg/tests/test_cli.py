import hashlib
import json
import os
import subprocess
import sys

import pytest

from pathloss_aug import cli, demo

SMALL = dict(size=65, cellsize=8.0, n_measurements=300, spacing=40.0)


def run(*argv, env=None):
    """Run the CLI in a subprocess; returns (code, stdout, stderr)."""
    e = dict(os.environ)
    e.update(env or {})
    p = subprocess.run([sys.executable, "-m", "pathloss_aug.cli", *map(str, argv)],
                       capture_output=True, text=True, env=e)
    return p.returncode, p.stdout, p.stderr


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def terrain(tmp_path_factory):
    d = tmp_path_factory.mktemp("terrain")
    code = cli.main(["terrain-gen", "--size", "65", "--cellsize", "10", "--seed", "3",
                     "--relief", "30", "-o", str(d)])
    assert code == 0
    return d


def sim_config(tmp_path, terrain, **over):
    doc = {"dsm": str(terrain / "dsm.asc"), "dhm": str(terrain / "dhm.asc"),
           "tx": {"x": 320, "y": 320, "tower_height": 30, "freqs": [1932.5], "site_id": "S1"},
           "grid": {"bounds": [50, 50, 600, 600], "spacing": 50},
           "model": {"name": "cost231", "params": {"env": "suburban"}}}
    doc.update(over)
    p = tmp_path / "sim.json"
    p.write_text(json.dumps(doc))
    return p


class TestTerrainGen:
    def test_outputs_and_manifest(self, terrain):
        assert {p.name for p in terrain.iterdir()} == {"dsm.asc", "dhm.asc", "manifest.json"}
        man = json.loads((terrain / "manifest.json").read_text())
        assert man["effective_config"]["seed"] == 3
        assert {o["path"] for o in man["outputs"]} == {"dsm.asc", "dhm.asc"}
        assert all(o["sha256"] == sha(terrain / o["path"]) for o in man["outputs"])
        assert "created_utc" in man

    def test_rerun_identical(self, terrain, tmp_path):
        assert cli.main(["terrain-gen", "--size", "65", "--cellsize", "10", "--seed", "3",
                         "--relief", "30", "-o", str(tmp_path)]) == 0
        for name in ("dsm.asc", "dhm.asc"):
            assert sha(tmp_path / name) == sha(terrain / name)


class TestSimulate:
    def test_outputs(self, terrain, tmp_path):
        cfg = sim_config(tmp_path, terrain)
        out = tmp_path / "out"
        assert cli.main(["simulate", str(cfg), "-o", str(out), "--coverage"]) == 0
        lines = (out / "dataset.csv").read_text().splitlines()
        assert lines[0].startswith("site,source,freq_mhz") and len(lines) == 1 + 144
        assert (out / "coverage_1932.5MHz.asc").exists()
        man = json.loads((out / "manifest.json").read_text())
        assert man["effective_config"]["model"]["name"] == "cost231"
        assert len(man["inputs"]) == 3

    def test_flags_override_config(self, terrain, tmp_path):
        cfg = sim_config(tmp_path, terrain)
        out = tmp_path / "out"
        assert cli.main(["simulate", str(cfg), "-o", str(out), "--model", "fspl",
                         "--n-points", "10", "--seed", "4"]) == 0
        man = json.loads((out / "manifest.json").read_text())
        assert man["effective_config"]["model"]["name"] == "fspl"
        assert man["effective_config"]["grid"] == {"bounds": [50, 50, 600, 600], "n_points": 10,
                                                   "seed": 4}

    def test_out_of_bounds_tx(self, terrain, tmp_path):
        cfg = sim_config(tmp_path, terrain, tx={"x": 99999, "y": 320, "tower_height": 30,
                                                "freqs": [1932.5]})
        out = tmp_path / "out"
        code, stdout, stderr = run("simulate", cfg, "-o", out)
        assert code != 0
        assert not out.exists()
        lines = stderr.strip().splitlines()
        assert len(lines) == 1
        err = json.loads(lines[0])
        assert err["error"] == "OutOfBoundsError"

    def test_missing_file(self, tmp_path):
        code, _, stderr = run("simulate", tmp_path / "nope.json", "-o", tmp_path / "o")
        assert code != 0 and json.loads(stderr)["error"] == "FileNotFoundError"
        assert not (tmp_path / "o").exists()

    def test_threads_invariant(self, terrain, tmp_path):
        cfg = sim_config(tmp_path, terrain)
        for t in ("1", "3"):
            assert cli.main(["simulate", str(cfg), "-o", str(tmp_path / t), "--threads", t]) == 0
        assert sha(tmp_path / "1" / "dataset.csv") == sha(tmp_path / "3" / "dataset.csv")


class TestTrainEval:
    def test_overfit_sanity(self, terrain, tmp_path):
        cfg = sim_config(tmp_path, terrain)
        cli.main(["simulate", str(cfg), "-o", str(tmp_path / "sim")])
        model_cfg = tmp_path / "m.json"
        model_cfg.write_text(json.dumps({"n_trees": 200, "learning_rate": 0.3, "max_depth": 8,
                                         "min_samples_leaf": 1}))
        data = tmp_path / "sim" / "dataset.csv"
        assert cli.main(["train", str(data), "--config", str(model_cfg), "-o", str(tmp_path / "tr")]) == 0
        assert cli.main(["eval", str(tmp_path / "tr" / "model.json"), str(data),
                         "-o", str(tmp_path / "ev")]) == 0
        report = json.loads((tmp_path / "ev" / "eval.json").read_text())
        assert report["mae_db"] <= 0.5 and report["n"] == 144

    def test_bad_model_config(self, terrain, tmp_path):
        cfg = sim_config(tmp_path, terrain)
        cli.main(["simulate", str(cfg), "-o", str(tmp_path / "sim")])
        bad = tmp_path / "m.json"
        bad.write_text('{"min_leaf": 3}')
        code, _, stderr = run("train", tmp_path / "sim" / "dataset.csv", "--config", bad,
                              "-o", tmp_path / "tr")
        assert code != 0 and "min_leaf" in json.loads(stderr)["message"]
        assert not (tmp_path / "tr").exists()

    def test_schema_violation(self, tmp_path):
        bad = tmp_path / "d.csv"
        bad.write_text("a,b\n1,2\n")
        code, _, stderr = run("train", bad, "-o", tmp_path / "tr")
        assert code != 0 and json.loads(stderr)["error"] == "SchemaError"


class TestFeaturesConvert:
    def test_features(self, terrain, tmp_path):
        pts = tmp_path / "pts.csv"
        pts.write_text("x,y\n100,100\n500,450\n")
        assert cli.main(["features", "--dsm", str(terrain / "dsm.asc"), "--dhm",
                         str(terrain / "dhm.asc"), "--points", str(pts), "--tx-x", "320",
                         "--tx-y", "320", "--tower-height", "30", "--freqs", "731.5,1932.5",
                         "--include-blockage", "-o", str(tmp_path / "f")]) == 0
        lines = (tmp_path / "f" / "features.csv").read_text().splitlines()
        assert len(lines) == 5 and lines[0].startswith("x,y,freq_mhz")

    def test_convert(self, tmp_path):
        inputs = tmp_path / "in"
        site = demo.build_site(inputs, demo.ENVIRONMENTS["A"], 5, **SMALL)
        sim = {"dsm": str(inputs / site["dsm"]), "dhm": str(inputs / site["dhm"]), "tx": site["tx"],
               "grid": site["grid"], "model": site["synthetic_model"]}
        (tmp_path / "sim.json").write_text(json.dumps(sim))
        assert cli.main(["simulate", str(tmp_path / "sim.json"), "-o", str(tmp_path / "s")]) == 0
        meas = inputs / site["measurements"]
        before = sha(meas)
        assert cli.main(["convert", "--measurements", str(meas), "--sim",
                         str(tmp_path / "s" / "sim_points.csv"), "--dsm", str(inputs / site["dsm"]),
                         "-o", str(tmp_path / "c")]) == 0
        assert sha(meas) == before
        offsets = json.loads((tmp_path / "c" / "offsets.json").read_text())
        assert len(offsets) == 3
        for o in offsets:
            assert abs(o["delta_db"] - 18.0) < 1.0

    def test_convert_needs_distance(self, tmp_path):
        code, _, stderr = run("convert", "--measurements", tmp_path / "m.csv", "--sim",
                              tmp_path / "s.csv", "-o", tmp_path / "c")
        assert code != 0


class TestExperiment:
    def test_demo_config_table(self, tmp_path):
        path = demo.table_config(tmp_path / "in", seed=5, model={"n_trees": 40}, **SMALL)
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert cli.main(["experiment", str(path), "-o", str(out1)]) == 0
        text = (out1 / "results.csv").read_text().splitlines()
        assert len(text) == 7
        assert cli.main(["experiment", str(path), "-o", str(out2), "--threads", "4"]) == 0
        assert sha(out1 / "results.csv") == sha(out2 / "results.csv")
        for m in (out1 / "models").iterdir():
            assert sha(m) == sha(out2 / "models" / m.name)
        man = json.loads((out1 / "manifest.json").read_text())
        assert man["effective_config"]["model"]["n_trees"] == 40
        assert any(i["path"].endswith("a_measurements.csv") for i in man["inputs"])

    def test_env_overrides(self, tmp_path):
        path = demo.table_config(tmp_path / "in", seed=5, model={"n_trees": 5}, **SMALL)
        out = tmp_path / "envout"
        code, _, err = run("experiment", path, env={"PATHLOSS_AUG_OUTPUT_DIR": str(out),
                                                    "PATHLOSS_AUG_THREADS": "2"})
        assert code == 0, err
        assert (out / "results.csv").exists()

    def test_invalid_config_no_output(self, tmp_path):
        path = demo.table_config(tmp_path / "in", seed=5, **SMALL)
        doc = json.loads(path.read_text())
        doc["test"] = [{"site": "nowhere"}]
        path.write_text(json.dumps(doc))
        code, _, stderr = run("experiment", path, "-o", tmp_path / "o")
        assert code != 0 and json.loads(stderr)["error"] == "ConfigError"
        assert not (tmp_path / "o").exists()
