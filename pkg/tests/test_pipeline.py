import json

import numpy as np
import pytest

from pathloss_aug import demo
from pathloss_aug.errors import ConfigError
from pathloss_aug.features import FeatureVector
from pathloss_aug.pipeline import (ExperimentConfig, ResultTable, mix, repetition_sweep,
                                   run_experiment, run_scenario, split, subseed)
from pathloss_aug.simulate import DatasetRow

SMALL = dict(size=65, cellsize=8.0, n_measurements=300, spacing=40.0)
FAST_MODEL = {"n_trees": 40, "min_samples_leaf": 5}


def rows(n, site="A", source="real"):
    fv = FeatureVector(900.0, 100.0, 30.0, 0.0, 0.0, 30.0, 0.3)
    return [DatasetRow(fv, 100.0 + i, site, source) for i in range(n)]


class TestSplit:
    def test_partition(self):
        data = rows(1000)
        tr, te = split(data, 0.5, 1)
        assert len(tr) == 500 and len(te) == 500
        ids = lambda rs: {r.pathloss for r in rs}  # noqa: E731
        assert ids(tr).isdisjoint(ids(te)) and ids(tr) | ids(te) == ids(data)

    def test_five_percent(self):
        tr, te = split(rows(1000), 0.05, 1)
        assert len(tr) == 50 and len(te) == 950

    def test_deterministic(self):
        assert split(rows(100), 0.3, 9) == split(rows(100), 0.3, 9)
        assert split(rows(100), 0.3, 9) != split(rows(100), 0.3, 10)

    def test_per_site(self):
        data = rows(10, "A") + rows(30, "B")
        tr, te = split(data, 0.5, 0)
        assert sum(r.site == "A" for r in tr) == 5 and sum(r.site == "B" for r in tr) == 15

    def test_tiny_site_keeps_both_sides(self):
        tr, te = split(rows(3), 0.05, 0)
        assert len(tr) == 1 and len(te) == 2

    def test_bad_fraction(self):
        with pytest.raises(ValueError):
            split(rows(10), 1.0, 0)


class TestMix:
    def test_counts(self):
        assert len(mix(rows(50), rows(6000, source="synthetic"), 20)) == 7000

    def test_repeat_one_is_concatenation(self):
        real, syn = rows(3), rows(4, source="synthetic")
        assert mix(real, syn, 1) == syn + real

    def test_bad_repeat(self):
        with pytest.raises(ValueError):
            mix(rows(2), [], 0)


class TestSubseed:
    def test_independent_streams(self):
        assert subseed(1, "split", "A") != subseed(1, "split", "B")
        assert subseed(1, "split", "A") == subseed(1, "split", "A")


@pytest.fixture(scope="module")
def table_cfg(tmp_path_factory):
    d = tmp_path_factory.mktemp("exp")
    path = demo.table_config(d, seed=11, model=FAST_MODEL, **SMALL)
    return ExperimentConfig.from_file(path), path


class TestExperiment:
    def test_table_shape(self, table_cfg):
        cfg, _ = table_cfg
        table, sweep = run_experiment(cfg)
        assert sweep is None
        labels = [(r.train_label, r.test_label) for r in table.rows]
        assert labels == [("A (R) + B (S)", "A (R)"), ("A (R) + B (S)", "B (R)"),
                          ("A (R)", "A (R)"), ("A (R)", "B (R)"),
                          ("B (S)", "A (R)"), ("B (S)", "B (R)")]
        assert all(np.isfinite(r.mae) for r in table.rows)
        assert ResultTable.from_csv(table.to_csv()).to_csv() == table.to_csv()

    def test_baseline_row_shape(self, table_cfg):
        cfg, _ = table_cfg
        res = run_scenario(cfg, 1)
        assert [r.test_label for r in res.rows] == ["A (R)", "B (R)"]
        assert res.rows[0].train_label == "A (R)"

    def test_deterministic(self, table_cfg):
        cfg, path = table_cfg
        a = run_scenario(cfg, 0).to_csv()
        b = run_scenario(ExperimentConfig.from_file(path), 0, threads=3).to_csv()
        assert a == b

    def test_sweep_rows(self, table_cfg):
        cfg, _ = table_cfg
        reps = list(range(1, 21))
        res = repetition_sweep(cfg, reps)
        assert [r.repeat for r in res.rows[::2]] == reps
        assert len(res.rows) == 40  # two test sets per repeat
        assert res.rows[2].n_train - res.rows[0].n_train == res.rows[4].n_train - res.rows[2].n_train

    def test_overfit_sanity(self, tmp_path):
        demo.table_config(tmp_path, seed=3, **SMALL)
        doc = json.loads((tmp_path / "experiment.json").read_text())
        doc["sites"]["B"]["grid"] = {"bounds": [100, 100, 420, 420], "n_points": 67, "seed": 1}
        doc["model"] = {"n_trees": 300, "learning_rate": 0.3, "max_depth": 8, "min_samples_leaf": 1}
        doc["scenarios"] = [{"train": {"synthetic": ["B"]}}]
        doc["test"] = [{"site": "B", "kind": "synthetic"}]
        table, _ = run_experiment(ExperimentConfig(doc, tmp_path))
        assert table.rows[0].n_train == 201
        assert table.rows[0].mae <= 0.5

    def test_writes_outputs(self, table_cfg, tmp_path):
        cfg, _ = table_cfg
        run_experiment(cfg, tmp_path)
        assert (tmp_path / "results.csv").read_text().startswith("train_label,test_label,mae_db")
        assert len(list((tmp_path / "models").glob("*.json"))) == 3


class TestConfigValidation:
    def base(self, tmp_path):
        demo.table_config(tmp_path, seed=1, **SMALL)
        return json.loads((tmp_path / "experiment.json").read_text())

    @pytest.mark.parametrize("mutate,msg", [
        (lambda d: d.pop("sites"), "sites"),
        (lambda d: d["sites"]["A"].update(dsm="nope.asc"), "not found"),
        (lambda d: d["test"].append({"site": "Z"}), "not defined"),
        (lambda d: d["sites"]["A"]["synthetic_model"].update(name="ehata"), "unknown synthetic model"),
        (lambda d: d["model"].update(depth=3), "unknown model config"),
        (lambda d: d["scenarios"].append({"train": {"real": [{"site": "A", "fraction": 0.2}]}}),
         "different real fractions"),
        (lambda d: d.update(sweep={"repeats": [0]}), "repeats"),
    ])
    def test_rejects(self, tmp_path, mutate, msg):
        doc = self.base(tmp_path)
        mutate(doc)
        with pytest.raises(ConfigError, match=msg):
            ExperimentConfig(doc, tmp_path)

    def test_effective_has_model_defaults(self, tmp_path):
        cfg = ExperimentConfig(self.base(tmp_path), tmp_path)
        eff = cfg.effective()
        assert eff["model"]["n_trees"] == 500 and "seed" in eff["model"]
