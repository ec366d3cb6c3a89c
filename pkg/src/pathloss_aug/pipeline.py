"""Dataset assembly and cross-environment augmentation experiments.

An experiment is described by a JSON document::

    {
      "seed": 7,
      "features": {"include_freq": true, "include_blockage": false, "radius": 50},
      "model": {"n_trees": 500, "learning_rate": 0.1, "max_depth": 6, "min_samples_leaf": 20},
      "sites": {
        "A": {"dsm": "a_dsm.asc", "dhm": "a_dhm.asc",
              "tx": {"x": 1028, "y": 1028, "tower_height": 35, "freqs": [731.5, 1932.5]},
              "grid": {"bounds": [100, 100, 1956, 1956], "spacing": 40},
              "synthetic_model": {"name": "sui", "params": {"terrain": "C"}},
              "measurements": "a_meas.csv"}
      },
      "scenarios": [
        {"train": {"real": [{"site": "A", "fraction": 0.5, "repeat": 1}], "synthetic": ["B"]}}
      ],
      "test": [{"site": "A", "kind": "real"}, {"site": "B", "kind": "real"}],
      "sweep": {"scenario": 0, "repeats": [1, 2, 4, 8]}
    }

Relative paths resolve against the config file's directory. A single
``"train"`` block may be given instead of ``"scenarios"``.

Real rows of each site are split once per experiment, so every scenario is
scored on the same holdout. Repetition is literal row duplication, which for
a tree ensemble fit by least squares is the same as an integer sample weight.
"""
from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import logging
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import gbm
from .errors import ConfigError
from .features import batch_features, feature_matrix, feature_names
from .measurements import (estimate_offsets, match_to_simulation, offset_for,
                           read_measurements, rsrp_to_pathloss)
from .propagation import available_models
from .simulate import DatasetRow, GridSpec, generate_grid, sim_points, simulate_site
from .terrain import TerrainStack, TxSite, read_ascii_grid

log = logging.getLogger(__name__)

RESULT_HEADER = ["train_label", "test_label", "mae_db", "n_train", "n_test", "config_digest"]


def subseed(seed: int, purpose: str, key: str = "") -> int:
    """Independent per-purpose seed derived from the experiment seed."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, zlib.crc32(purpose.encode()),
                                 zlib.crc32(key.encode())])
    return int(ss.generate_state(1)[0])


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def digest(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:12]


# ---------------------------------------------------------------- split / mix

def split(rows, fraction: float, seed: int):
    """Seeded random train/test partition, done independently per site.

    Each site keeps ``round(fraction * n)`` rows for training (at least one
    row on each side). Original row order is preserved within each part.
    """
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    if not rows:
        raise ValueError("cannot split an empty row list")
    by_site: dict[str, list[int]] = {}
    for i, r in enumerate(rows):
        by_site.setdefault(r.site, []).append(i)
    train_idx, test_idx = [], []
    for site in sorted(by_site):
        idx = np.array(by_site[site])
        n = len(idx)
        if n < 2:
            raise ValueError(f"site {site!r} has {n} row(s); at least 2 are needed to split")
        rng = np.random.default_rng(subseed(seed, "split", site))
        perm = rng.permutation(n)
        k = min(max(int(math.floor(fraction * n + 0.5)), 1), n - 1)
        train_idx.extend(idx[np.sort(perm[:k])].tolist())
        test_idx.extend(idx[np.sort(perm[k:])].tolist())
    train_idx.sort()
    test_idx.sort()
    return [rows[i] for i in train_idx], [rows[i] for i in test_idx]


def mix(real_train, synthetic, repeat: int = 1):
    """Synthetic rows followed by ``repeat`` copies of the real training rows."""
    if repeat < 1:
        raise ValueError("repeat must be >= 1")
    if not real_train and not synthetic:
        raise ValueError("nothing to mix: both inputs are empty")
    return list(synthetic) + list(real_train) * int(repeat)


def to_xy(rows, names):
    return feature_matrix([r.features for r in rows], names), np.array([r.pathloss for r in rows])


# ---------------------------------------------------------------- results

@dataclass
class ResultRow:
    train_label: str
    test_label: str
    mae: float
    n_train: int
    n_test: int
    config_digest: str
    repeat: int | None = None


@dataclass
class ResultTable:
    rows: list[ResultRow] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RESULT_HEADER)
        for r in self.rows:
            w.writerow([r.train_label, r.test_label, f"{r.mae:.6f}", r.n_train, r.n_test,
                        r.config_digest])
        return buf.getvalue()

    def sweep_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["repeat", "test_label", "mae_db"])
        for r in self.rows:
            w.writerow([r.repeat, r.test_label, f"{r.mae:.6f}"])
        return buf.getvalue()

    def render(self) -> str:
        head = ["Training data", "Test", "MAE [dB]", "n_train", "n_test"]
        body = [[r.train_label, r.test_label, f"{r.mae:.2f}", str(r.n_train), str(r.n_test)]
                for r in self.rows]
        widths = [max(len(x) for x in col) for col in zip(head, *body)]
        line = lambda cells: "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()  # noqa: E731
        out = [line(head), line(["-" * w for w in widths])]
        out += [line(b) for b in body]
        return "\n".join(out) + "\n"

    def mae(self, train_label: str, test_label: str) -> float:
        for r in self.rows:
            if r.train_label == train_label and r.test_label == test_label:
                return r.mae
        raise KeyError((train_label, test_label))

    @classmethod
    def from_csv(cls, text: str) -> "ResultTable":
        reader = csv.reader(io.StringIO(text))
        if next(reader, None) != RESULT_HEADER:
            raise ConfigError("not a result table CSV")
        return cls([ResultRow(a, b, float(c), int(d), int(e), f) for a, b, c, d, e, f in reader])


# ---------------------------------------------------------------- config

@dataclass
class SiteConfig:
    name: str
    dsm: Path
    dhm: Path
    tx: TxSite
    grid: GridSpec
    model: str
    model_params: dict
    measurements: Path | None
    offset_by: str
    match_max_dist: float | None


def _path(base: Path, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else base / p


class ExperimentConfig:
    """Validated experiment description; see the module docstring for the layout."""

    def __init__(self, doc: dict, base_dir: str | Path = "."):
        self.raw = copy.deepcopy(doc)
        base = Path(base_dir)
        if not isinstance(doc, dict):
            raise ConfigError("experiment config must be a JSON object")
        self.seed = int(doc.get("seed", 0))
        feats = dict(doc.get("features", {}))
        unknown = set(feats) - {"include_freq", "include_blockage", "radius", "rx_height"}
        if unknown:
            raise ConfigError(f"unknown features keys {sorted(unknown)}")
        self.include_freq = bool(feats.get("include_freq", True))
        self.include_blockage = bool(feats.get("include_blockage", False))
        self.radius = float(feats.get("radius", 50.0))
        self.rx_height = float(feats.get("rx_height", 1.5))
        self.feature_names = feature_names(self.include_freq, self.include_blockage)

        model = dict(doc.get("model", {}))
        model.setdefault("seed", subseed(self.seed, "model"))
        model["feature_names"] = self.feature_names
        try:
            self.train_config = gbm.TrainConfig.from_dict(model)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"model: {exc}") from None

        sites = doc.get("sites")
        if not isinstance(sites, dict) or not sites:
            raise ConfigError("config needs a non-empty 'sites' object")
        self.sites: dict[str, SiteConfig] = {}
        for name, s in sites.items():
            self.sites[name] = self._site(name, s, base)

        if "scenarios" in doc:
            scenarios = doc["scenarios"]
        elif "train" in doc:
            scenarios = [{"train": doc["train"]}]
        else:
            raise ConfigError("config needs 'scenarios' or 'train'")
        self.scenarios = [self._scenario(s, i) for i, s in enumerate(scenarios)]
        self.tests = []
        for t in doc.get("test", []):
            site, kind = t.get("site"), t.get("kind", "real")
            self._check_site(site, "test")
            if kind not in ("real", "synthetic"):
                raise ConfigError(f"test kind must be 'real' or 'synthetic', got {kind!r}")
            if kind == "real" and self.sites[site].measurements is None:
                raise ConfigError(f"test on real data of {site!r} but the site has no measurements")
            self.tests.append({"site": site, "kind": kind})
        if not self.tests:
            raise ConfigError("config needs at least one test entry")

        self.split_fraction: dict[str, float] = {}
        for sc in self.scenarios:
            for e in sc["real"]:
                prev = self.split_fraction.setdefault(e["site"], e["fraction"])
                if prev != e["fraction"]:
                    raise ConfigError(f"site {e['site']!r} used with different real fractions "
                                      f"({prev} and {e['fraction']})")
        self.sweep = doc.get("sweep")
        if self.sweep is not None:
            reps = self.sweep.get("repeats")
            if not reps or any(int(r) < 1 for r in reps):
                raise ConfigError("sweep.repeats must be a non-empty list of integers >= 1")
            idx = int(self.sweep.get("scenario", 0))
            if not 0 <= idx < len(self.scenarios):
                raise ConfigError(f"sweep.scenario {idx} out of range")
            if not self.scenarios[idx]["real"]:
                raise ConfigError("the swept scenario has no real training data to repeat")

    def _check_site(self, site, where):
        if site not in self.sites:
            raise ConfigError(f"{where}: site {site!r} is not defined")

    def _site(self, name, s, base) -> SiteConfig:
        try:
            tx = dict(s["tx"])
            tx.setdefault("site_id", name)
            txs = TxSite.from_dict(tx)
            grid = GridSpec.from_dict(s["grid"])
            sm = s.get("synthetic_model", {"name": "fspl"})
            model = sm["name"] if isinstance(sm, dict) else str(sm)
            params = dict(sm.get("params", {})) if isinstance(sm, dict) else {}
            dsm, dhm = _path(base, s["dsm"]), _path(base, s["dhm"])
            meas = _path(base, s["measurements"]) if s.get("measurements") else None
        except KeyError as exc:
            raise ConfigError(f"site {name!r}: missing key {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"site {name!r}: {exc}") from None
        if model not in available_models():
            raise ConfigError(f"site {name!r}: unknown synthetic model {model!r}")
        for p in [dsm, dhm] + ([meas] if meas else []):
            if not p.is_file():
                raise ConfigError(f"site {name!r}: file not found: {p}")
        offset_by = s.get("offset_by", "cell")
        if offset_by not in ("cell", "site"):
            raise ConfigError(f"site {name!r}: offset_by must be 'cell' or 'site'")
        mmd = s.get("match_max_dist")
        return SiteConfig(name, dsm, dhm, txs, grid, model, params, meas, offset_by,
                          None if mmd is None else float(mmd))

    def _scenario(self, s, i) -> dict:
        train = s.get("train", s)
        real = []
        for e in train.get("real", []):
            site = e.get("site")
            self._check_site(site, f"scenario {i}")
            frac = float(e.get("fraction", 0.5))
            rep = int(e.get("repeat", 1))
            if not 0 < frac <= 1:
                raise ConfigError(f"scenario {i}: fraction must lie in (0, 1], got {frac}")
            if rep < 1:
                raise ConfigError(f"scenario {i}: repeat must be >= 1")
            if self.sites[site].measurements is None:
                raise ConfigError(f"scenario {i}: site {site!r} has no measurements")
            real.append({"site": site, "fraction": frac, "repeat": rep})
        synthetic = list(train.get("synthetic", []))
        for site in synthetic:
            self._check_site(site, f"scenario {i}")
        if not real and not synthetic:
            raise ConfigError(f"scenario {i}: empty training set")
        return {"label": s.get("label"), "real": real, "synthetic": synthetic}

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
        return cls(doc, path.parent)

    def effective(self) -> dict:
        doc = copy.deepcopy(self.raw)
        doc["model"] = self.train_config.to_dict()
        return doc

    def input_files(self) -> list[Path]:
        out = []
        for s in self.sites.values():
            out += [s.dsm, s.dhm] + ([s.measurements] if s.measurements else [])
        return out


def scenario_label(scenario: dict) -> str:
    if scenario.get("label"):
        return scenario["label"]
    parts = [f"{e['site']} (R)" + (f" x{e['repeat']}" if e["repeat"] > 1 else "")
             for e in scenario["real"]]
    parts += [f"{s} (S)" for s in scenario["synthetic"]]
    return " + ".join(parts)


# ---------------------------------------------------------------- experiment

@dataclass
class SiteData:
    stack: TerrainStack
    synthetic: list
    real: list
    offsets: dict
    dropped_matches: int = 0


class Experiment:
    """Resolves sites lazily (simulate, convert measurements) and runs scenarios."""

    def __init__(self, config: ExperimentConfig, threads: int = 1):
        self.config = config
        self.threads = threads
        self._sites: dict[str, SiteData] = {}
        self._splits: dict[str, tuple[list, list]] = {}

    def site(self, name: str) -> SiteData:
        if name in self._sites:
            return self._sites[name]
        cfg = self.config
        sc = cfg.sites[name]
        stack = TerrainStack.from_rasters(read_ascii_grid(sc.dsm), read_ascii_grid(sc.dhm))
        points = generate_grid(sc.grid, stack)
        synthetic = simulate_site(stack, sc.tx, points, sc.tx.freqs, sc.model, sc.model_params,
                                  cfg.radius, cfg.include_blockage, cfg.rx_height,
                                  threads=self.threads)
        real, offsets, dropped = [], {}, 0
        if sc.measurements is not None:
            meas = read_measurements(sc.measurements.read_text())
            meas = [m if m.site_id else _with_site(m, name) for m in meas]
            meas = [m for m in meas if m.site_id == name]
            if not meas:
                raise ConfigError(f"site {name!r}: no measurements for this site")
            max_dist = sc.match_max_dist or 2 * stack.dsm.cellsize
            match = match_to_simulation(meas, sim_points(synthetic), max_dist)
            dropped = match.dropped
            offsets = estimate_offsets(match, sc.offset_by)
            usable = []
            pl = []
            for m in meas:
                try:
                    off = offset_for(m, offsets)
                except KeyError:
                    continue
                usable.append(m)
                pl.append(rsrp_to_pathloss(m, off))
            fvs = batch_features(stack, sc.tx, [(m.x, m.y) for m in usable],
                                 [m.freq for m in usable], cfg.radius, cfg.include_blockage,
                                 cfg.rx_height, per_point_freqs=True)
            real = [DatasetRow(fv, p, name, "real", m.x, m.y) for fv, p, m in zip(fvs, pl, usable)]
            log.info("site %s: %d real rows, %d unmatched measurements, %d offsets",
                     name, len(real), dropped, len(offsets))
        data = SiteData(stack, synthetic, real, offsets, dropped)
        self._sites[name] = data
        return data

    def real_split(self, name: str):
        if name not in self._splits:
            rows = self.site(name).real
            frac = self.config.split_fraction.get(name, 0.5)
            if frac >= 1:
                self._splits[name] = (list(rows), [])
            else:
                self._splits[name] = split(rows, frac, self.config.seed)
        return self._splits[name]

    def test_rows(self, test: dict):
        if test["kind"] == "synthetic":
            return self.site(test["site"]).synthetic
        rows = self.real_split(test["site"])[1]
        if not rows:
            raise ConfigError(f"site {test['site']!r} has no real holdout (fraction 1)")
        return rows

    def training_rows(self, scenario: dict):
        synthetic = [r for s in scenario["synthetic"] for r in self.site(s).synthetic]
        out = synthetic
        for e in scenario["real"]:
            out = mix(self.real_split(e["site"])[0], out, e["repeat"])
        return out

    def run_scenario(self, scenario: dict, out_dir: Path | None = None, tag: str = "",
                     repeat: int | None = None) -> list[ResultRow]:
        cfg = self.config
        rows = self.training_rows(scenario)
        if not rows:
            raise ConfigError("empty training set")
        X, y = to_xy(rows, cfg.feature_names)
        model = gbm.fit(X, y, cfg.train_config, threads=self.threads)
        label = scenario_label(scenario)
        dig = digest({"config": cfg.effective(), "scenario": scenario})
        results = []
        for t in cfg.tests:
            test = self.test_rows(t)
            Xt, yt = to_xy(test, cfg.feature_names)
            err = gbm.mae(model.predict_matrix(Xt), yt)
            tl = f"{t['site']} ({'R' if t['kind'] == 'real' else 'S'})"
            results.append(ResultRow(label, tl, err, len(rows), len(test), dig, repeat))
        if out_dir is not None:
            mdir = Path(out_dir) / "models"
            mdir.mkdir(parents=True, exist_ok=True)
            (mdir / f"{tag}{_slug(label)}.json").write_text(gbm.save_model(model))
        return results

    def run(self, out_dir: Path | None = None) -> ResultTable:
        table = ResultTable()
        for i, sc in enumerate(self.config.scenarios):
            table.rows += self.run_scenario(sc, out_dir, tag=f"{i:02d}_")
        return table

    def repetition_sweep(self, repeats, scenario_index: int = 0,
                         out_dir: Path | None = None) -> ResultTable:
        if not repeats:
            raise ValueError("repeats must be non-empty")
        base = self.config.scenarios[scenario_index]
        table = ResultTable()
        for k in repeats:
            k = int(k)
            sc = copy.deepcopy(base)
            for e in sc["real"]:
                e["repeat"] = k
            table.rows += self.run_scenario(sc, out_dir, tag=f"sweep_{k:03d}_", repeat=k)
        return table


def _with_site(m, name):
    from dataclasses import replace
    return replace(m, site_id=name)


def _slug(label: str) -> str:
    s = "".join(c if c.isalnum() else "_" for c in label)
    return "_".join(p for p in s.split("_") if p) or "model"


def run_scenario(config: ExperimentConfig, scenario: int | dict = 0, threads: int = 1,
                 out_dir: Path | None = None) -> ResultTable:
    """Fit one training scenario and score it on every configured test set."""
    exp = Experiment(config, threads)
    sc = config.scenarios[scenario] if isinstance(scenario, int) else scenario
    return ResultTable(exp.run_scenario(sc, out_dir))


def repetition_sweep(config: ExperimentConfig, repeats, threads: int = 1,
                     out_dir: Path | None = None) -> ResultTable:
    """Rerun the sweep scenario once per repeat count, everything else fixed."""
    idx = int((config.sweep or {}).get("scenario", 0))
    return Experiment(config, threads).repetition_sweep(repeats, idx, out_dir)


def run_experiment(config: ExperimentConfig, out_dir: Path | None = None, threads: int = 1):
    """All scenarios, plus the repetition sweep when configured.

    Writes ``results.csv``, ``results.txt``, ``models/`` and, for sweeps,
    ``sweep.csv`` under ``out_dir``. Returns ``(table, sweep_table_or_None)``.
    """
    exp = Experiment(config, threads)
    table = exp.run(out_dir)
    sweep = None
    if config.sweep is not None:
        sweep = exp.repetition_sweep(config.sweep["repeats"], int(config.sweep.get("scenario", 0)),
                                     out_dir)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "results.csv").write_text(table.to_csv())
        (out / "results.txt").write_text(table.render())
        if sweep is not None:
            (out / "sweep_results.csv").write_text(sweep.to_csv())
            (out / "sweep.csv").write_text(sweep.sweep_csv())
    return table, sweep
