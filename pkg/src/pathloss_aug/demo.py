"""Seeded two-environment demo: terrains, phone logs and experiment configs.

Environment "A" is flat farmland whose field truth follows SUI terrain C;
"B" is hilly and follows COST-231 (suburban). Field logs are RSRP values
``-(truth + noise) + offset`` at random points, so the whole
offset-estimation and conversion path is exercised.

The sweep environment "C" has SUI terrain A as field truth but is simulated
with free-space loss, i.e. its synthetic data is deliberately mismatched.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainWarning
from .measurements import LTE_BANDS, RsrpMeasurement, write_measurements
from .pipeline import subseed
from .propagation import LinkGeometry, model_pathloss
from .terrain import TerrainStack, TxSite, generate_synthetic_terrain, sample_many, write_ascii_grid

DEMO_FREQS = (731.5, 1932.5, 2538.2)


@dataclass(frozen=True)
class Environment:
    name: str
    relief: float
    clutter_density: float
    clutter_range: tuple[float, float]
    truth_model: str
    truth_params: dict
    synthetic_model: str
    synthetic_params: dict
    tower_height: float = 35.0
    offset_db: float = 18.0


ENVIRONMENTS = {
    "A": Environment("A", 2.0, 0.03, (3.0, 8.0), "sui", {"terrain": "C"}, "sui", {"terrain": "C"}),
    "B": Environment("B", 60.0, 0.15, (5.0, 15.0), "cost231", {"env": "suburban"},
                     "cost231", {"env": "suburban"}),
    "C": Environment("C", 25.0, 0.08, (4.0, 12.0), "sui", {"terrain": "A"}, "fspl", {}),
}


def freq_to_earfcn(freq: float) -> int | None:
    for _, f_low, n_offs, n_hi in LTE_BANDS:
        n = n_offs + int(round((freq - f_low) * 10))
        if n_offs <= n <= n_hi and abs(f_low + 0.1 * (n - n_offs) - freq) < 1e-6:
            return n
    return None


def synthesize_measurements(stack: TerrainStack, tx: TxSite, n: int, model: str, params: dict,
                            noise_sigma: float, offset_db: float, seed: int,
                            min_dist: float = 120.0, margin: float = 100.0,
                            rx_height: float = 1.5) -> list[RsrpMeasurement]:
    """Phone-log stand-in: ``rsrp = -(model + N(0, sigma)) + offset`` at random points."""
    rng = np.random.default_rng(seed)
    xmin, ymin, xmax, ymax = stack.dsm.bounds
    g_tx = float(sample_many(stack.ground, [tx.x], [tx.y])[0])
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DomainWarning)
        while len(out) < n:
            x = float(rng.uniform(xmin + margin, xmax - margin))
            y = float(rng.uniform(ymin + margin, ymax - margin))
            f = float(rng.choice(tx.freqs))
            noise = float(rng.normal(0.0, noise_sigma))
            d = math.hypot(x - tx.x, y - tx.y)
            if d < min_dist:
                continue
            g = float(sample_many(stack.ground, [x], [y])[0])
            geom = LinkGeometry(g_tx + tx.tower_height, g + rx_height, d, f)
            pl = model_pathloss(model, geom, rx_height=rx_height, **params) + noise
            earfcn = freq_to_earfcn(f)
            out.append(RsrpMeasurement(x, y, -pl + offset_db, f, f"{tx.site_id}-{earfcn or f}",
                                       tx.site_id, earfcn))
    return out


def build_site(out_dir: Path, env: Environment, seed: int, size: int = 257, cellsize: float = 8.0,
               n_measurements: int = 1500, noise_sigma: float = 2.0, spacing: float = 40.0,
               freqs=DEMO_FREQS) -> dict:
    """Write terrain and measurement files for one environment; return its site config."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stack = generate_synthetic_terrain(subseed(seed, "terrain", env.name), size, cellsize,
                                       env.relief, env.clutter_density, env.clutter_range,
                                       base_elevation=200.0)
    extent = size * cellsize
    tx = TxSite(extent / 2, extent / 2, env.tower_height, tuple(freqs), env.name)
    meas = synthesize_measurements(stack, tx, n_measurements, env.truth_model, env.truth_params,
                                   noise_sigma, env.offset_db, subseed(seed, "measurements", env.name))
    stem = env.name.lower()
    write_ascii_grid(out_dir / f"{stem}_dsm.asc", stack.dsm)
    write_ascii_grid(out_dir / f"{stem}_dhm.asc", stack.dhm)
    (out_dir / f"{stem}_measurements.csv").write_text(write_measurements(meas))
    m = 100.0
    return {
        "dsm": f"{stem}_dsm.asc",
        "dhm": f"{stem}_dhm.asc",
        "tx": tx.to_dict(),
        "grid": {"bounds": [m, m, extent - m, extent - m], "spacing": spacing},
        "synthetic_model": {"name": env.synthetic_model, "params": env.synthetic_params},
        "measurements": f"{stem}_measurements.csv",
        "offset_by": "cell",
        "match_max_dist": spacing,
    }


def table_config(out_dir: Path, seed: int = 2024, model: dict | None = None, **site_kw) -> Path:
    """Two-environment Table-1 style experiment: A(R), B(S), A(R)+B(S) on both test sets."""
    sites = {name: build_site(out_dir, ENVIRONMENTS[name], seed, **site_kw) for name in ("A", "B")}
    doc = {
        "seed": seed,
        "features": {"include_freq": True, "include_blockage": False, "radius": 50.0},
        "model": model or {},
        "sites": sites,
        "scenarios": [
            {"train": {"real": [{"site": "A", "fraction": 0.5}], "synthetic": ["B"]}},
            {"train": {"real": [{"site": "A", "fraction": 0.5}]}},
            {"train": {"synthetic": ["B"]}},
        ],
        "test": [{"site": "A", "kind": "real"}, {"site": "B", "kind": "real"}],
    }
    path = Path(out_dir) / "experiment.json"
    path.write_text(json.dumps(doc, indent=2) + "\n")
    return path


def sweep_config(out_dir: Path, seed: int = 2024, repeats=range(1, 21), model: dict | None = None,
                 real_fraction: float = 0.05, **site_kw) -> Path:
    """5% real data of a mismatched-simulation site, repeated k times, plus its synthetic data.

    Scenario 0 is the swept real+synthetic mix; scenario 1 is synthetic only.
    """
    site_kw = {"n_measurements": 20000, "spacing": 120.0, **site_kw}
    sites = {"C": build_site(out_dir, ENVIRONMENTS["C"], seed, **site_kw)}
    doc = {
        "seed": seed,
        "features": {"include_freq": True, "include_blockage": False, "radius": 50.0},
        "model": model or {},
        "sites": sites,
        "scenarios": [
            {"train": {"real": [{"site": "C", "fraction": real_fraction, "repeat": 1}],
                       "synthetic": ["C"]}},
            {"train": {"synthetic": ["C"]}},
        ],
        "test": [{"site": "C", "kind": "real"}],
        "sweep": {"scenario": 0, "repeats": [int(k) for k in repeats]},
    }
    path = Path(out_dir) / "sweep_experiment.json"
    path.write_text(json.dumps(doc, indent=2) + "\n")
    return path
