"""Command-line entry point: ``pathloss-aug <subcommand> ...``.

Every command computes its outputs in memory (or in a staging directory)
and only then writes them, together with a ``manifest.json`` recording
inputs, digests, the effective configuration and a timestamp. Failures
print one JSON line to stderr and exit with status 2.

Environment overrides: ``PATHLOSS_AUG_OUTPUT_DIR`` (default output
directory) and ``PATHLOSS_AUG_THREADS`` (thread cap).
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import logging
import os
import shutil
import sys
import tempfile
import warnings
from pathlib import Path

import numpy as np

from . import __version__, _core, gbm
from .errors import ConfigError, DomainWarning, OutOfBoundsError, PathlossAugError, SchemaError
from .features import batch_features, feature_names
from .measurements import (estimate_offsets, match_to_simulation, offset_for, offsets_json,
                           read_measurements, rsrp_to_pathloss)
from .pipeline import ExperimentConfig, run_experiment, to_xy
from .simulate import (GridSpec, coverage_raster, generate_grid, read_dataset, read_sim_points,
                       simulate_site, write_dataset, write_sim_points)
from .terrain import (TerrainStack, TxSite, generate_synthetic_terrain, read_ascii_grid,
                      save_ascii_grid)

log = logging.getLogger("pathloss_aug")

FEATURE_COLUMNS = ["x", "y", "freq_mhz", "d_bs_m", "h_bs_m", "h_c_m", "roughness_m", "txhaat_m",
                   "alpha", "blockage_m"]


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _read(path) -> str:
    p = Path(path)
    if not p.exists() or p.is_dir():
        raise FileNotFoundError(f"input file not found: {p}")
    return p.read_text()


def _load_json(path) -> dict:
    try:
        return json.loads(_read(path))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: "
                          f"{exc.msg}") from None


class Outputs:
    """Collects output files and writes them, plus a manifest, in one go."""

    def __init__(self, out_dir: Path, command: str):
        self.out_dir = Path(out_dir)
        self.command = command
        self.files: dict[str, str] = {}
        self.inputs: list[Path] = []
        self.config: dict = {}
        # inputs under this directory are recorded relative to out_dir
        self.base: Path | None = None

    def _input_path(self, p: Path) -> str:
        if self.base is not None and p.resolve().is_relative_to(self.base.resolve()):
            return os.path.relpath(p.resolve(), self.out_dir.resolve())
        return str(p)

    def add(self, name: str, text: str):
        self.files[name] = text

    def commit(self, staged: Path | None = None):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        written = []
        if staged is not None:
            for p in sorted(staged.rglob("*")):
                if p.is_file():
                    rel = p.relative_to(staged)
                    dest = self.out_dir / rel
                    dest.parent.mkdir(parents=True, exist_ok=True)
                    shutil.copyfile(p, dest)
                    written.append(str(rel))
        for name, text in self.files.items():
            (self.out_dir / name).write_text(text)
            written.append(name)
        manifest = {
            "command": self.command,
            "package_version": __version__,
            "kernel_backend": _core.BACKEND,
            "effective_config": self.config,
            "inputs": [{"path": self._input_path(p), "sha256": _sha256(p)} for p in self.inputs],
            "outputs": [{"path": n, "sha256": _sha256(self.out_dir / n)} for n in sorted(written)],
            "created_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        }
        (self.out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _stack(dsm, dhm) -> TerrainStack:
    return TerrainStack.from_rasters(read_ascii_grid(_path_ok(dsm)), read_ascii_grid(_path_ok(dhm)))


def _path_ok(p) -> Path:
    p = Path(p)
    if not p.exists() or p.is_dir():
        raise FileNotFoundError(f"input file not found: {p}")
    return p


def _check_tx(stack: TerrainStack, tx: TxSite):
    if not stack.contains(tx.x, tx.y):
        raise OutOfBoundsError(f"transmitter {tx.site_id!r} at ({tx.x}, {tx.y}) outside raster "
                               f"bounds {stack.dsm.bounds}")


# ---------------------------------------------------------------- commands

def cmd_terrain_gen(args, out: Outputs):
    stack = generate_synthetic_terrain(args.seed, args.size, args.cellsize, args.relief,
                                       args.clutter_density, (args.clutter_min, args.clutter_max),
                                       base_elevation=args.base_elevation)
    out.config = {k: getattr(args, k) for k in ("seed", "size", "cellsize", "relief",
                                                "clutter_density", "clutter_min", "clutter_max",
                                                "base_elevation")}
    out.add(f"{args.prefix}dsm.asc", save_ascii_grid(stack.dsm))
    out.add(f"{args.prefix}dhm.asc", save_ascii_grid(stack.dhm))


def cmd_simulate(args, out: Outputs):
    cfg = _load_json(args.config)
    base = Path(args.config).parent
    out.inputs.append(Path(args.config))
    if args.model:
        cfg["model"] = {"name": args.model, "params": cfg.get("model", {}).get("params", {})}
    grid = dict(cfg.get("grid", {}))
    if args.seed is not None:
        grid["seed"] = args.seed
    if args.spacing is not None:
        grid.pop("n_points", None)
        grid["spacing"] = args.spacing
    if args.n_points is not None:
        grid.pop("spacing", None)
        grid["n_points"] = args.n_points
    cfg["grid"] = grid
    try:
        dsm, dhm = base / cfg["dsm"], base / cfg["dhm"]
        tx = TxSite.from_dict(cfg["tx"])
        spec = GridSpec.from_dict(grid)
    except KeyError as exc:
        raise ConfigError(f"simulate config missing key {exc.args[0]!r}") from None
    model = cfg.get("model", {"name": "fspl"})
    out.config = cfg
    out.inputs += [dsm, dhm]
    stack = _stack(dsm, dhm)
    _check_tx(stack, tx)
    freqs = cfg.get("freqs") or list(tx.freqs)
    points = generate_grid(spec, stack)
    rows = simulate_site(stack, tx, points, freqs, model["name"], model.get("params", {}),
                         float(cfg.get("radius", 50.0)), bool(cfg.get("include_blockage", False)),
                         float(cfg.get("rx_height", 1.5)), threads=args.threads)
    out.add("dataset.csv", write_dataset(rows))
    out.add("sim_points.csv", write_sim_points(rows))
    if spec.spacing is not None and args.coverage:
        for f in freqs:
            out.add(f"coverage_{f:g}MHz.asc", save_ascii_grid(coverage_raster(rows, spec, f)))
    log.info("simulated %d rows (%d dropped)", len(rows), rows.dropped)


def _read_points(text: str) -> np.ndarray:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or header[:2] != ["x", "y"]:
        raise SchemaError("points CSV must start with header x,y")
    pts = []
    for lineno, rec in enumerate(reader, start=2):
        if not rec:
            continue
        try:
            pts.append((float(rec[0]), float(rec[1])))
        except (ValueError, IndexError):
            raise SchemaError(f"line {lineno}: expected numeric x,y") from None
    if not pts:
        raise SchemaError("points CSV has no rows")
    return np.array(pts)


def cmd_features(args, out: Outputs):
    stack = _stack(args.dsm, args.dhm)
    tx = TxSite(args.tx_x, args.tx_y, args.tower_height, tuple(args.freqs), args.site)
    _check_tx(stack, tx)
    pts = _read_points(_read(args.points))
    out.inputs += [Path(args.dsm), Path(args.dhm), Path(args.points)]
    out.config = {"tx": tx.to_dict(), "radius": args.radius,
                  "include_blockage": args.include_blockage, "rx_height": args.rx_height}
    fvs = batch_features(stack, tx, pts, tx.freqs, args.radius, args.include_blockage,
                         args.rx_height)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FEATURE_COLUMNS)
    nf = len(tx.freqs)
    for k, fv in enumerate(fvs):
        x, y = pts[k // nf]
        vals = [fv.freq, fv.d_bs, fv.h_bs, fv.h_c, fv.roughness, fv.tx_haat, fv.alpha]
        w.writerow([repr(float(x)), repr(float(y))] + [repr(float(v)) for v in vals]
                   + ["" if fv.blockage is None else repr(fv.blockage)])
    out.add("features.csv", buf.getvalue())


def cmd_convert(args, out: Outputs):
    meas = read_measurements(_read(args.measurements))
    sims = read_sim_points(_read(args.sim))
    out.inputs += [Path(args.measurements), Path(args.sim)]
    if args.max_dist is not None:
        max_dist = args.max_dist
    elif args.dsm is not None:
        max_dist = 2 * read_ascii_grid(_path_ok(args.dsm)).cellsize
        out.inputs.append(Path(args.dsm))
    else:
        raise ConfigError("convert needs --max-dist or --dsm (default is 2 x cellsize)")
    out.config = {"max_dist": max_dist, "per": args.per}
    match = match_to_simulation(meas, sims, max_dist)
    offsets = estimate_offsets(match, args.per)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "freq_mhz", "cell_id", "site_id", "rsrp_dbm", "pathloss_db"])
    for m in meas:
        try:
            off = offset_for(m, offsets)
        except KeyError:
            continue
        w.writerow([repr(m.x), repr(m.y), repr(m.freq), m.cell_id, m.site_id, repr(m.rsrp),
                    repr(rsrp_to_pathloss(m, off))])
    out.add("pathloss.csv", buf.getvalue())
    out.add("offsets.json", offsets_json(offsets.values()))
    log.info("matched %d measurements, dropped %d", len(match.pairs), match.dropped)


def _names_from_args(args) -> list[str]:
    if args.features:
        return [s.strip() for s in args.features.split(",") if s.strip()]
    return feature_names(not args.no_freq, args.include_blockage)


def cmd_train(args, out: Outputs):
    rows = []
    for p in args.data:
        rows += read_dataset(_read(p))
        out.inputs.append(Path(p))
    conf = _load_json(args.config) if args.config else {}
    if args.config:
        out.inputs.append(Path(args.config))
    if args.seed is not None:
        conf["seed"] = args.seed
    names = _names_from_args(args)
    conf["feature_names"] = names
    try:
        tc = gbm.TrainConfig.from_dict(conf)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"model config: {exc}") from None
    out.config = tc.to_dict()
    X, y = to_xy(rows, names)
    model = gbm.fit(X, y, tc, threads=args.threads)
    out.add(args.name, gbm.save_model(model))


def cmd_eval(args, out: Outputs):
    model = gbm.load_model(_read(args.model))
    rows = read_dataset(_read(args.data))
    out.inputs += [Path(args.model), Path(args.data)]
    X, y = to_xy(rows, list(model.feature_names))
    err = gbm.mae(model.predict_matrix(X), y)
    report = {"mae_db": err, "n": len(rows), "feature_names": list(model.feature_names)}
    out.config = {"model": args.model, "data": args.data}
    out.add("eval.json", json.dumps(report, indent=2) + "\n")
    print(f"MAE {err:.4f} dB over {len(rows)} rows")


def _experiment(config_path: Path, out: Outputs, threads: int, seed=None, sweep_only=False):
    doc = _load_json(config_path)
    if seed is not None:
        doc["seed"] = seed
    cfg = ExperimentConfig(doc, Path(config_path).parent)
    out.inputs += [Path(config_path)] + cfg.input_files()
    out.config = cfg.effective()
    with tempfile.TemporaryDirectory(prefix=".staging-", dir=out.out_dir.parent
                                     if out.out_dir.parent.exists() else None) as tmp:
        table, sweep = run_experiment(cfg, Path(tmp), threads)
        out.commit(Path(tmp))
    print(table.render(), end="")
    if sweep is not None:
        print()
        print(sweep.render(), end="")


def cmd_experiment(args, out: Outputs):
    _experiment(Path(args.config), out, args.threads, args.seed)
    return "committed"


def cmd_demo(args, out: Outputs):
    from . import demo

    # nothing user-supplied to validate; the generated inputs live next to the results
    model = _load_json(args.model_config) if args.model_config else None
    inputs = out.out_dir / "inputs"
    out.base = out.out_dir
    path = demo.table_config(inputs, seed=args.seed, model=model)
    if args.sweep:
        demo.sweep_config(inputs, seed=args.seed, model=model)
    _experiment(path, out, args.threads)
    if args.sweep:
        print()
        sweep_out = Outputs(out.out_dir / "sweep", "demo-sweep")
        sweep_out.base = out.out_dir
        _experiment(inputs / "sweep_experiment.json", sweep_out, args.threads)
    return "committed"


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    env_out = os.environ.get("PATHLOSS_AUG_OUTPUT_DIR")
    env_threads = int(os.environ.get("PATHLOSS_AUG_THREADS", "1") or 1)
    p = argparse.ArgumentParser(prog="pathloss-aug",
                                description="Pathloss prediction from terrain features, empirical models and boosted trees")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("-o", "--out", default=env_out or f"out-{name}",
                        help="output directory (env PATHLOSS_AUG_OUTPUT_DIR)")
        sp.add_argument("--threads", type=int, default=env_threads,
                        help="thread cap; never changes results (env PATHLOSS_AUG_THREADS)")
        sp.set_defaults(func=fn)
        return sp

    sp = add("terrain-gen", cmd_terrain_gen, "generate a synthetic DSM/DHM pair")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--size", type=int, default=257, help="cells per side, 2**k + 1")
    sp.add_argument("--cellsize", type=float, default=5.0)
    sp.add_argument("--relief", type=float, default=30.0)
    sp.add_argument("--clutter-density", type=float, default=0.1)
    sp.add_argument("--clutter-min", type=float, default=5.0)
    sp.add_argument("--clutter-max", type=float, default=15.0)
    sp.add_argument("--base-elevation", type=float, default=200.0)
    sp.add_argument("--prefix", default="")

    sp = add("simulate", cmd_simulate, "synthetic dataset over a receiver grid")
    sp.add_argument("config", help="simulation JSON (dsm, dhm, tx, grid, model, ...)")
    sp.add_argument("--model", choices=None)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--spacing", type=float)
    sp.add_argument("--n-points", type=int)
    sp.add_argument("--coverage", action="store_true", help="also write per-frequency .asc maps")

    sp = add("features", cmd_features, "feature vectors for listed receiver points")
    sp.add_argument("--dsm", required=True)
    sp.add_argument("--dhm", required=True)
    sp.add_argument("--points", required=True, help="CSV with header x,y")
    sp.add_argument("--tx-x", type=float, required=True)
    sp.add_argument("--tx-y", type=float, required=True)
    sp.add_argument("--tower-height", type=float, required=True)
    sp.add_argument("--freqs", type=lambda s: [float(v) for v in s.split(",")], required=True)
    sp.add_argument("--site", default="site")
    sp.add_argument("--radius", type=float, default=50.0)
    sp.add_argument("--rx-height", type=float, default=1.5)
    sp.add_argument("--include-blockage", action="store_true")

    sp = add("convert", cmd_convert, "RSRP logs to pathloss via estimated offsets")
    sp.add_argument("--measurements", required=True)
    sp.add_argument("--sim", required=True, help="sim_points.csv from 'simulate'")
    sp.add_argument("--max-dist", type=float)
    sp.add_argument("--dsm", help="raster whose cellsize sets the default match distance")
    sp.add_argument("--per", choices=["cell", "site"], default="cell")

    sp = add("train", cmd_train, "fit a boosted-tree model on dataset CSVs")
    sp.add_argument("data", nargs="+")
    sp.add_argument("--config", help="model config JSON (TrainConfig fields)")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--features", help="comma-separated feature names (overrides flags)")
    sp.add_argument("--no-freq", action="store_true")
    sp.add_argument("--include-blockage", action="store_true")
    sp.add_argument("--name", default="model.json")

    sp = add("eval", cmd_eval, "MAE of a model on a dataset CSV")
    sp.add_argument("model")
    sp.add_argument("data")

    sp = add("experiment", cmd_experiment, "run an experiment JSON (scenarios and sweep)")
    sp.add_argument("config")
    sp.add_argument("--seed", type=int)

    sp = add("demo", cmd_demo, "two-environment augmentation demo end to end")
    sp.add_argument("--seed", type=int, default=2024)
    sp.add_argument("--sweep", action="store_true", help="also run the repetition sweep")
    sp.add_argument("--model-config", help="override the default model config")
    return p


def _fail(exc: BaseException) -> int:
    kind = type(exc).__name__
    msg = str(exc).replace("\n", " ")
    print(json.dumps({"error": kind, "message": msg}), file=sys.stderr)
    return 2


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    warnings.simplefilter("ignore", DomainWarning)
    out = Outputs(Path(args.out), args.command)
    try:
        status = args.func(args, out)
        if status != "committed":
            out.commit()
    except (PathlossAugError, ValueError, KeyError, OSError) as exc:
        return _fail(exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
