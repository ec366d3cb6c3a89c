"""Synthetic dataset generation over receiver grids."""
from __future__ import annotations

import csv
import io
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainWarning, OutOfBoundsError, SchemaError
from .features import (DEFAULT_RADIUS, DEFAULT_RX_HEIGHT, FeatureVector, _SiteContext,
                       _vectors)
from .measurements import SimPoint
from .propagation import SUI_D0, LinkGeometry, model_pathloss
from .terrain import DEFAULT_NODATA, Raster, TerrainStack, TxSite, sample_many

log = logging.getLogger(__name__)

DATASET_HEADER = ["site", "source", "freq_mhz", "d_bs_m", "h_bs_m", "h_c_m", "roughness_m",
                  "txhaat_m", "alpha", "blockage_m", "pathloss_db"]
_COLUMN_FEATURE = {"freq_mhz": "freq", "d_bs_m": "d_bs", "h_bs_m": "h_bs", "h_c_m": "h_c",
                   "roughness_m": "roughness", "txhaat_m": "tx_haat", "alpha": "alpha",
                   "blockage_m": "blockage"}


@dataclass(frozen=True)
class GridSpec:
    bounds: tuple[float, float, float, float]
    n_points: int | None = None
    spacing: float | None = None
    seed: int = 0

    def __post_init__(self):
        xmin, ymin, xmax, ymax = (float(v) for v in self.bounds)
        if not (xmax > xmin and ymax > ymin):
            raise ValueError(f"degenerate grid bounds {self.bounds}")
        object.__setattr__(self, "bounds", (xmin, ymin, xmax, ymax))
        if (self.n_points is None) == (self.spacing is None):
            raise ValueError("exactly one of n_points or spacing must be set")
        if self.n_points is not None and self.n_points < 1:
            raise ValueError("n_points must be positive")
        if self.spacing is not None and not self.spacing > 0:
            raise ValueError("spacing must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(tuple(d["bounds"]), d.get("n_points"), d.get("spacing"), int(d.get("seed", 0)))

    def to_dict(self) -> dict:
        d = {"bounds": list(self.bounds), "seed": self.seed}
        d["n_points" if self.n_points is not None else "spacing"] = (
            self.n_points if self.n_points is not None else self.spacing)
        return d

    def lattice_axes(self) -> tuple[np.ndarray, np.ndarray]:
        xmin, ymin, xmax, ymax = self.bounds
        nx = int(math.floor((xmax - xmin) / self.spacing + 1e-9)) + 1
        ny = int(math.floor((ymax - ymin) / self.spacing + 1e-9)) + 1
        return xmin + np.arange(nx) * self.spacing, ymin + np.arange(ny) * self.spacing


@dataclass(frozen=True)
class DatasetRow:
    features: FeatureVector
    pathloss: float
    site: str
    source: str
    x: float = math.nan
    y: float = math.nan

    def __post_init__(self):
        if self.source not in ("real", "synthetic"):
            raise ValueError(f"source must be 'real' or 'synthetic', got {self.source!r}")
        if not math.isfinite(self.pathloss):
            raise ValueError("pathloss must be finite")


class SimulationResult(list):
    """List of :class:`DatasetRow` that also records how many (point, freq) pairs were dropped."""

    def __init__(self, rows=(), dropped: int = 0, domain_warnings: int = 0):
        super().__init__(rows)
        self.dropped = dropped
        self.domain_warnings = domain_warnings


def generate_grid(spec: GridSpec, stack: TerrainStack) -> np.ndarray:
    """Receiver points as an ``(n, 2)`` array.

    Lattice mode steps ``spacing`` from ``(xmin, ymin)`` row by row (x fastest);
    random mode draws ``n_points`` seeded uniform points. Points on nodata
    cells are discarded.
    """
    xmin, ymin, xmax, ymax = spec.bounds
    if not (stack.contains(xmin, ymin) and stack.contains(xmax, ymax)):
        raise OutOfBoundsError(f"grid bounds {spec.bounds} not inside raster {stack.dsm.bounds}")
    if spec.spacing is not None:
        xs, ys = spec.lattice_axes()
        gx, gy = np.meshgrid(xs, ys)
        pts = np.column_stack([gx.ravel(), gy.ravel()])
    else:
        rng = np.random.default_rng(spec.seed)
        pts = np.column_stack([rng.uniform(xmin, xmax, spec.n_points),
                               rng.uniform(ymin, ymax, spec.n_points)])
    col, row = stack.dsm.cell_index(pts[:, 0], pts[:, 1])
    ok = stack.dsm.valid[row, col]
    if not ok.all():
        log.warning("discarded %d grid points on nodata cells", int((~ok).sum()))
        pts = pts[ok]
    if len(pts) == 0:
        raise ValueError("grid is empty after nodata filtering")
    return pts


def _simulate_chunk(ctx, pts, g_rx, freqs, model, params, include_blockage, rx_height, step):
    rows = []
    dropped = 0
    for (x, y), g in zip(pts.tolist(), g_rx.tolist()):
        d2 = math.hypot(x - ctx.tx.x, y - ctx.tx.y)
        if d2 == 0 or (model == "sui" and d2 < SUI_D0):
            dropped += len(freqs)
            continue
        vectors = _vectors(ctx, (x, y), g, freqs, include_blockage, rx_height, step)
        for fv in vectors:
            geom = LinkGeometry(ctx.tx_antenna, g + rx_height, fv.d_bs, fv.freq)
            pl = model_pathloss(model, geom, rx_height=rx_height, **params)
            rows.append(DatasetRow(fv, pl, ctx.tx.site_id, "synthetic", x, y))
    return rows, dropped


def simulate_site(stack: TerrainStack, tx: TxSite, grid, freqs, model: str = "fspl",
                  model_params: dict | None = None, radius: float = DEFAULT_RADIUS,
                  include_blockage: bool = False, rx_height: float = DEFAULT_RX_HEIGHT,
                  step: float | None = None, threads: int = 1) -> SimulationResult:
    """One synthetic row per (grid point, frequency), point-major.

    Features come from the terrain; pathloss from ``model``. FSPL uses the
    3-D antenna separation while the ``d_bs`` feature stays horizontal.
    Points closer than 100 m are dropped for SUI.
    """
    freqs = [float(f) for f in freqs]
    if not freqs:
        raise ValueError("no frequencies")
    pts = np.asarray(grid, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("empty receiver grid")
    params = dict(model_params or {})
    params.pop("rx_height", None)
    ctx = _SiteContext(stack, tx, radius)
    g_rx = sample_many(stack.ground, pts[:, 0], pts[:, 1])

    threads = max(1, int(threads))
    chunks = np.array_split(np.arange(len(pts)), min(threads * 4, len(pts)) if threads > 1 else 1)
    job = lambda idx: _simulate_chunk(ctx, pts[idx], g_rx[idx], freqs, model, params,  # noqa: E731
                                      include_blockage, rx_height, step)
    # the filter state is process-wide, so worker warnings land in this record too
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DomainWarning)
        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                parts = list(pool.map(job, chunks))
        else:
            parts = [job(idx) for idx in chunks]
    rows = [r for part in parts for r in part[0]]
    dropped = sum(p[1] for p in parts)
    n_warn = sum(issubclass(w.category, DomainWarning) for w in caught)
    for w in caught:
        if not issubclass(w.category, DomainWarning):
            warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
    if dropped:
        log.info("site %s: dropped %d (point, freq) pairs", tx.site_id, dropped)
    if n_warn:
        log.info("site %s: %d out-of-domain model evaluations", tx.site_id, n_warn)
    return SimulationResult(rows, dropped, n_warn)


def sim_points(rows) -> list[SimPoint]:
    return [SimPoint(r.x, r.y, r.features.freq, r.pathloss) for r in rows]


def coverage_raster(rows, spec: GridSpec, freq: float) -> Raster:
    """Pathloss at lattice points as a raster whose cell centers are the lattice."""
    if spec.spacing is None:
        raise ValueError("coverage rasters need a lattice grid")
    xs, ys = spec.lattice_axes()
    vals = np.full((len(ys), len(xs)), DEFAULT_NODATA)
    x0, y0 = xs[0], ys[0]
    for r in rows:
        if abs(r.features.freq - freq) > 1e-6:
            continue
        c = int(round((r.x - x0) / spec.spacing))
        k = int(round((r.y - y0) / spec.spacing))
        vals[len(ys) - 1 - k, c] = r.pathloss
    half = spec.spacing / 2
    return Raster(len(xs), len(ys), x0 - half, y0 - half, spec.spacing, DEFAULT_NODATA, vals)


# ---------------------------------------------------------------- CSV

def _num(v) -> str:
    return "" if v is None else repr(float(v))


def write_dataset(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DATASET_HEADER)
    for r in rows:
        f = r.features
        w.writerow([r.site, r.source, _num(f.freq), _num(f.d_bs), _num(f.h_bs), _num(f.h_c),
                    _num(f.roughness), _num(f.tx_haat), _num(f.alpha), _num(f.blockage),
                    _num(r.pathloss)])
    return buf.getvalue()


def read_dataset(text: str) -> list[DatasetRow]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("dataset CSV is empty") from None
    if header != DATASET_HEADER:
        raise SchemaError(f"dataset CSV header must be {','.join(DATASET_HEADER)}, "
                          f"got {','.join(header)}")
    rows = []
    for lineno, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != len(DATASET_HEADER):
            raise SchemaError(f"line {lineno}: expected {len(DATASET_HEADER)} fields, got {len(rec)}")
        d = dict(zip(DATASET_HEADER, rec))
        try:
            vals = {feat: (float(d[col]) if d[col] != "" else None)
                    for col, feat in _COLUMN_FEATURE.items()}
            pl = float(d["pathloss_db"])
        except ValueError:
            raise SchemaError(f"line {lineno}: non-numeric field") from None
        missing = [k for k, v in vals.items() if v is None and k != "blockage"]
        if missing:
            raise SchemaError(f"line {lineno}: empty required field(s) {missing}")
        for k, v in vals.items():
            if v is not None and not math.isfinite(v):
                raise SchemaError(f"line {lineno}: non-finite {k}")
        try:
            rows.append(DatasetRow(FeatureVector(**vals), pl, d["site"], d["source"]))
        except ValueError as exc:
            raise SchemaError(f"line {lineno}: {exc}") from None
    return rows


SIM_POINTS_HEADER = ["x", "y", "freq_mhz", "pathloss_db"]


def write_sim_points(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SIM_POINTS_HEADER)
    for r in rows:
        w.writerow([repr(r.x), repr(r.y), repr(r.features.freq), repr(r.pathloss)])
    return buf.getvalue()


def read_sim_points(text: str) -> list[SimPoint]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != SIM_POINTS_HEADER:
        raise SchemaError(f"sim points CSV header must be {','.join(SIM_POINTS_HEADER)}")
    out = []
    for lineno, rec in enumerate(reader, start=2):
        if not rec:
            continue
        try:
            out.append(SimPoint(*(float(v) for v in rec)))
        except (TypeError, ValueError):
            raise SchemaError(f"line {lineno}: expected 4 numeric fields") from None
    return out
