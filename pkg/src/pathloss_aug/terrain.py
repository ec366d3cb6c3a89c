"""Elevation rasters: ESRI ASCII grid I/O, sampling, profiles, synthetic terrain.

Rows are stored north to south, exactly as they appear in an ASCII grid
file. Cell ``(c, r)`` has its center at::

    x = xll + (c + 0.5) * cellsize
    y = yll + (nrows - 1 - r + 0.5) * cellsize

All coordinates are planar meters in one shared projected system.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import _core
from .errors import NodataError, OutOfBoundsError, RasterFormatError

DEFAULT_NODATA = -9999.0
_HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")


@dataclass(frozen=True, eq=False)
class Raster:
    ncols: int
    nrows: int
    xll: float
    yll: float
    cellsize: float
    nodata: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.ncols < 2 or self.nrows < 2:
            raise RasterFormatError(f"raster must be at least 2x2, got {self.ncols}x{self.nrows}")
        if not (self.cellsize > 0 and math.isfinite(self.cellsize)):
            raise RasterFormatError(f"cellsize must be positive, got {self.cellsize}")
        vals = np.array(self.values, dtype=np.float64, order="C", copy=True)
        if vals.shape != (self.nrows, self.ncols):
            raise RasterFormatError(
                f"values shape {vals.shape} does not match nrows={self.nrows}, ncols={self.ncols}")
        data = vals[vals != self.nodata]
        if not np.all(np.isfinite(data)):
            raise RasterFormatError("raster contains non-finite values")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def xmax(self) -> float:
        return self.xll + self.ncols * self.cellsize

    @property
    def ytop(self) -> float:
        return self.yll + self.nrows * self.cellsize

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return (self.xll, self.yll, self.xmax, self.ytop)

    @property
    def valid(self) -> np.ndarray:
        return self.values != self.nodata

    def contains(self, x, y) -> np.ndarray | bool:
        x = np.asarray(x)
        y = np.asarray(y)
        inside = (x >= self.xll) & (x <= self.xmax) & (y >= self.yll) & (y <= self.ytop)
        return bool(inside) if inside.ndim == 0 else inside

    def cell_center(self, col: int, row: int) -> tuple[float, float]:
        return (self.xll + (col + 0.5) * self.cellsize,
                self.yll + (self.nrows - 1 - row + 0.5) * self.cellsize)

    def cell_index(self, x, y):
        """Containing cell ``(col, row)``; points on the far edges map to the last cell."""
        col = np.clip(np.floor((np.asarray(x, float) - self.xll) / self.cellsize), 0, self.ncols - 1)
        row = np.clip(np.floor((self.ytop - np.asarray(y, float)) / self.cellsize), 0, self.nrows - 1)
        return col.astype(np.intp), row.astype(np.intp)

    def same_grid(self, other: "Raster") -> bool:
        return (self.ncols == other.ncols and self.nrows == other.nrows
                and self.xll == other.xll and self.yll == other.yll
                and self.cellsize == other.cellsize)

    def with_values(self, values: np.ndarray, nodata: float | None = None) -> "Raster":
        return Raster(self.ncols, self.nrows, self.xll, self.yll, self.cellsize,
                      self.nodata if nodata is None else nodata, values)

    def __eq__(self, other):
        if not isinstance(other, Raster):
            return NotImplemented
        return (self.same_grid(other) and self.nodata == other.nodata
                and np.array_equal(self.values, other.values))

    __hash__ = None


# ---------------------------------------------------------------- ASCII grid I/O

def load_ascii_grid(text: str) -> Raster:
    """Parse ESRI ASCII grid content.

    Header keys are case-insensitive; ``xllcenter``/``yllcenter`` are accepted
    and converted to corner coordinates. ``NODATA_value`` defaults to -9999.
    """
    lines = text.splitlines()
    header: dict[str, tuple[str, int]] = {}
    i = 0
    while i < len(lines):
        parts = lines[i].split()
        if not parts:
            i += 1
            continue
        key = parts[0].lower()
        if not key[0].isalpha() or key in ("nan", "inf", "infinity"):
            break
        if key not in _HEADER_KEYS + ("xllcenter", "yllcenter"):
            raise RasterFormatError(f"line {i + 1}: unknown header key {parts[0]!r}")
        if len(parts) != 2:
            raise RasterFormatError(f"line {i + 1}: header entry must be 'key value'")
        if key in header:
            raise RasterFormatError(f"line {i + 1}: duplicate header key {parts[0]!r}")
        header[key] = (parts[1], i + 1)
        i += 1

    def num(key, cast=float):
        raw, lineno = header[key]
        try:
            val = cast(raw)
        except ValueError:
            raise RasterFormatError(f"line {lineno}: {key} is not a valid number: {raw!r}") from None
        return val

    for key in ("ncols", "nrows", "cellsize"):
        if key not in header:
            raise RasterFormatError(f"missing required key {key!r}")
    if "xllcorner" not in header and "xllcenter" not in header:
        raise RasterFormatError("missing required key 'xllcorner'")
    if "yllcorner" not in header and "yllcenter" not in header:
        raise RasterFormatError("missing required key 'yllcorner'")

    ncols = num("ncols", int)
    nrows = num("nrows", int)
    cellsize = num("cellsize")
    xll = num("xllcorner") if "xllcorner" in header else num("xllcenter") - cellsize / 2
    yll = num("yllcorner") if "yllcorner" in header else num("yllcenter") - cellsize / 2
    nodata = num("nodata_value") if "nodata_value" in header else DEFAULT_NODATA

    tokens: list[str] = []
    token_line: list[int] = []
    for lineno in range(i, len(lines)):
        parts = lines[lineno].split()
        tokens.extend(parts)
        token_line.append(len(tokens))
    expected = ncols * nrows
    if len(tokens) != expected:
        raise RasterFormatError(
            f"line {len(lines)}: expected {expected} values ({nrows} rows x {ncols} cols), "
            f"found {len(tokens)}")
    try:
        values = np.array(tokens, dtype=np.float64)
    except ValueError:
        for k, tok in enumerate(tokens):
            try:
                float(tok)
            except ValueError:
                lineno = i + int(np.searchsorted(token_line, k, side="right")) + 1
                raise RasterFormatError(f"line {lineno}: non-numeric value {tok!r}") from None
        raise
    bad = ~np.isfinite(values) & (values != nodata)
    if bad.any():
        k = int(np.argmax(bad))
        lineno = i + int(np.searchsorted(token_line, k, side="right")) + 1
        raise RasterFormatError(f"line {lineno}: non-finite value {tokens[k]!r}")
    return Raster(ncols, nrows, xll, yll, cellsize, nodata, values.reshape(nrows, ncols))


def _fmt(v: float) -> str:
    s = repr(float(v))
    return s[:-2] if s.endswith(".0") else s


def save_ascii_grid(raster: Raster) -> str:
    """Serialize to ESRI ASCII grid text using shortest round-trip float repr."""
    out = [
        f"ncols {raster.ncols}",
        f"nrows {raster.nrows}",
        f"xllcorner {_fmt(raster.xll)}",
        f"yllcorner {_fmt(raster.yll)}",
        f"cellsize {_fmt(raster.cellsize)}",
        f"NODATA_value {_fmt(raster.nodata)}",
    ]
    for row in raster.values.tolist():
        out.append(" ".join(_fmt(v) for v in row))
    return "\n".join(out) + "\n"


def read_ascii_grid(path: str | Path) -> Raster:
    return load_ascii_grid(Path(path).read_text())


def write_ascii_grid(path: str | Path, raster: Raster) -> None:
    Path(path).write_text(save_ascii_grid(raster))


# ---------------------------------------------------------------- sampling

def sample_many(raster: Raster, xs, ys, mode: str = "bilinear") -> np.ndarray:
    """Vectorized :func:`sample`. Raises on any out-of-bounds or nodata query."""
    xs = np.ascontiguousarray(np.atleast_1d(np.asarray(xs, dtype=np.float64)))
    ys = np.ascontiguousarray(np.atleast_1d(np.asarray(ys, dtype=np.float64)))
    inside = raster.contains(xs, ys)
    if not np.all(inside):
        k = int(np.argmin(inside))
        raise OutOfBoundsError(
            f"point ({xs[k]:.3f}, {ys[k]:.3f}) outside raster bounds {raster.bounds}")
    if mode == "nearest":
        col, row = raster.cell_index(xs, ys)
        out = raster.values[row, col].copy()
        out[out == raster.nodata] = np.nan
    elif mode == "bilinear":
        out = _core.bilinear(raster.values, raster.nodata, raster.xll, raster.ytop,
                             raster.cellsize, xs, ys)
    else:
        raise ValueError(f"unknown sampling mode {mode!r}")
    if np.isnan(out).any():
        k = int(np.argmax(np.isnan(out)))
        raise NodataError(f"point ({xs[k]:.3f}, {ys[k]:.3f}) falls on a nodata cell")
    return out


def sample(raster: Raster, x: float, y: float, mode: str = "bilinear") -> float:
    """Raster value at ``(x, y)``.

    ``nearest`` returns the containing cell. ``bilinear`` blends the four
    surrounding cell centers, clamping to the edge within the outer half
    cell, and falls back to nearest when any of the four is nodata.
    """
    return float(sample_many(raster, [x], [y], mode)[0])


# ---------------------------------------------------------------- stacks

@dataclass(frozen=True, eq=False)
class TerrainStack:
    """Surface (DSM), clutter height (DHM) and derived ground on one grid."""

    dsm: Raster
    dhm: Raster
    ground: Raster

    @classmethod
    def from_rasters(cls, dsm: Raster, dhm: Raster) -> "TerrainStack":
        """Build a stack, clamping negative clutter heights to zero.

        Ground is ``dsm - dhm``; the stored surface is then recomputed as
        ``ground + dhm`` so the identity holds exactly in floating point
        (a change of at most one ulp from the input surface).
        """
        if not dsm.same_grid(dhm):
            raise RasterFormatError("DSM and DHM grids differ (ncols, nrows, origin or cellsize)")
        nodata = dsm.nodata
        mask = dsm.valid & dhm.valid
        h = np.where(mask, dhm.values, 0.0)
        neg = int(np.count_nonzero(h < 0))
        if neg:
            warnings.warn(f"clamped {neg} negative DHM cells to 0", stacklevel=2)
            h = np.maximum(h, 0.0)
        g = np.where(mask, dsm.values - h, nodata)
        s = np.where(mask, g + h, nodata)
        h = np.where(mask, h, nodata)
        return cls(dsm.with_values(s, nodata), dhm.with_values(h, nodata), dsm.with_values(g, nodata))

    @classmethod
    def from_ground(cls, template: Raster, ground: np.ndarray, clutter: np.ndarray) -> "TerrainStack":
        dsm = template.with_values(np.asarray(ground) + np.asarray(clutter))
        dhm = template.with_values(clutter)
        return cls.from_rasters(dsm, dhm)

    @property
    def grid(self) -> Raster:
        return self.dsm

    def contains(self, x, y):
        return self.dsm.contains(x, y)

    def shifted(self, dz: float) -> "TerrainStack":
        """Same stack with surface and ground raised by ``dz`` (clutter unchanged)."""
        valid = self.dsm.valid
        s = np.where(valid, self.dsm.values + dz, self.dsm.nodata)
        g = np.where(valid, self.ground.values + dz, self.dsm.nodata)
        return TerrainStack(self.dsm.with_values(s), self.dhm, self.ground.with_values(g))


@dataclass(frozen=True)
class TxSite:
    x: float
    y: float
    tower_height: float
    freqs: tuple[float, ...]
    site_id: str = "site"

    def __post_init__(self):
        if not self.tower_height > 0:
            raise ValueError(f"tower_height must be positive, got {self.tower_height}")
        freqs = tuple(float(f) for f in self.freqs)
        if not freqs:
            raise ValueError("a transmitter needs at least one frequency")
        for f in freqs:
            if not 0 < f < 100000:
                raise ValueError(f"frequency {f} MHz outside (0, 100000)")
        object.__setattr__(self, "freqs", freqs)

    def to_dict(self) -> dict:
        return {"site_id": self.site_id, "x": self.x, "y": self.y,
                "tower_height": self.tower_height, "freqs": list(self.freqs)}

    @classmethod
    def from_dict(cls, d: dict) -> "TxSite":
        return cls(x=float(d["x"]), y=float(d["y"]), tower_height=float(d["tower_height"]),
                   freqs=tuple(d.get("freqs", ())), site_id=str(d.get("site_id", "site")))


# ---------------------------------------------------------------- profiles

class Profile(NamedTuple):
    distance: np.ndarray
    ground: np.ndarray
    surface: np.ndarray

    def as_list(self) -> list[tuple[float, float, float]]:
        return list(zip(self.distance.tolist(), self.ground.tolist(), self.surface.tolist()))


def profile_distances(length: float, step: float) -> np.ndarray:
    """0, step, 2*step, ... strictly below ``length``, then ``length`` itself."""
    n = int(math.floor(length / step))
    d = np.arange(n + 1, dtype=np.float64) * step
    d = d[d < length * (1 - 1e-12)]
    return np.append(d, length)


def extract_profile(stack: TerrainStack, a, b, step: float | None = None) -> Profile:
    """Bilinear ground and surface samples along the segment ``a -> b``."""
    ax, ay = float(a[0]), float(a[1])
    bx, by = float(b[0]), float(b[1])
    step = stack.dsm.cellsize if step is None else float(step)
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    length = math.hypot(bx - ax, by - ay)
    if length == 0:
        raise ValueError("profile endpoints coincide")
    for px, py in ((ax, ay), (bx, by)):
        if not stack.contains(px, py):
            raise OutOfBoundsError(f"profile endpoint ({px:.3f}, {py:.3f}) outside raster bounds")
    d = profile_distances(length, step)
    frac = d / length
    xs = ax + (bx - ax) * frac
    ys = ay + (by - ay) * frac
    xs[-1], ys[-1] = bx, by
    ground = sample_many(stack.ground, xs, ys)
    surface = sample_many(stack.dsm, xs, ys)
    return Profile(d, ground, surface)


# ---------------------------------------------------------------- synthetic terrain

def _diamond_square(rng: np.random.Generator, size: int, roughness: float) -> np.ndarray:
    g = np.zeros((size, size))
    g[0, 0], g[0, -1], g[-1, 0], g[-1, -1] = rng.uniform(-1, 1, 4)
    step = size - 1
    scale = 1.0
    while step > 1:
        h = step // 2
        corners = (g[0:-1:step, 0:-1:step] + g[0:-1:step, step::step]
                   + g[step::step, 0:-1:step] + g[step::step, step::step])
        g[h::step, h::step] = corners / 4 + rng.uniform(-scale, scale, corners.shape)

        # diamond step: edge midpoints average their 3 or 4 axial neighbours
        padded = np.pad(g, h, constant_values=np.nan)
        for r0, c0 in ((h, 0), (0, h)):
            rows = np.arange(r0, size, step)
            cols = np.arange(c0, size, step)
            rr, cc = np.meshgrid(rows + h, cols + h, indexing="ij")
            nb = np.stack([padded[rr - h, cc], padded[rr + h, cc],
                           padded[rr, cc - h], padded[rr, cc + h]])
            mean = np.nansum(nb, axis=0) / np.sum(~np.isnan(nb), axis=0)
            g[np.ix_(rows, cols)] = mean + rng.uniform(-scale, scale, mean.shape)
        scale *= roughness
        step = h
    return g


def generate_synthetic_terrain(seed: int, size: int, cellsize: float, relief: float,
                               clutter_density: float,
                               clutter_height_range: tuple[float, float] = (5.0, 15.0),
                               *, base_elevation: float = 0.0, xll: float = 0.0,
                               yll: float = 0.0, roughness: float = 0.55) -> TerrainStack:
    """Diamond-square ground plus rectangular clutter blocks.

    Ground spans exactly ``relief`` meters above ``base_elevation``. Clutter
    blocks are added until about ``clutter_density`` of the cells are covered.
    The result depends only on the arguments.
    """
    if size < 3 or (size - 1) & (size - 2):
        raise ValueError(f"size must be 2**k + 1 (k >= 1), got {size}")
    if relief < 0:
        raise ValueError("relief must be non-negative")
    if not 0 <= clutter_density <= 1:
        raise ValueError("clutter_density must lie in [0, 1]")
    lo, hi = (float(v) for v in clutter_height_range)
    if lo < 0 or hi < lo:
        raise ValueError("clutter_height_range must satisfy 0 <= low <= high")

    rng = np.random.default_rng(seed)
    raw = _diamond_square(rng, size, roughness)
    span = raw.max() - raw.min()
    if relief == 0 or span == 0:
        ground = np.zeros_like(raw)
    else:
        ground = (raw - raw.min()) / span * relief
    ground = ground + base_elevation

    clutter = np.zeros_like(raw)
    target = clutter_density * size * size
    if target > 0:
        covered = np.zeros(raw.shape, dtype=bool)
        max_side = max(2, size // 16)
        for _ in range(200_000):
            if covered.sum() >= target:
                break
            w, h = rng.integers(2, max_side + 1, 2)
            r, c = rng.integers(0, size, 2)
            height = rng.uniform(lo, hi)
            block = (slice(r, min(r + h, size)), slice(c, min(c + w, size)))
            clutter[block] = np.maximum(clutter[block], height)
            covered[block] = True

    template = Raster(size, size, xll, yll, cellsize, DEFAULT_NODATA, np.zeros((size, size)))
    return TerrainStack.from_ground(template, ground, clutter)
