"""Engineered radio and geographic features for a (transmitter, receiver, frequency) triple."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import OutOfBoundsError
from .propagation import blockage_for_freqs
from .terrain import Raster, TerrainStack, TxSite, sample_many

DEFAULT_RADIUS = 50.0
DEFAULT_RX_HEIGHT = 1.5

# canonical feature order; model feature_names are drawn from this list
FEATURE_NAMES = ("freq", "d_bs", "h_bs", "h_c", "roughness", "tx_haat", "alpha", "blockage")


@dataclass(frozen=True)
class FeatureVector:
    freq: float
    d_bs: float
    h_bs: float
    h_c: float
    roughness: float
    tx_haat: float
    alpha: float
    blockage: float | None = None

    def get(self, name: str) -> float:
        v = getattr(self, name)
        if v is None:
            raise KeyError(f"feature {name!r} not present")
        return v

    def as_dict(self) -> dict:
        return asdict(self)


def feature_names(include_freq: bool = True, include_blockage: bool = False) -> list[str]:
    names = list(FEATURE_NAMES[:-1])
    if not include_freq:
        names.remove("freq")
    if include_blockage:
        names.append("blockage")
    return names


def neighbors_within(raster: Raster, center, radius: float) -> np.ndarray:
    """Values of non-nodata cells whose centers lie within ``radius`` of ``center``.

    Returned in row-major (north-west first) cell order.
    """
    cx, cy = float(center[0]), float(center[1])
    if not raster.contains(cx, cy):
        raise OutOfBoundsError(f"center ({cx:.3f}, {cy:.3f}) outside raster bounds")
    if not radius > 0:
        raise ValueError("radius must be positive")
    cs = raster.cellsize
    c_lo = max(int(math.floor((cx - radius - raster.xll) / cs - 0.5)), 0)
    c_hi = min(int(math.ceil((cx + radius - raster.xll) / cs - 0.5)), raster.ncols - 1)
    r_lo = max(int(math.floor((raster.ytop - cy - radius) / cs - 0.5)), 0)
    r_hi = min(int(math.ceil((raster.ytop - cy + radius) / cs - 0.5)), raster.nrows - 1)
    cols = np.arange(c_lo, c_hi + 1)
    rows = np.arange(r_lo, r_hi + 1)
    dx = raster.xll + (cols + 0.5) * cs - cx
    dy = raster.yll + (raster.nrows - 1 - rows + 0.5) * cs - cy
    inside = dy[:, None] ** 2 + dx[None, :] ** 2 <= radius * radius
    block = raster.values[r_lo:r_hi + 1, c_lo:c_hi + 1]
    vals = block[inside & (block != raster.nodata)]
    if vals.size == 0:
        raise ValueError(
            f"no cells within {radius} m of ({cx:.3f}, {cy:.3f}); radius too small for the grid")
    return vals


def percentile(values, p: float) -> float:
    """Linear interpolation at rank ``p * (n - 1)`` of the sorted values."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("percentile of an empty list")
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    return float(np.quantile(values, p, method="linear"))


def tx_haat(stack: TerrainStack, tx: TxSite, radius: float = DEFAULT_RADIUS) -> float:
    """Transmitter antenna ASL minus the mean surface elevation around the transmitter."""
    g_tx = float(sample_many(stack.ground, [tx.x], [tx.y])[0])
    return (g_tx + tx.tower_height) - float(np.mean(neighbors_within(stack.dsm, (tx.x, tx.y), radius)))


class _SiteContext:
    """Per-transmitter quantities shared by every receiver."""

    def __init__(self, stack: TerrainStack, tx: TxSite, radius: float):
        if not stack.contains(tx.x, tx.y):
            raise OutOfBoundsError(f"transmitter {tx.site_id!r} at ({tx.x}, {tx.y}) outside raster")
        self.stack = stack
        self.tx = tx
        self.radius = radius
        self.tx_antenna = float(sample_many(stack.ground, [tx.x], [tx.y])[0]) + tx.tower_height
        self.haat = tx_haat(stack, tx, radius)

    def point(self, rx, g_rx: float) -> tuple[float, float, float, float]:
        d_bs = math.hypot(rx[0] - self.tx.x, rx[1] - self.tx.y)
        if d_bs == 0:
            raise ValueError("receiver coincides with the transmitter")
        h_bs = self.tx_antenna - g_rx
        h_c = float(np.mean(neighbors_within(self.stack.dhm, rx, self.radius)))
        gvals = neighbors_within(self.stack.ground, rx, self.radius)
        lo, hi = np.quantile(gvals, [0.10, 0.90], method="linear")
        return d_bs, h_bs, h_c, float(hi - lo)


def _vectors(ctx: _SiteContext, rx, g_rx, freqs, include_blockage, rx_height, step):
    d_bs, h_bs, h_c, rough = ctx.point(rx, g_rx)
    alpha = (h_bs - h_c) / d_bs
    if include_blockage:
        blk = blockage_for_freqs(ctx.stack, ctx.tx, rx, rx_height, freqs, step)
    else:
        blk = [None] * len(freqs)
    return [FeatureVector(float(f), d_bs, h_bs, h_c, rough, ctx.haat, alpha, b)
            for f, b in zip(freqs, blk)]


def compute_features(stack: TerrainStack, tx: TxSite, rx, freq: float,
                     radius: float = DEFAULT_RADIUS, include_blockage: bool = False,
                     rx_height: float = DEFAULT_RX_HEIGHT, step: float | None = None) -> FeatureVector:
    """Feature vector for one receiver point and frequency.

    ``d_bs`` is horizontal distance; ``h_bs`` is the transmitter antenna ASL
    above the receiver's ground; ``h_c`` and ``roughness`` (90th minus 10th
    percentile of ground) use cells within ``radius`` of the receiver;
    ``tx_haat`` averages the surface within ``radius`` of the transmitter.
    ``rx_height`` only enters the blockage geometry.
    """
    ctx = _SiteContext(stack, tx, radius)
    g_rx = float(sample_many(stack.ground, [rx[0]], [rx[1]])[0])
    return _vectors(ctx, rx, g_rx, [freq], include_blockage, rx_height, step)[0]


def batch_features(stack: TerrainStack, tx: TxSite, rx_points, freqs,
                   radius: float = DEFAULT_RADIUS, include_blockage: bool = False,
                   rx_height: float = DEFAULT_RX_HEIGHT, step: float | None = None,
                   per_point_freqs: bool = False) -> list[FeatureVector]:
    """Features for every (point, frequency) pair, point-major.

    With ``per_point_freqs`` the i-th frequency belongs to the i-th point
    only (used for measurement rows) instead of the full product.
    """
    freqs = [float(f) for f in freqs]
    if not freqs:
        raise ValueError("no frequencies")
    pts = np.asarray(rx_points, dtype=float).reshape(-1, 2)
    if per_point_freqs and len(freqs) != len(pts):
        raise ValueError("per_point_freqs needs one frequency per point")
    ctx = _SiteContext(stack, tx, radius)
    g_rx = sample_many(stack.ground, pts[:, 0], pts[:, 1]) if len(pts) else np.empty(0)
    out: list[FeatureVector] = []
    for i, (x, y) in enumerate(pts.tolist()):
        fs = [freqs[i]] if per_point_freqs else freqs
        out.extend(_vectors(ctx, (x, y), float(g_rx[i]), fs, include_blockage, rx_height, step))
    return out


def feature_matrix(vectors, names) -> np.ndarray:
    """Stack feature vectors into an ``(n, len(names))`` float array."""
    valid = {f.name for f in fields(FeatureVector)}
    for n in names:
        if n not in valid:
            raise KeyError(f"unknown feature {n!r}")
    if not vectors:
        return np.empty((0, len(names)))
    try:
        return np.array([[fv.get(n) for n in names] for fv in vectors], dtype=float)
    except KeyError as exc:
        raise KeyError(f"feature vectors lack {exc.args[0]}") from None
