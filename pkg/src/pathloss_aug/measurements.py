"""RSRP measurement ingest, per-site offset estimation and RSRP -> pathloss conversion.

Received power and pathloss are related by ``rsrp = -pathloss + delta``
where ``delta`` lumps transmit power, antenna gain and cable loss. The
offset is estimated as the mean of ``rsrp + simulated_pathloss`` over
co-located simulation points.
"""
from __future__ import annotations

import csv
import io
import json
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import SchemaError

MEASUREMENT_HEADER = ["x", "y", "rsrp_dbm", "earfcn", "freq_mhz", "cell_id", "site_id"]
RSRP_RANGE = (-160.0, -30.0)
FREQ_MATCH_TOL = 0.1

# LTE downlink bands: (band, F_DL_low MHz, N_Offs-DL, last EARFCN)
LTE_BANDS = (
    (2, 1930.0, 600, 1199),
    (4, 2110.0, 1950, 2399),
    (5, 869.0, 2400, 2649),
    (12, 729.0, 5010, 5179),
    (13, 746.0, 5180, 5279),
    (17, 734.0, 5730, 5849),
    (25, 1930.0, 8040, 8689),
    (26, 859.0, 8690, 9039),
    (30, 2350.0, 9770, 9869),
    (41, 2496.0, 39650, 41589),
    (66, 2110.0, 66436, 67335),
)


def earfcn_to_freq(earfcn: int) -> float:
    """Downlink center frequency (MHz) of an LTE EARFCN."""
    n = int(earfcn)
    for band, f_low, n_offs, n_hi in LTE_BANDS:
        if n_offs <= n <= n_hi:
            return round(f_low + 0.1 * (n - n_offs), 1)
    ranges = ", ".join(f"band {b}: {lo}-{hi}" for b, _, lo, hi in LTE_BANDS)
    raise ValueError(f"EARFCN {n} is not in a supported downlink band ({ranges})")


def earfcn_band(earfcn: int) -> int:
    for band, _, n_offs, n_hi in LTE_BANDS:
        if n_offs <= earfcn <= n_hi:
            return band
    raise ValueError(f"EARFCN {earfcn} is not in a supported downlink band")


@dataclass(frozen=True)
class RsrpMeasurement:
    x: float
    y: float
    rsrp: float
    freq: float
    cell_id: str = ""
    site_id: str = ""
    earfcn: int | None = None

    @property
    def key(self) -> tuple[str, str]:
        return (self.site_id, self.cell_id)


@dataclass(frozen=True)
class SiteOffset:
    site_id: str
    delta: float
    n_samples: int
    residual_std: float
    cell_id: str | None = None

    def to_dict(self) -> dict:
        d = {"site_id": self.site_id}
        if self.cell_id:
            d["cell_id"] = self.cell_id
        d.update(delta_db=self.delta, n_samples=self.n_samples,
                 residual_std_db=self.residual_std)
        return d


# ---------------------------------------------------------------- CSV

def read_measurements(text: str) -> list[RsrpMeasurement]:
    """Parse measurement CSV (header ``x,y,rsrp_dbm,earfcn,freq_mhz,cell_id,site_id``)."""
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or list(reader.fieldnames) != MEASUREMENT_HEADER:
        raise SchemaError(f"measurement CSV header must be {','.join(MEASUREMENT_HEADER)}, "
                          f"got {','.join(reader.fieldnames or [])}")
    out = []
    for row in reader:
        line = reader.line_num
        try:
            x, y, rsrp = float(row["x"]), float(row["y"]), float(row["rsrp_dbm"])
        except (TypeError, ValueError):
            raise SchemaError(f"row {line}: x, y and rsrp_dbm must be numbers") from None
        if not (math.isfinite(x) and math.isfinite(y)):
            raise SchemaError(f"row {line}: non-finite coordinates")
        if not RSRP_RANGE[0] <= rsrp <= RSRP_RANGE[1]:
            raise SchemaError(f"row {line}: rsrp {rsrp} dBm outside sanity band {RSRP_RANGE}")
        e_raw = (row["earfcn"] or "").strip()
        f_raw = (row["freq_mhz"] or "").strip()
        if not e_raw and not f_raw:
            raise SchemaError(f"row {line}: one of earfcn or freq_mhz is required")
        earfcn = None
        try:
            if e_raw:
                earfcn = int(e_raw)
                freq = earfcn_to_freq(earfcn)
                if f_raw and abs(float(f_raw) - freq) > FREQ_MATCH_TOL:
                    raise SchemaError(f"row {line}: freq_mhz {f_raw} disagrees with EARFCN {earfcn}")
            else:
                freq = float(f_raw)
        except ValueError as exc:
            raise SchemaError(f"row {line}: {exc}") from None
        out.append(RsrpMeasurement(x, y, rsrp, freq, (row["cell_id"] or "").strip(),
                                   (row["site_id"] or "").strip(), earfcn))
    return out


def write_measurements(measurements: Iterable[RsrpMeasurement]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MEASUREMENT_HEADER)
    for m in measurements:
        w.writerow([repr(m.x), repr(m.y), repr(m.rsrp), "" if m.earfcn is None else m.earfcn,
                    "" if m.earfcn is not None else repr(m.freq), m.cell_id, m.site_id])
    return buf.getvalue()


# ---------------------------------------------------------------- matching

@dataclass(frozen=True)
class SimPoint:
    x: float
    y: float
    freq: float
    pathloss: float


@dataclass
class MatchResult:
    pairs: list[tuple[RsrpMeasurement, float]]
    dropped: int


def match_to_simulation(measurements: Sequence[RsrpMeasurement], sim_points: Sequence,
                        max_dist: float) -> MatchResult:
    """Pair each measurement with its nearest same-frequency simulation point.

    Frequencies match within 0.1 MHz. Among equidistant candidates the one
    with the lowest (x, y) wins. Measurements with no candidate within
    ``max_dist`` are dropped and counted.
    """
    from scipy.spatial import cKDTree

    if not measurements or not sim_points:
        raise ValueError("match_to_simulation needs non-empty measurements and sim points")
    sims = np.array([(p[0], p[1], p[2], p[3]) if not isinstance(p, SimPoint)
                     else (p.x, p.y, p.freq, p.pathloss) for p in sim_points], dtype=float)
    # canonical order makes the result independent of the input permutation
    sims = sims[np.lexsort((sims[:, 3], sims[:, 1], sims[:, 0], sims[:, 2]))]
    freqs = np.unique(sims[:, 2])
    trees = {}
    pairs = []
    dropped = 0
    for m in measurements:
        cand = freqs[np.abs(freqs - m.freq) <= FREQ_MATCH_TOL + 1e-9]
        best = None
        for f in cand:
            if f not in trees:
                sel = sims[sims[:, 2] == f]
                trees[f] = (cKDTree(sel[:, :2]), sel)
            tree, sel = trees[f]
            idx = tree.query_ball_point((m.x, m.y), max_dist * (1 + 1e-12) + 1e-9)
            for k in idx:
                sx, sy, _, pl = sel[k]
                d2 = (sx - m.x) ** 2 + (sy - m.y) ** 2
                if d2 > max_dist * max_dist:
                    continue
                key = (d2, sx, sy, pl)
                if best is None or key < best:
                    best = key
        if best is None:
            dropped += 1
        else:
            pairs.append((m, float(best[3])))
    if not pairs:
        raise ValueError(f"no measurement matched a simulation point within {max_dist} m; "
                         "offset is undefined")
    return MatchResult(pairs, dropped)


# ---------------------------------------------------------------- offsets

def estimate_offset(pairs: Sequence[tuple[float, float]], site_id: str = "",
                    cell_id: str | None = None) -> SiteOffset:
    """Mean of ``rsrp + sim_pathloss`` over ``(rsrp, sim_pathloss)`` pairs."""
    if len(pairs) == 0:
        raise ValueError("estimate_offset needs at least one pair")
    deltas = np.array([r + pl for r, pl in pairs], dtype=float)
    std = float(np.std(deltas, ddof=1)) if deltas.size > 1 else 0.0
    return SiteOffset(site_id, float(np.mean(deltas)), int(deltas.size), std, cell_id)


def estimate_offsets(match: MatchResult, per: str = "cell") -> dict[tuple[str, str | None], SiteOffset]:
    """Offsets grouped per (site, cell) or per site.

    ``per="cell"`` groups by cell when a cell id is present and falls back to
    the site otherwise.
    """
    if per not in ("cell", "site"):
        raise ValueError("per must be 'cell' or 'site'")
    groups: dict[tuple[str, str | None], list[tuple[float, float]]] = defaultdict(list)
    for m, pl in match.pairs:
        cell = m.cell_id if (per == "cell" and m.cell_id) else None
        groups[(m.site_id, cell)].append((m.rsrp, pl))
    return {k: estimate_offset(v, k[0], k[1]) for k, v in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1] or ""))}


def offset_for(m: RsrpMeasurement, offsets: dict) -> SiteOffset:
    off = offsets.get((m.site_id, m.cell_id or None)) or offsets.get((m.site_id, None))
    if off is None:
        raise KeyError(f"no offset for site {m.site_id!r} cell {m.cell_id!r}")
    return off


def rsrp_to_pathloss(m: RsrpMeasurement, offset: SiteOffset) -> float:
    """Pathloss (dB) = offset - RSRP."""
    if offset.site_id != m.site_id:
        raise ValueError(f"offset for site {offset.site_id!r} applied to site {m.site_id!r}")
    return offset.delta - m.rsrp


def offsets_json(offsets: Iterable[SiteOffset]) -> str:
    return json.dumps([o.to_dict() for o in offsets], indent=2) + "\n"
