"""Empirical pathloss models and first-Fresnel-zone blockage.

Distances are meters unless a function says otherwise, frequencies MHz,
losses dB. Inputs outside a model's recommended domain are still evaluated
but raise a :class:`~pathloss_aug.errors.DomainWarning`.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainWarning
from .terrain import TerrainStack, TxSite, extract_profile, sample

C_LIGHT = 299_792_458.0
FSPL_CONST = 20 * math.log10(4 * math.pi / C_LIGHT)  # -147.55 dB

SUI_TERRAIN = {
    "A": (4.6, 0.0075, 12.6),
    "B": (4.0, 0.0065, 17.1),
    "C": (3.6, 0.005, 20.0),
}
SUI_D0 = 100.0


def _positive(**kw):
    for name, v in kw.items():
        if not (v > 0):
            raise ValueError(f"{name} must be positive, got {v}")


def _domain(model: str, name: str, value: float, lo: float, hi: float, unit: str):
    if not lo <= value <= hi:
        warnings.warn(f"{model}: {name} outside recommended range [{lo}, {hi}] {unit}",
                      DomainWarning, stacklevel=3)


def wavelength(freq_mhz: float) -> float:
    return C_LIGHT / (freq_mhz * 1e6)


def fspl(distance: float, freq: float) -> float:
    """Free-space pathloss for ``distance`` meters at ``freq`` MHz."""
    _positive(distance=distance, freq=freq)
    return 20 * math.log10(distance) + 20 * math.log10(freq * 1e6) + FSPL_CONST


def cost231_hata(distance: float, freq: float, h_base: float, h_mobile: float,
                 env: str = "suburban") -> float:
    """COST-231 Hata pathloss; ``distance`` in km.

    ``env`` is "suburban" (C = 0 dB) or "metropolitan" (C = 3 dB). "rural"
    is accepted as suburban with a warning since the model defines only two
    area corrections.
    """
    _positive(distance=distance, freq=freq, h_base=h_base, h_mobile=h_mobile)
    if env == "rural":
        warnings.warn("cost231_hata: 'rural' mapped to suburban (C = 0 dB)", DomainWarning,
                      stacklevel=2)
        env = "suburban"
    if env == "suburban":
        c_m = 0.0
    elif env in ("metropolitan", "urban"):
        c_m = 3.0
    else:
        raise ValueError(f"unknown COST-231 environment {env!r}")
    _domain("cost231_hata", "freq", freq, 1500, 2000, "MHz")
    _domain("cost231_hata", "h_base", h_base, 30, 200, "m")
    _domain("cost231_hata", "h_mobile", h_mobile, 1, 10, "m")
    _domain("cost231_hata", "distance", distance, 0.02, 20, "km")
    lf = math.log10(freq)
    lh = math.log10(h_base)
    a_hm = (1.1 * lf - 0.7) * h_mobile - (1.56 * lf - 0.8)
    return (46.3 + 33.9 * lf - 13.82 * lh - a_hm
            + (44.9 - 6.55 * lh) * math.log10(distance) + c_m)


def sui(distance: float, freq: float, h_base: float, h_rx: float, terrain: str = "C",
        shadow_sigma: float = 0.0, rng: np.random.Generator | None = None) -> float:
    """Stanford University Interim model; ``distance`` in meters (>= 100 m).

    With ``shadow_sigma > 0`` a zero-mean log-normal shadowing term drawn
    from ``rng`` is added; the default is deterministic.
    """
    _positive(distance=distance, freq=freq, h_base=h_base, h_rx=h_rx)
    try:
        a, b, c = SUI_TERRAIN[terrain.upper()]
    except (KeyError, AttributeError):
        raise ValueError(f"unknown SUI terrain {terrain!r}; expected A, B or C") from None
    if distance < SUI_D0:
        raise ValueError(f"sui: distance {distance} m below reference distance {SUI_D0} m")
    _domain("sui", "h_base", h_base, 10, 80, "m")
    _domain("sui", "h_rx", h_rx, 2, 10, "m")
    lam = wavelength(freq)
    big_a = 20 * math.log10(4 * math.pi * SUI_D0 / lam)
    gamma = a - b * h_base + c / h_base
    xf = 6.0 * math.log10(freq / 2000)
    xh = (-20.0 if terrain.upper() == "C" else -10.8) * math.log10(h_rx / 2)
    pl = big_a + 10 * gamma * math.log10(distance / SUI_D0) + xf + xh
    if shadow_sigma > 0:
        if rng is None:
            raise ValueError("shadowing requires an explicit rng")
        pl += float(rng.normal(0.0, shadow_sigma))
    return pl


def fresnel_radius(d1, d2, freq: float):
    """First Fresnel zone radius (m) at distances ``d1``/``d2`` from the ends."""
    d1 = np.asarray(d1, dtype=float)
    d2 = np.asarray(d2, dtype=float)
    if np.any(d1 <= 0) or np.any(d2 <= 0) or not freq > 0:
        raise ValueError("fresnel_radius needs positive distances and frequency")
    r = np.sqrt(wavelength(freq) * (d1 * d2) / (d1 + d2))
    return float(r) if r.ndim == 0 else r


# ---------------------------------------------------------------- blockage

def _blocked_counts(dist, surface, tx_asl, rx_asl, freqs) -> list[int]:
    length = dist[-1]
    d = dist[1:-1]
    if d.size == 0:
        return [0 for _ in freqs]
    line = tx_asl + (rx_asl - tx_asl) * (d / length)
    s = surface[1:-1]
    counts = []
    for f in freqs:
        r1 = np.sqrt(wavelength(f) * d * (length - d) / length)
        counts.append(int(np.count_nonzero(s > line - 0.6 * r1)))
    return counts


def blockage_for_freqs(stack: TerrainStack, tx: TxSite, rx, rx_antenna: float,
                       freqs, step: float | None = None) -> list[float]:
    """:func:`blockage_distance` for several frequencies sharing one profile."""
    step = stack.dsm.cellsize if step is None else float(step)
    prof = extract_profile(stack, (tx.x, tx.y), rx, step)
    tx_asl = prof.ground[0] + tx.tower_height
    rx_asl = prof.ground[-1] + rx_antenna
    length = float(prof.distance[-1])
    counts = _blocked_counts(prof.distance, prof.surface, tx_asl, rx_asl, freqs)
    return [min(max(n * step, 0.0), length) for n in counts]


def blockage_distance(stack: TerrainStack, tx: TxSite, rx, rx_antenna: float, freq: float,
                      step: float | None = None) -> float:
    """Cumulative blockage distance from the 60% first-Fresnel-zone clearance test.

    Interior profile samples (the two antennas excluded) are blocked when the
    surface rises above the direct antenna-to-antenna line minus 0.6 of the
    local first Fresnel radius. Returns blocked count times ``step``, clamped
    to the horizontal path length. No earth curvature or refraction.
    """
    return blockage_for_freqs(stack, tx, rx, rx_antenna, [freq], step)[0]


# ---------------------------------------------------------------- dispatch

@dataclass(frozen=True)
class LinkGeometry:
    tx_antenna_asl: float
    rx_antenna_asl: float
    distance_2d: float
    freq: float

    def __post_init__(self):
        _positive(distance_2d=self.distance_2d, freq=self.freq)

    @property
    def slant_distance(self) -> float:
        return math.hypot(self.distance_2d, self.tx_antenna_asl - self.rx_antenna_asl)

    def base_height(self, rx_height: float, floor: float = 1.0) -> float:
        """Transmitter antenna height above the receiver's ground, at least ``floor``."""
        return max(self.tx_antenna_asl - (self.rx_antenna_asl - rx_height), floor)


def _fspl_model(g: LinkGeometry, **_):
    return fspl(g.slant_distance, g.freq)


def _cost231_model(g: LinkGeometry, rx_height=1.5, env="suburban", h_base=None, **_):
    hb = g.base_height(rx_height) if h_base is None else h_base
    return cost231_hata(g.distance_2d / 1000.0, g.freq, hb, rx_height, env)


def _sui_model(g: LinkGeometry, rx_height=1.5, terrain="C", h_base=None,
               shadow_sigma=0.0, rng=None, **_):
    hb = g.base_height(rx_height) if h_base is None else h_base
    return sui(g.distance_2d, g.freq, hb, rx_height, terrain, shadow_sigma, rng)


_MODELS: dict[str, Callable[..., float]] = {
    "fspl": _fspl_model,
    "cost231": _cost231_model,
    "sui": _sui_model,
}


def register_model(name: str, fn: Callable[..., float]) -> None:
    """Plug in an extra propagation model, called as ``fn(geometry, **params)``."""
    _MODELS[name] = fn


def available_models() -> list[str]:
    return sorted(_MODELS)


def model_pathloss(model: str, geometry: LinkGeometry, **params) -> float:
    """Pathloss from the named model.

    Unless ``h_base`` is given, COST-231 and SUI use the transmitter antenna
    height above the receiver's ground (floored at 1 m). FSPL uses the 3-D
    antenna-to-antenna distance.
    """
    try:
        fn = _MODELS[model]
    except KeyError:
        raise ValueError(
            f"unknown propagation model {model!r}; available: {available_models()}. "
            "Other models (e.g. eHata) plug in via register_model()") from None
    return fn(geometry, **params)


def link_geometry(stack: TerrainStack, tx: TxSite, rx, freq: float,
                  rx_height: float = 1.5) -> LinkGeometry:
    gt = sample(stack.ground, tx.x, tx.y)
    gr = sample(stack.ground, rx[0], rx[1])
    return LinkGeometry(gt + tx.tower_height, gr + rx_height,
                        math.hypot(rx[0] - tx.x, rx[1] - tx.y), freq)
