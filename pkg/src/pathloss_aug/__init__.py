"""Pathloss prediction from terrain features, empirical models and boosted trees,
with simulated data used to augment sparse field measurements."""
from __future__ import annotations

__version__ = "0.1.0"

from ._core import BACKEND
from .errors import (ConfigError, DomainWarning, ModelFormatError, NodataError,
                     OutOfBoundsError, PathlossAugError, RasterFormatError, SchemaError)
from .features import FEATURE_NAMES, FeatureVector, batch_features, compute_features, feature_names
from .gbm import GbmModel, TrainConfig, fit, load_model, mae, save_model
from .measurements import (RsrpMeasurement, SiteOffset, earfcn_to_freq, estimate_offset,
                           estimate_offsets, match_to_simulation, read_measurements,
                           rsrp_to_pathloss)
from .pipeline import ExperimentConfig, repetition_sweep, run_experiment, run_scenario, split
from .propagation import (blockage_distance, cost231_hata, fresnel_radius, fspl, model_pathloss,
                          register_model, sui)
from .simulate import DatasetRow, GridSpec, generate_grid, read_dataset, simulate_site, write_dataset
from .terrain import (Raster, TerrainStack, TxSite, extract_profile, generate_synthetic_terrain,
                      load_ascii_grid, sample, save_ascii_grid)

__all__ = [n for n in dir() if not n.startswith("_")]
