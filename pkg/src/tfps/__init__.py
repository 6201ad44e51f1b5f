"""Dual-domain patch forecasting with subspace-clustered pattern experts and a
Wasserstein patch-drift analyzer."""

from .config import TrainConfig, config_from_dict, config_from_json
from .data import (
    ForecastWindow,
    MultivariateSeries,
    RegimeSpec,
    Scaler,
    SynthSpec,
    apply_scaler,
    fit_scaler,
    invert_scaler,
    load_csv,
    make_windows,
    save_csv,
    split,
    synth_generate,
)
from .drift import DriftMatrix, average_wasserstein, patch_distance_matrix, spectrum, wasserstein_1d
from .errors import DataError, NumericError
from .model import TFPSModel
from .patching import PatchSet, patch_count, segment
from .trainer import Checkpoint, grid_search, load_checkpoint, save_checkpoint, total_loss, train

__version__ = "0.1.0"

__all__ = [
    "Checkpoint",
    "DataError",
    "DriftMatrix",
    "ForecastWindow",
    "MultivariateSeries",
    "NumericError",
    "PatchSet",
    "RegimeSpec",
    "Scaler",
    "SynthSpec",
    "TFPSModel",
    "TrainConfig",
    "apply_scaler",
    "average_wasserstein",
    "config_from_dict",
    "config_from_json",
    "fit_scaler",
    "grid_search",
    "invert_scaler",
    "load_csv",
    "load_checkpoint",
    "make_windows",
    "patch_count",
    "patch_distance_matrix",
    "save_checkpoint",
    "save_csv",
    "segment",
    "spectrum",
    "split",
    "synth_generate",
    "total_loss",
    "train",
    "wasserstein_1d",
]
