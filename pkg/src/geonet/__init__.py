"""Randomized single-hidden-layer networks grown under a compact angle constraint."""

from .constructor import (Fallback, PoolPolicy, Status, TrainConfig, TrainTrace, Variant, gamma,
                          parse_scopes, train)
from .data import Dataset, NormStats, gen_function, gen_grinding_surrogate, load_csv, normalize, split
from .model import GeoNet, HiddenNode, predict

__all__ = [
    "Dataset", "Fallback", "GeoNet", "HiddenNode", "NormStats", "PoolPolicy", "Status", "TrainConfig",
    "TrainTrace", "Variant", "gamma", "gen_function", "gen_grinding_surrogate", "load_csv", "normalize",
    "parse_scopes", "predict", "split", "train",
]
__version__ = "0.1.0"
