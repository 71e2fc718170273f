"""Labelled spectrogram datasets: synthetic generation and the feature file codec."""

from .dataset import Dataset
from .features import FEATURE_MAGIC, decode_features, encode_features, load_features, save_features
from .synthetic import generate_synthetic

__all__ = [
    "FEATURE_MAGIC",
    "Dataset",
    "decode_features",
    "encode_features",
    "generate_synthetic",
    "load_features",
    "save_features",
]
